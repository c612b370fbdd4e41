import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fisherloss import fil, glm, irfil, synthbench
from fisherloss.dataset import Dataset

positive = st.floats(1e-3, 1e3, allow_nan=False)


def test_weight_update_example():
    np.testing.assert_allclose(irfil.weight_update([1.0, 1.0], [1.0, 3.0]), [1.5, 0.5])


def test_equal_etas_fixed_point():
    np.testing.assert_allclose(irfil.weight_update([1.6, 0.4], [0.7, 0.7]), [1.6, 0.4])
    # weights that do not yet sum to n keep their ratios and are rescaled
    np.testing.assert_allclose(irfil.weight_update([2.0, 0.5], [0.7, 0.7]), [1.6, 0.4])


@given(hnp.arrays(float, st.integers(1, 40), elements=positive), positive)
def test_fixed_point_property(w, eta):
    w = w * w.size / w.sum()
    np.testing.assert_allclose(irfil.weight_update(w, np.full(w.size, eta)), w, rtol=1e-12)


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    hnp.arrays(float, n, elements=positive), hnp.arrays(float, n, elements=positive))))
def test_update_normalizes_to_n(pair):
    w, eta = pair
    new = irfil.weight_update(w, eta)
    assert new.sum() == pytest.approx(w.size, abs=1e-8)
    assert np.all(new > 0)


def test_zero_eta_is_an_error():
    with pytest.raises(ValueError, match="zero FIL"):
        irfil.weight_update([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        irfil.weight_update([1.0, 0.0], [1.0, 1.0])


def test_single_round_is_the_unweighted_audit(reg100):
    trace = irfil.run_irfil(reg100, "squared", 1e-3, 1.0, 1, seed=0)
    p = glm.fit_linear(reg100, 1e-3)
    np.testing.assert_allclose(trace.etas[0], fil.example_etas(reg100, p, 1.0))
    np.testing.assert_array_equal(trace.weights[0], 1.0)
    assert len(trace.weights) == 2 and len(trace.releases) == 1


def test_identical_examples_keep_unit_weights():
    ds = Dataset(X=np.tile([[0.6, 0.8]], (10, 1)), y=np.ones(10))
    trace = irfil.run_irfil(ds, "squared", 1e-2, 1.0, 3, seed=0)
    for e in trace.etas:
        np.testing.assert_allclose(e, e[0], rtol=1e-12)
    np.testing.assert_allclose(trace.weights[-1], 1.0, rtol=1e-12)


def test_heteroskedastic_convergence():
    ds = synthbench.gen_regression(200, 5, seed=0)
    trace = irfil.run_irfil(ds, "squared", 0.0, 1.0, 10, seed=0)
    cv = trace.eta_cv
    assert cv[0] > 0.2
    assert np.all(np.diff(cv[:5]) < 0)
    assert cv.min() < 0.01


def test_trace_invariants_and_report(cls100):
    trace = irfil.run_irfil(cls100, "logistic", 1e-2, 0.5, 4, seed=3)
    for w in trace.weights[1:]:
        assert w.sum() == pytest.approx(cls100.n, abs=1e-8)
        assert np.all(w > 0)
    lines = trace.to_jsonl().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[2])
    assert rec["iteration"] == 2 and rec["stream"] == [2] and rec["seed"] == 3
    assert rec["eta_mean"] == pytest.approx(trace.etas[2].mean())
    assert trace.final.sigma == 0.5
    assert trace.final_params is trace.models[-1]
    np.testing.assert_array_equal(trace.models[-1].weights, trace.weights[-2])


def test_release_noise_does_not_change_etas(reg100):
    a = irfil.run_irfil(reg100, "squared", 1e-3, 1.0, 3, seed=0)
    b = irfil.run_irfil(reg100, "squared", 1e-3, 1.0, 3, seed=99)
    np.testing.assert_array_equal(a.etas[-1], b.etas[-1])
    assert not np.array_equal(a.final.w_prime, b.final.w_prime)


def test_early_stop(reg100):
    trace = irfil.run_irfil(reg100, "squared", 1e-3, 1.0, 50, seed=0, early_stop_cv=0.05)
    assert len(trace.etas) < 50
    assert trace.eta_cv[-1] < 0.05


def test_solver_failure_carries_iteration(cls100, monkeypatch):
    real = glm.fit_logistic
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 3:
            raise glm.ConvergenceError("boom", 1.0)
        return real(*args, **kwargs)

    monkeypatch.setattr(glm, "fit_logistic", flaky)
    with pytest.raises(glm.ConvergenceError, match="iteration 2"):
        irfil.run_irfil(cls100, "logistic", 1e-2, 1.0, 5, seed=0)


def test_argument_checks(reg100):
    with pytest.raises(ValueError):
        irfil.run_irfil(reg100, "squared", 1e-3, 1.0, 0, seed=0)
    with pytest.raises(ValueError):
        irfil.run_irfil(reg100, "squared", 1e-3, 0.0, 1, seed=0)
