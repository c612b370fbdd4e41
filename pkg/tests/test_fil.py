import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fisherloss import fil, glm, oracle
from fisherloss.dataset import Dataset
from fisherloss.glm import LossKind

matrices = hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 7)),
                      elements=st.floats(-10, 10, allow_nan=False))


def test_cross_jacobian_hand_values():
    np.testing.assert_allclose(fil.cross_jacobian(LossKind.SQUARED, [0.5], [1.0], 1.0), [[0.0, -1.0]])
    x = np.array([0.2, -0.7])
    C = fil.cross_jacobian(LossKind.SQUARED, np.zeros(2), x, 0.0)
    np.testing.assert_array_equal(C[:, :2], 0.0)
    np.testing.assert_array_equal(C[:, 2], -x)


@settings(max_examples=30)
@given(st.sampled_from(list(LossKind)), st.integers(0, 10_000))
def test_cross_jacobian_matches_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    d = 3
    w, x, y = rng.standard_normal(d), rng.standard_normal(d), float(rng.standard_normal())
    h = 1e-6
    cols = []
    for c in range(d + 1):
        e = np.zeros(d + 1)
        e[c] = h
        gp = glm.loss_gradient_w(kind, w, x + e[:d], y + e[d])
        gm = glm.loss_gradient_w(kind, w, x - e[:d], y - e[d])
        cols.append((gp - gm) / (2 * h))
    fd = np.stack(cols, axis=1)
    C = fil.cross_jacobian(kind, w, x, y)
    assert np.linalg.norm(fd - C) <= 1e-6 * max(np.linalg.norm(C), 1.0)


def test_hessian_examples(unit, reg100):
    p = glm.fit_linear(unit, 1.0)
    assert fil.hessian_full(unit, p).matrix[0, 0] == pytest.approx(2.0)
    lam = 1e-2
    p0 = glm.ModelParams(LossKind.LOGISTIC, np.zeros(reg100.d), lam, np.ones(reg100.n), 0.0, 1.0)
    H = fil.hessian_full(reg100, p0).matrix
    np.testing.assert_allclose(H, 0.25 * reg100.X.T @ reg100.X + reg100.n * lam * np.eye(reg100.d))


def test_indefinite_hessian_is_reported(reg100):
    p = glm.ModelParams(LossKind.SQUARED, np.zeros(reg100.d), -1.0, np.ones(reg100.n), 0.0, 1.0)
    with pytest.raises(fil.IndefiniteHessianError):
        fil.hessian_full(reg100, p)


def test_hand_jacobian(unit):
    p = glm.fit_linear(unit, 1.0)
    J = fil.example_jacobian(unit, p, 0)
    np.testing.assert_allclose(J, [[0.0, 0.5]], atol=1e-12)
    np.testing.assert_allclose(fil.full_jacobian(unit, p), J)
    fd = oracle.fd_jacobian(glm.Trainer(LossKind.SQUARED, 1.0), unit, 0, 1e-4)
    np.testing.assert_allclose(fd, [[0.0, 0.5]], atol=1e-6)


def test_zero_weight_gives_zero_jacobian(reg100):
    w = np.ones(reg100.n)
    w[3] = 0.0
    p = glm.fit_linear(reg100, 1e-2, w)
    np.testing.assert_array_equal(fil.example_jacobian(reg100, p, 3), 0.0)


def test_unconverged_params_are_refused(reg100):
    p = glm.ModelParams(LossKind.SQUARED, np.ones(reg100.d), 1e-3, np.ones(reg100.n), 1.0, 1e-8)
    with pytest.raises(ValueError, match="stationary"):
        fil.example_jacobian(reg100, p, 0)


def test_full_jacobian_layout(reg100, reg100_params):
    Jf = fil.full_jacobian(reg100, reg100_params)
    assert Jf.shape == (reg100.d, reg100.size)
    for i in (0, 17, 99):
        Ji = fil.example_jacobian(reg100, reg100_params, i)
        np.testing.assert_allclose(Jf[:, reg100.example_indices(i)], Ji)
        np.testing.assert_allclose(Jf[:, reg100.flat_index(i, reg100.d)], Ji[:, -1])


def test_full_jacobian_columns_against_retraining(reg100, reg100_params):
    Jf = fil.full_jacobian(reg100, reg100_params)
    trainer = oracle.oracle_trainer(reg100_params)
    rng = np.random.default_rng(0)
    for k in rng.choice(reg100.size, 5, replace=False):
        i, j = reg100.unflatten(int(k))
        fd = oracle.fd_jacobian(trainer, reg100, i, coordinates=[j])[:, 0]
        assert oracle.relative_error(Jf[:, k], fd) <= 1e-5


def test_fim_examples():
    J = np.array([[0.0, 0.5]])
    np.testing.assert_allclose(fil.fim(J, 1.0).matrix, [[0.0, 0.0], [0.0, 0.25]])
    np.testing.assert_allclose(fil.fim(J, 2.0).matrix, fil.fim(J, 1.0).matrix / 4)
    assert fil.fil_eta(J, 1.0).eta == pytest.approx(0.5, abs=1e-12)
    assert fil.fil_eta(J, 2.0).eta == pytest.approx(0.25, abs=1e-12)
    # power iteration stops once the Ritz value changes by <= 1e-8 relative
    assert fil.fil_eta(np.diag([3.0, 4.0]), 1.0).eta == pytest.approx(4.0, rel=1e-8)


def test_zero_jacobian_has_zero_eta():
    assert fil.fil_eta(np.zeros((3, 4)), 1.0).eta == 0.0
    assert fil.spectral_norms(np.zeros((2, 3, 4))).tolist() == [0.0, 0.0]


def test_power_iteration_cap_error():
    J = np.diag([1.0, 1.0 - 1e-6, 0.5])
    with pytest.raises(fil.PowerIterationError) as err:
        fil.spectral_norm(J, tol=1e-16, max_iter=3)
    assert len(err.value.ritz) == 2


@settings(max_examples=60)
@given(matrices)
def test_power_iteration_matches_svd(J):
    ref = np.linalg.norm(J, 2)
    assert fil.spectral_norm(J) == pytest.approx(ref, rel=1e-6, abs=1e-12)


@settings(max_examples=60)
@given(matrices, st.floats(0.01, 100.0), st.floats(0.1, 10.0))
def test_sigma_scaling(J, sigma, c):
    a = fil.fil_eta(J, sigma).eta
    b = fil.fil_eta(J, c * sigma).eta
    assert b == pytest.approx(a / c, rel=1e-12, abs=1e-300)


@settings(max_examples=60)
@given(matrices, st.data())
def test_subset_dominance(J, data):
    full = fil.fim(J, 1.0)
    m = J.shape[1]
    S = data.draw(st.lists(st.integers(0, m - 1), min_size=1, max_size=m, unique=True))
    sub = fil.subset_fim(full, S)
    assert np.sqrt(np.linalg.eigvalsh(sub.matrix).max()) <= np.sqrt(np.linalg.eigvalsh(full.matrix).max()) + 1e-8


@settings(max_examples=60)
@given(matrices)
def test_fim_symmetric_psd(J):
    M = fil.fim(J, 0.7).matrix
    np.testing.assert_array_equal(M, M.T)
    assert np.linalg.eigvalsh(M).min() >= -1e-8 * max(1.0, np.abs(M).max())


@settings(max_examples=40)
@given(matrices, st.integers(1, 6))
def test_composition_of_identical_releases(J, k):
    f = fil.fim(J, 1.0)
    total = fil.compose([f] * k)
    np.testing.assert_allclose(total.matrix, k * f.matrix, rtol=1e-12)
    assert total.eta == pytest.approx(np.sqrt(k) * f.eta, rel=1e-8, abs=1e-12)


@settings(max_examples=40)
@given(matrices, matrices)
def test_composition_triangle_bound(A, B):
    m = min(A.shape[1], B.shape[1])
    fa, fb = fil.fim(A[:, :m], 1.0), fil.fim(B[:, :m], 1.0)
    combined = fil.compose([fa, fb]).eta
    assert combined <= np.sqrt(fa.eta**2 + fb.eta**2) * (1 + 1e-8) + 1e-12


@settings(max_examples=40)
@given(matrices, st.data())
def test_coordinate_post_processing(J, data):
    k = data.draw(st.integers(0, J.shape[0] - 1))
    row = fil.fim(J[[k]], 1.0)
    assert row.norm <= fil.fim(J, 1.0).norm * (1 + 1e-8) + 1e-12


def test_compose_single_and_mismatch():
    f = fil.fim(np.array([[1.0, 2.0]]), 1.0)
    np.testing.assert_array_equal(fil.compose([f]).matrix, f.matrix)
    g = fil.fim(np.array([[1.0, 2.0]]), 1.0, index=[4, 5])
    with pytest.raises(ValueError, match="mismatched"):
        fil.compose([f, g])


def test_subset_identity_and_errors():
    f = fil.fim(np.random.default_rng(0).standard_normal((2, 4)), 1.0)
    np.testing.assert_array_equal(fil.subset_fim(f, range(4)).matrix, f.matrix)
    with pytest.raises(ValueError):
        fil.subset_fim(f, [1, 1])
    with pytest.raises(IndexError):
        fil.subset_fim(f, [9])


def test_two_path_consistency(reg100, reg100_params):
    full = fil.full_fim(reg100, reg100_params, 1.3)
    for i in (0, 50, 99):
        a = fil.subset_fim(full, reg100.example_indices(i)).matrix
        b = fil.fim(fil.example_jacobian(reg100, reg100_params, i), 1.3).matrix
        assert oracle.relative_error(a, b) <= 1e-10
    pairs = fil.subset_fim(full, reg100.example_indices(2)).pairs()
    assert pairs == [(2, j) for j in range(reg100.d + 1)]


def test_full_fim_cap(reg100, reg100_params):
    with pytest.raises(ValueError, match="cap"):
        fil.full_fim(reg100, reg100_params, 1.0, cap=10)
    a = fil.full_eta(reg100, reg100_params, 1.0).eta
    b = fil.full_fim(reg100, reg100_params, 1.0).eta
    assert a == pytest.approx(b, rel=1e-6)


def test_example_and_attribute_etas(reg100, reg100_params):
    etas = fil.example_etas(reg100, reg100_params, 1.0)
    Js = fil.example_jacobians(reg100, reg100_params)
    np.testing.assert_allclose(etas, [np.linalg.norm(J, 2) for J in Js], rtol=1e-7)
    sub = fil.example_etas(reg100, reg100_params, 1.0, coordinates=[reg100.d])
    np.testing.assert_allclose(sub, np.linalg.norm(Js[:, :, -1], axis=1), rtol=1e-7)
    j = fil.attribute_eta(reg100, reg100_params, 1.0, 2)
    assert j.eta == pytest.approx(np.linalg.norm(Js[:, :, 2].T, 2), rel=1e-7)
    full = fil.full_fim(reg100, reg100_params, 1.0)
    assert j.eta == pytest.approx(fil.subset_fim(full, reg100.attribute_indices(2)).eta, rel=1e-6)


def test_rank_deficiency_is_exposed(reg100, reg100_params):
    f = fil.fim(fil.example_jacobian(reg100, reg100_params, 0), 1.0)
    assert f.rank <= reg100.d < f.matrix.shape[0]


def test_single_example_full_equals_example(unit):
    p = glm.fit_linear(unit, 1.0)
    assert fil.full_eta(unit, p, 1.0).eta == pytest.approx(0.5, abs=1e-10)
    assert fil.example_etas(unit, p, 1.0)[0] == pytest.approx(0.5, abs=1e-10)
