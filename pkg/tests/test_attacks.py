import numpy as np
import pytest

from fisherloss import attacks, glm, irfil, synthbench
from fisherloss.attacks import AttackTask


@pytest.fixture(scope="module")
def small_task():
    return synthbench.gen_attack_task(60, 3, 3, effect_size=1.0, seed=4)


def test_task_from_dataset(attack300):
    ds, task = attack300
    assert task.attribute == "attr" and task.size == 3
    assert task.span == ds.groups["attr"]
    counts = np.bincount(ds.codes["attr"], minlength=3)
    np.testing.assert_allclose(task.prior, counts / counts.sum())
    x = task.rewrite(ds.X[0], 2, ds.scale)
    np.testing.assert_array_equal(x[list(task.span)], 0.0)
    x = task.rewrite(ds.X[0], 1, ds.scale)
    np.testing.assert_allclose(x[list(task.span)], [0.0, ds.scale])


def test_rewrite_reproduces_the_encoding(attack300):
    ds, task = attack300
    for i in range(20):
        np.testing.assert_allclose(task.rewrite(ds.X[i], int(ds.codes["attr"][i]), ds.scale), ds.X[i], atol=1e-15)


def test_single_candidate_returns_it(small_task):
    ds, _ = small_task
    task = AttackTask("attr", ("only",), (), np.array([1.0]))
    assert attacks.whitebox_invert(ds, task, 0, np.zeros(ds.d), trainer=None) == 0


def test_whitebox_zero_noise_recovers_truth(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    trainer = glm.Trainer.like(params)
    for i in range(10):
        assert attacks.whitebox_invert(ds, task, i, params.w, trainer) == ds.codes["attr"][i]


def test_failed_candidate_scores_infinite(small_task, caplog):
    ds, task = small_task

    def trainer(d):
        if d.X[0, task.span[0]] > 0:
            raise glm.ConvergenceError("nope", 1.0)
        return glm.fit_linear(d, 1e-2).w

    models = attacks.candidate_models(ds, task, 0, trainer)
    assert np.all(np.isinf(models[0])) and np.all(np.isfinite(models[1:]))
    assert "failed to train" in caplog.text
    assert attacks.whitebox_invert(ds, task, 0, np.zeros(ds.d), trainer, models) in (1, 2)


def test_blackbox_cases():
    task = AttackTask("a", ("p", "q", "r"), (0, 1), np.ones(3) / 3)
    w = np.array([1.0, -1.0, 0.5])
    x = np.array([0.0, 0.0, 0.2])
    predict = lambda z: float(z @ w)
    perf = attacks.gaussian_performance(0.3)
    for y in (1.1, -0.9, 0.1):
        pred = attacks.blackbox_invert(task, x, y, predict, task.prior, perf)
        errs = [abs(predict(task.rewrite(x, v, 1.0)) - y) for v in range(3)]
        assert pred == int(np.argmin(errs))
    assert attacks.blackbox_invert(task, x, 5.0, predict, [0.0, 1.0, 0.0], perf) == 1
    const = lambda pred, y: 1.0
    assert attacks.blackbox_invert(task, x, 0.0, predict, [0.2, 0.5, 0.3], const) == 1
    with pytest.raises(ValueError, match="zero mass"):
        attacks.blackbox_invert(task, x, 0.0, predict, [0.0, 0.0, 0.0], const)
    # all likelihoods underflow: fall back to the prior
    assert attacks.blackbox_invert(task, x, 1e6, predict, [0.2, 0.5, 0.3], perf) == 1


def test_baseline_cases():
    assert attacks.baseline_invert([0.7, 0.3]) == 0
    assert attacks.baseline_invert([0.25] * 4) == 0
    assert attacks.baseline_invert([0.1, 0.6, 0.3]) == 1


def test_decile_partition():
    etas = np.array([5.0, 1.0, 3.0, 3.0, 2.0, 9.0, 0.5, 7.0, 8.0, 6.0, 4.0])
    groups = attacks.decile_groups(etas)
    assert len(groups) == 10
    assert sorted(np.concatenate(groups).tolist()) == list(range(11))
    flat = [etas[g].max() for g in groups[:-1]]
    assert all(a <= etas[b].min() for a, b in zip(flat, groups[1:]))


def test_evaluate_whitebox_zero_noise(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    res = attacks.evaluate_attack(ds, task, params, "whitebox", 1, 0.0, seed=0)
    assert res.accuracy == 1.0
    assert res.predictions.shape == (1, ds.n)


def test_evaluate_baseline_is_modal_frequency(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    res = attacks.evaluate_attack(ds, task, params, "baseline", 3, 1.0, seed=0)
    counts = np.bincount(ds.codes["attr"])
    assert res.accuracy == pytest.approx(counts.max() / counts.sum())
    assert res.accuracy_std == 0.0


def test_blackbox_constant_equivalent_and_runs(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    res = attacks.evaluate_attack(ds, task, params, "blackbox", 4, 0.01, seed=0)
    assert 0.0 <= res.accuracy <= 1.0
    assert res.accuracy > attacks.evaluate_attack(ds, task, params, "baseline", 1, 0.0, seed=0).accuracy


def test_deciles_do_not_depend_on_noise(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    a = attacks.evaluate_attack(ds, task, params, "whitebox", 3, 0.05, seed=0)
    b = attacks.evaluate_attack(ds, task, params, "whitebox", 3, 0.5, seed=1)
    for ga, gb in zip(a.deciles, b.deciles):
        np.testing.assert_array_equal(ga, gb)
    d = a.to_dict()
    assert len(d["deciles"]) == 10 and d["trials"] == 3


def test_threads_do_not_change_results(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    a = attacks.evaluate_attack(ds, task, params, "whitebox", 5, 0.05, seed=2, threads=1)
    b = attacks.evaluate_attack(ds, task, params, "whitebox", 5, 0.05, seed=2, threads=4)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_two_candidates_drift_towards_half():
    ds, task = synthbench.gen_attack_task(120, 3, 2, effect_size=1.0, seed=1)
    params = glm.fit_linear(ds, 1e-2)
    accs = [attacks.evaluate_attack(ds, task, params, "whitebox", 20, s, seed=0).accuracy for s in (1e-3, 1e-1, 10.0)]
    assert accs[0] > accs[1] > accs[2]
    assert abs(accs[2] - 0.5) < 0.1


def test_unidentifiable_attribute():
    ds, task = synthbench.gen_attack_task(300, 4, 3, effect_size=0.0, seed=0)
    params = glm.fit_linear(ds, 1e-2)
    run = lambda attack: attacks.evaluate_attack(ds, task, params, attack, 1, 0.0, seed=0).accuracy
    # predictions carry no signal about the attribute, so black-box is the baseline
    assert run("blackbox") == pytest.approx(run("baseline"))
    assert run("baseline") == pytest.approx(task.prior.max())
    # an exact minimizer still moves with x_i, so white-box wins at sigma = 0
    assert run("whitebox") == 1.0


def test_argument_checks(small_task):
    ds, task = small_task
    params = glm.fit_linear(ds, 1e-2)
    with pytest.raises(ValueError):
        attacks.evaluate_attack(ds, task, params, "whitebox", 0, 0.1, seed=0)
    with pytest.raises(ValueError):
        attacks.evaluate_attack(ds, task, params, "nope", 1, 0.1, seed=0)
    with pytest.raises(ValueError):
        AttackTask.for_attribute(ds, "x0")
