"""Seeded synthetic datasets for self-contained experiments.

Every generator returns unit-ball-normalized data.
"""
from __future__ import annotations

import numpy as np

from .attacks import AttackTask
from .dataset import ColumnSpec, Dataset, FeatureSpec, RawTable, encode, normalize_unit_ball


def _check(n: int, d: int) -> None:
    if d < 1:
        raise ValueError("d must be >= 1")
    if n < d + 1:
        raise ValueError(f"need n >= d + 1 (n={n}, d={d})")


def gen_regression(
    n: int,
    d: int,
    noise: float = 0.3,
    heteroskedasticity: float = 2.0,
    seed: int = 0,
    targets: str = "real",
    leverage_points: int = 0,
) -> Dataset:
    """Linear data whose noise scale grows with the first feature.

    Row norms are spread out (log-normal radii) and the noise standard
    deviation of example ``i`` is ``noise * (1 + heteroskedasticity * |x_i0|)``
    before normalization. ``targets="sign"`` keeps only the sign of the noisy
    response, giving {-1, 1} labels.

    ``leverage_points`` replaces that many rows by points three times
    farther out than a typical row, placed exactly on the least-squares fit
    of the other rows. The unregularized minimizer is unchanged by them, so
    they have zero loss, yet their FIL is high.
    """
    _check(n, d)
    if targets not in ("real", "sign"):
        raise ValueError("targets must be 'real' or 'sign'")
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(d)
    beta /= np.linalg.norm(beta)
    X = rng.standard_normal((n, d)) * np.exp(0.5 * rng.standard_normal(n))[:, None]
    std = noise * (1.0 + heteroskedasticity * np.abs(X[:, 0]))
    y = X @ beta + std * rng.standard_normal(n)
    if leverage_points:
        if not 0 < leverage_points <= n // 10:
            raise ValueError("leverage_points must lie in [0, n // 10]")
        rows = rng.choice(n, size=leverage_points, replace=False)
        rest = np.setdiff1d(np.arange(n), rows)
        w_ls = np.linalg.lstsq(X[rest], y[rest], rcond=None)[0]
        u = rng.standard_normal((leverage_points, d))
        X[rows] = 3.0 * np.sqrt(d) * u / np.linalg.norm(u, axis=1, keepdims=True)
        y[rows] = X[rows] @ w_ls
    if targets == "sign":
        y = np.where(y >= 0, 1.0, -1.0)
    return normalize_unit_ball(Dataset(X=X, y=y))


def holdout(generator, n: int, n_test: int, **kwargs) -> tuple[Dataset, Dataset]:
    """Draw ``n + n_test`` rows from ``generator`` and split off the last ``n_test``.

    Both parts share one unit-ball normalization.
    """
    ds = generator(n + n_test, **kwargs)
    return ds.take(np.arange(n)), ds.take(np.arange(n, n + n_test))


def gen_classification(n: int, d: int, margin: float = 0.0, seed: int = 0) -> Dataset:
    """Binary {0, 1} labels from a noisy linear rule.

    ``margin > 0`` pushes each point away from the true boundary by that
    distance (in raw units), making the classes separable for large margins.
    """
    _check(n, d)
    if margin < 0:
        raise ValueError("margin must be non-negative")
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(d)
    beta /= np.linalg.norm(beta)
    X = rng.standard_normal((n, d))
    y = (X @ beta + rng.logistic(size=n) > 0).astype(float)
    X = X + margin * (2 * y - 1)[:, None] * beta[None, :]
    return normalize_unit_ball(Dataset(X=X, y=y))


def attack_spec(d: int, candidate_count: int) -> FeatureSpec:
    columns = {f"x{j}": ColumnSpec("numeric") for j in range(d)}
    columns["attr"] = ColumnSpec("nominal", tuple(f"v{k}" for k in range(candidate_count)))
    columns["y"] = ColumnSpec("numeric")
    return FeatureSpec(columns, target="y", target_attribute="attr")


def gen_attack_raw(
    n: int,
    d: int,
    candidate_count: int = 3,
    effect_size: float = 1.0,
    seed: int = 0,
    noise: float = 0.5,
    heteroskedasticity: float = 2.0,
) -> RawTable:
    """Raw table with ``d`` numeric columns, a planted nominal ``attr`` and a numeric target."""
    if candidate_count < 2:
        raise ValueError("candidate_count must be >= 2")
    _check(n, d + candidate_count - 1)
    rng = np.random.default_rng(seed)
    prior = np.arange(candidate_count, 0, -1, dtype=float)
    prior /= prior.sum()
    codes = rng.choice(candidate_count, size=n, p=prior)
    shift = np.linspace(-1.0, 1.0, candidate_count)
    beta = rng.standard_normal(d)
    beta /= np.linalg.norm(beta)
    X = rng.standard_normal((n, d)) * np.exp(0.5 * rng.standard_normal(n))[:, None]
    std = noise * (1.0 + heteroskedasticity * np.abs(X[:, 0]))
    y = X @ beta + effect_size * shift[codes] + std * rng.standard_normal(n)
    values = {f"x{j}": X[:, j] for j in range(d)}
    values["attr"] = codes.astype(np.int64)
    values["y"] = y
    return RawTable(values)


def gen_attack_task(
    n: int,
    d: int,
    candidate_count: int = 3,
    effect_size: float = 1.0,
    seed: int = 0,
    **kwargs,
) -> tuple[Dataset, AttackTask]:
    """Regression data with a planted nominal attribute that shifts the target.

    The attribute's value moves the response by ``effect_size`` times one of
    ``candidate_count`` evenly spaced offsets, so for ``effect_size != 0``
    each candidate yields a distinct minimizer.
    """
    spec = attack_spec(d, candidate_count)
    raw = gen_attack_raw(n, d, candidate_count, effect_size, seed, **kwargs)
    ds = normalize_unit_ball(encode(raw, spec))
    return ds, AttackTask.for_attribute(ds, "attr")
