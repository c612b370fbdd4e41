"""Brute-force and Monte-Carlo checks of the analytic FIL machinery.

These routines deliberately avoid the implicit-differentiation path: the
Jacobian oracle retrains the model, the Fisher oracle averages sampled score
outer products, and the variance experiment measures an actual estimator.
"""
from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np

from . import fil, glm
from .dataset import Dataset
from .glm import LossKind, ModelParams, Trainer
from .mechanism import rng_for, score

DEFAULT_STEP = 1e-4
ORACLE_GRAD_TOL_PER_EXAMPLE = 1e-12


def oracle_trainer(params: ModelParams) -> Trainer:
    """A trainer matching ``params`` with the logistic tolerance tightened for FD use."""
    tol = ORACLE_GRAD_TOL_PER_EXAMPLE * params.weights.size if params.kind is LossKind.LOGISTIC else None
    return Trainer(params.kind, params.lam, params.weights, tol, check_targets=False)


def fd_jacobian(
    trainer: Callable[[Dataset], np.ndarray],
    ds: Dataset,
    i: int,
    step: float = DEFAULT_STEP,
    coordinates: Sequence[int] | None = None,
) -> np.ndarray:
    """Central-difference Jacobian of the retrained minimizer in ``(x_i, y_i)``.

    Returns a d x (d+1) matrix (or d x len(coordinates)); column ``c`` is
    ``(f(z + step e_c) - f(z - step e_c)) / (2 step)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    cols = range(ds.d + 1) if coordinates is None else coordinates
    out = []
    for c in cols:
        pair = []
        for sgn in (1.0, -1.0):
            X, y = np.array(ds.X), np.array(ds.y)
            if c == ds.d:
                y[i] += sgn * step
            else:
                X[i, c] += sgn * step
            pair.append(trainer(ds.with_rows(X=X, y=y)))
        out.append((pair[0] - pair[1]) / (2.0 * step))
    return np.stack(out, axis=1)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius ``||a - b|| / ||b||`` (absolute error when ``b`` is zero)."""
    nb = float(np.linalg.norm(b))
    diff = float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    return diff / nb if nb > 0 else diff


@dataclasses.dataclass(frozen=True)
class MonteCarloFim:
    matrix: np.ndarray
    mean_score: np.ndarray
    score_se: np.ndarray
    samples: int


def mc_fim(J: np.ndarray, sigma: float, samples: int, seed: int, w_star=None) -> MonteCarloFim:
    """Average outer product of data-space scores of sampled releases.

    Each sample draws ``w' = w* + sigma g``, evaluates the parameter score
    ``(w' - w*) / sigma^2`` and pulls it back to the data as ``J^T score``.
    """
    if samples < 1000:
        raise ValueError("use at least 1000 samples")
    J = np.atleast_2d(np.asarray(J, dtype=float))
    d = J.shape[0]
    w_star = np.zeros(d) if w_star is None else np.asarray(w_star, dtype=float)
    w_prime = w_star + sigma * rng_for(seed).standard_normal((samples, d))
    S = score(w_prime, w_star, sigma) @ J  # samples x m
    M = S.T @ S / samples
    return MonteCarloFim(
        matrix=0.5 * (M + M.T),
        mean_score=S.mean(axis=0),
        score_se=S.std(axis=0, ddof=1) / np.sqrt(samples),
        samples=samples,
    )


@dataclasses.dataclass(frozen=True)
class BlueResult:
    empirical_variance: float
    cramer_rao: float
    bias: float
    bias_se: float
    trials: int


def blue_variance_experiment(
    ds: Dataset,
    i: int,
    sigma: float,
    trials: int,
    seed: int,
    lam: float = 0.0,
    weights=None,
    coordinate: int | None = None,
) -> BlueResult:
    """Variance of the best linear unbiased estimate of ``y_i`` from a release.

    Linear regression only. The minimizer is affine in ``y_i``:
    ``w*(y_i) = a + c y_i``, with ``a`` and ``c`` obtained by retraining (the
    adversary knows every other value). The estimator is
    ``c^T (w' - a) / ||c||^2`` with variance ``sigma^2 / ||c||^2``; the
    Cramér-Rao value is ``1 / eta^2`` for the scalar FIL of ``y_i`` taken
    from the analytic Fisher matrix.
    """
    if coordinate is not None and coordinate != ds.d:
        raise ValueError("only the target coordinate y_i (coordinate d) is supported")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    trainer = Trainer(LossKind.SQUARED, lam, weights)
    params = trainer.fit(ds)
    y0, y1 = np.array(ds.y), np.array(ds.y)
    y0[i], y1[i] = 0.0, 1.0
    a = trainer(ds.with_rows(y=y0))
    c = trainer(ds.with_rows(y=y1)) - a

    J = fil.example_jacobian(ds, params, i)
    eta2 = fil.fim(J[:, [ds.d]], sigma).matrix[0, 0]
    if eta2 == 0.0 or not np.any(c):
        return BlueResult(np.nan, np.inf, np.nan, np.nan, trials)

    g = rng_for(seed).standard_normal((trials, ds.d))
    w_prime = params.w + sigma * g
    est = (w_prime - a) @ c / (c @ c)
    return BlueResult(
        empirical_variance=float(est.var(ddof=1)),
        cramer_rao=float(1.0 / eta2),
        bias=float(est.mean() - ds.y[i]),
        bias_se=float(est.std(ddof=1) / np.sqrt(trials)),
        trials=trials,
    )


def block_inversion_gap(M: np.ndarray, block: Sequence[int]) -> float:
    """Smallest eigenvalue of ``[M^{-1}]_SS - ([M]_SS)^{-1}``."""
    block = np.asarray(block, dtype=np.int64)
    inv_block = np.linalg.inv(M)[np.ix_(block, block)]
    block_inv = np.linalg.inv(M[np.ix_(block, block)])
    D = inv_block - block_inv
    return float(np.linalg.eigvalsh(0.5 * (D + D.T)).min())


def random_spd(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random correlated SPD matrix with condition number well below 1e6."""
    A = rng.standard_normal((dim, dim))
    return A @ A.T + 1e-2 * dim * np.eye(dim)


def pd_block_inversion_check(dim: int, block: int | Sequence[int], seed: int, draws: int = 100) -> float:
    """Worst smallest-eigenvalue gap over ``draws`` random SPD matrices.

    ``block`` is either a size (leading principal block) or explicit indices.
    """
    idx = np.arange(block) if isinstance(block, (int, np.integer)) else np.asarray(block)
    rng = rng_for(seed)
    return min(block_inversion_gap(random_spd(dim, rng), idx) for _ in range(draws))


def jacobian_diagnostics(
    ds: Dataset,
    params: ModelParams,
    examples: Sequence[int],
    step: float = DEFAULT_STEP,
    tol: float | None = None,
) -> list[dict]:
    """Analytic vs finite-difference Jacobians for selected examples."""
    if tol is None:
        tol = 1e-5 if params.kind is LossKind.SQUARED else 1e-4
    trainer = oracle_trainer(params)
    H = fil.hessian_full(ds, params)
    out = []
    for i in examples:
        analytic = fil.example_jacobian(ds, params, int(i), H)
        numeric = fd_jacobian(trainer, ds, int(i), step)
        err = relative_error(analytic, numeric)
        out.append({
            "check": "jacobian",
            "example": int(i),
            "analytic_norm": float(np.linalg.norm(analytic)),
            "oracle_norm": float(np.linalg.norm(numeric)),
            "relative_error": err,
            "tolerance": tol,
            "pass": bool(err <= tol),
        })
    return out


def fim_diagnostic(J: np.ndarray, sigma: float, samples: int, seed: int, tol: float = 0.03) -> dict:
    """Analytic FIM vs the Monte-Carlo estimate, plus the zero-mean score check."""
    analytic = fil.fim(J, sigma).matrix
    mc = mc_fim(J, sigma, samples, seed)
    err = relative_error(mc.matrix, analytic)
    se = np.where(mc.score_se > 0, mc.score_se, 1.0)
    z = float(np.max(np.abs(mc.mean_score) / se))
    return {
        "check": "monte_carlo_fim",
        "samples": samples,
        "relative_error": err,
        "tolerance": tol,
        "max_score_z": z,
        "pass": bool(err <= tol and z <= 3.0),
    }
