"""Weighted L2-regularized linear and logistic regression.

The objective is

    sum_i omega_i * loss(w . x_i, y_i) + (n * lam / 2) * ||w||^2

so ``lam`` is a per-example regularization strength: a published value such
as ``lam = 1e-2`` multiplies ``n`` before it reaches the Hessian.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from typing import Any, Sequence

import numpy as np
import scipy.linalg
from scipy.special import expit

from .dataset import Dataset


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


class ConvergenceError(RuntimeError):
    """Solver stopped before reaching its gradient tolerance."""

    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


def default_grad_tol(n: int) -> float:
    return 1e-10 * max(n, 1)


@dataclasses.dataclass(frozen=True)
class ModelParams:
    kind: LossKind
    w: np.ndarray
    lam: float
    weights: np.ndarray
    grad_norm: float
    grad_tol: float
    iterations: int = 0

    @property
    def converged(self) -> bool:
        return bool(self.grad_norm <= self.grad_tol)

    def to_dict(self) -> dict[str, Any]:
        return {
            "loss": self.kind.value,
            "w": self.w.tolist(),
            "lam": self.lam,
            "weights": self.weights.tolist(),
            "convergence": {
                "grad_norm": self.grad_norm,
                "grad_tol": self.grad_tol,
                "iterations": self.iterations,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ModelParams":
        conv = obj["convergence"]
        return cls(
            kind=LossKind(obj["loss"]),
            w=np.asarray(obj["w"], dtype=float),
            lam=float(obj["lam"]),
            weights=np.asarray(obj["weights"], dtype=float),
            grad_norm=float(conv["grad_norm"]),
            grad_tol=float(conv["grad_tol"]),
            iterations=int(conv.get("iterations", 0)),
        )


def _check_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.shape != (n,):
        raise ValueError(f"expected {n} weights, got {weights.shape[0]}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("example weights must be finite and non-negative")
    return weights


# -- per-example loss, gradient and Hessian -----------------------------------


def loss_value(kind: LossKind, w, x, y) -> float:
    a = float(np.dot(w, x))
    if kind is LossKind.SQUARED:
        return 0.5 * (a - y) ** 2
    return float(np.logaddexp(0.0, a) - y * a)


def loss_gradient_w(kind: LossKind, w, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = float(np.dot(w, x))
    if kind is LossKind.SQUARED:
        return (a - y) * x
    return (expit(a) - y) * x


def loss_hessian_w(kind: LossKind, w, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return _curvature(kind, np.dot(w, x)) * np.outer(x, x)


def _curvature(kind: LossKind, a):
    """Second derivative of the loss in its linear score."""
    if kind is LossKind.SQUARED:
        return np.ones_like(np.asarray(a, dtype=float))
    s = expit(a)
    return s * (1.0 - s)


def _residual(kind: LossKind, a, y):
    """First derivative of the loss in its linear score."""
    if kind is LossKind.SQUARED:
        return a - y
    return expit(a) - y


def losses(kind: LossKind, w, X, y) -> np.ndarray:
    a = X @ w
    if kind is LossKind.SQUARED:
        return 0.5 * (a - y) ** 2
    return np.logaddexp(0.0, a) - y * a


def gradients(kind: LossKind, w, X, y) -> np.ndarray:
    """Per-example loss gradients in w, shape (n, d)."""
    return _residual(kind, X @ w, y)[:, None] * X


def objective(kind: LossKind, w, X, y, lam: float, weights=None) -> float:
    n = X.shape[0]
    weights = _check_weights(weights, n)
    return float(weights @ losses(kind, w, X, y) + 0.5 * n * lam * (w @ w))


def objective_gradient(kind: LossKind, w, X, y, lam: float, weights=None) -> np.ndarray:
    n = X.shape[0]
    weights = _check_weights(weights, n)
    return X.T @ (weights * _residual(kind, X @ w, y)) + n * lam * w


def objective_hessian(kind: LossKind, w, X, y, lam: float, weights=None) -> np.ndarray:
    n, d = X.shape
    weights = _check_weights(weights, n)
    c = weights * _curvature(kind, X @ w)
    H = (X * c[:, None]).T @ X
    H[np.diag_indices(d)] += n * lam
    return 0.5 * (H + H.T)


# -- solvers -------------------------------------------------------------------


def fit_linear(ds: Dataset, lam: float, weights=None, *, refine_steps: int = 2) -> ModelParams:
    """Exact weighted ridge solution via a Cholesky factorization."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    X, y = ds.X, ds.y
    n = ds.n
    weights = _check_weights(weights, n)
    H = objective_hessian(LossKind.SQUARED, np.zeros(ds.d), X, y, lam, weights)
    try:
        factor = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError:
        raise ValueError(
            "weighted Gram matrix is singular; use lam > 0" if lam == 0
            else "weighted Hessian is not positive definite"
        ) from None
    w = scipy.linalg.cho_solve(factor, X.T @ (weights * y))
    grad_tol = 1e-8 * (1.0 + float(np.linalg.norm(y)))
    g = objective_gradient(LossKind.SQUARED, w, X, y, lam, weights)
    for _ in range(refine_steps):
        if np.linalg.norm(g) <= 1e-2 * grad_tol:
            break
        w = w - scipy.linalg.cho_solve(factor, g)
        g = objective_gradient(LossKind.SQUARED, w, X, y, lam, weights)
    grad_norm = float(np.linalg.norm(g))
    if not grad_norm <= grad_tol:
        raise ConvergenceError("ill-conditioned linear system", grad_norm)
    return ModelParams(LossKind.SQUARED, w, float(lam), weights, grad_norm, grad_tol, 1)


def fit_logistic(
    ds: Dataset,
    lam: float,
    weights=None,
    grad_tol: float | None = None,
    *,
    max_iter: int = 100,
    w0=None,
    check_targets: bool = True,
) -> ModelParams:
    """Damped Newton iteration with Armijo backtracking.

    Strong convexity (``lam > 0``) makes the minimizer unique; Newton is used
    instead of a quasi-Newton method because the Jacobian of the minimizer is
    only valid at a tight stationary point.

    ``check_targets=False`` admits real-valued targets (the loss is linear
    in ``y``), which finite-difference checks in ``y`` need.
    """
    if lam <= 0:
        raise ValueError("logistic regression needs lam > 0")
    X, y = ds.X, ds.y
    if check_targets and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic targets must be in {0, 1}")
    n, d = X.shape
    weights = _check_weights(weights, n)
    if grad_tol is None:
        grad_tol = default_grad_tol(n)
    kind = LossKind.LOGISTIC
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    f = objective(kind, w, X, y, lam, weights)
    g = objective_gradient(kind, w, X, y, lam, weights)
    it = 0
    while np.linalg.norm(g) > grad_tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations", float(np.linalg.norm(g)))
        H = objective_hessian(kind, w, X, y, lam, weights)
        step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g)
        slope = float(g @ step)
        t = 1.0
        while True:
            w_new = w - t * step
            f_new = objective(kind, w_new, X, y, lam, weights)
            # below float resolution of f the Armijo test is noise; take the full step
            if slope <= 1e-12 * max(1.0, abs(f)):
                break
            if f_new <= f - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        g_new = objective_gradient(kind, w_new, X, y, lam, weights)
        it += 1
        if t < 1e-10 and np.linalg.norm(g_new) >= np.linalg.norm(g):
            raise ConvergenceError("line search stalled", float(np.linalg.norm(g)))
        w, f, g = w_new, f_new, g_new
    return ModelParams(kind, w, float(lam), weights, float(np.linalg.norm(g)), float(grad_tol), it)


def fit(ds: Dataset, kind: LossKind | str, lam: float, weights=None, grad_tol: float | None = None, **kwargs) -> ModelParams:
    kind = LossKind(kind)
    if kind is LossKind.SQUARED:
        return fit_linear(ds, lam, weights)
    return fit_logistic(ds, lam, weights, grad_tol, **kwargs)


# -- prediction ------------------------------------------------------------------


def predict(params: ModelParams, x) -> np.ndarray | float:
    """Linear score for squared loss, probability of class 1 for logistic."""
    a = np.asarray(x, dtype=float) @ params.w
    return expit(a) if params.kind is LossKind.LOGISTIC else a


def classify(params: ModelParams, x) -> np.ndarray:
    """Threshold at 0 (targets in {-1, 1}) or at probability 0.5 (targets in {0, 1})."""
    p = predict(params, x)
    if params.kind is LossKind.LOGISTIC:
        return (p >= 0.5).astype(float)
    return np.where(p >= 0, 1.0, -1.0)


def accuracy(params: ModelParams, ds: Dataset) -> float:
    return float(np.mean(classify(params, ds.X) == ds.y))


def mse(params: ModelParams, ds: Dataset) -> float:
    return float(np.mean((predict(params, ds.X) - ds.y) ** 2))


def residual_standard_error(params: ModelParams, ds: Dataset) -> float:
    """sqrt(RSS / (n - d)), falling back to RSS / n when n <= d."""
    rss = float(np.sum((ds.X @ params.w - ds.y) ** 2))
    dof = ds.n - ds.d if ds.n > ds.d else ds.n
    return float(np.sqrt(rss / dof))


def select_logistic_lambda(
    ds: Dataset,
    reference_accuracy: float,
    grid: Sequence[float] = tuple(10.0 ** np.arange(-8, 1)),
) -> float:
    """Largest ``lam`` whose training accuracy matches the reference to two significant digits.

    ``ds`` must carry {0, 1} targets. Falls back to the smallest grid value
    when none matches.
    """
    target = float(f"{reference_accuracy:.2g}")
    best = None
    for lam in sorted(grid):
        acc = accuracy(fit_logistic(ds, lam), ds)
        if float(f"{acc:.2g}") == target:
            best = lam
    return float(min(grid) if best is None else best)


@dataclasses.dataclass(frozen=True)
class Trainer:
    """Retrains exactly as a victim did: same loss, lam, weights and tolerance."""

    kind: LossKind
    lam: float
    weights: np.ndarray | None = None
    grad_tol: float | None = None
    check_targets: bool = True

    @classmethod
    def like(cls, params: ModelParams) -> "Trainer":
        tol = params.grad_tol if params.kind is LossKind.LOGISTIC else None
        return cls(params.kind, params.lam, params.weights, tol)

    def fit(self, ds: Dataset, w0=None) -> ModelParams:
        if self.kind is LossKind.SQUARED:
            return fit_linear(ds, self.lam, self.weights)
        return fit_logistic(ds, self.lam, self.weights, self.grad_tol, w0=w0,
                            check_targets=self.check_targets)

    def __call__(self, ds: Dataset, w0=None) -> np.ndarray:
        return self.fit(ds, w0).w
