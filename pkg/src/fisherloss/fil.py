"""Jacobians of the ERM minimizer, Fisher information matrices and FIL values.

For output perturbation ``w' = w* + N(0, sigma^2 I)`` the Fisher information
about the flattened data ``z`` is ``J^T J / sigma^2`` where ``J`` is the
Jacobian of ``w*`` with respect to ``z``; the FIL is ``||J||_2 / sigma``.

With example weights ``omega`` the minimizer Jacobian for example ``i`` is

    J_i = -omega_i * H^{-1} * d/d(x_i, y_i) grad_w loss_i,
    H   = sum_j omega_j * hess_w loss_j + n * lam * I.
"""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np
import scipy.linalg

from . import glm
from .dataset import Dataset
from .glm import LossKind, ModelParams

POWER_TOL = 1e-8
POWER_MAX_ITER = 10_000
POWER_SEED = 0x5EED
FULL_FIM_CAP = 4096


class PowerIterationError(RuntimeError):
    def __init__(self, ritz: tuple[float, float]):
        super().__init__(f"power iteration hit the iteration cap; last Ritz values {ritz[0]!r}, {ritz[1]!r}")
        self.ritz = ritz


class IndefiniteHessianError(np.linalg.LinAlgError):
    pass


# -- spectral norms ----------------------------------------------------------------


def _batched_top_eigenvalue(G: np.ndarray, tol: float, max_iter: int, seed: int) -> np.ndarray:
    """Largest eigenvalue of each PSD matrix in the stack ``G`` (b x k x k)."""
    b, k, _ = G.shape
    v = np.random.default_rng(seed).standard_normal(k)
    v = np.broadcast_to(v / np.linalg.norm(v), (b, k)).copy()
    ritz = np.zeros(b)
    prev = np.full(b, np.nan)
    done = np.zeros(b, dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            return ritz
        u = np.einsum("bij,bj->bi", G[act], v[act])
        lam = np.einsum("bi,bi->b", v[act], u)
        norm = np.linalg.norm(u, axis=1)
        zero = norm == 0.0
        ritz[act] = np.where(zero, 0.0, lam)
        change = np.abs(lam - prev[act])
        conv = zero | (change <= tol * np.abs(lam))
        prev[act] = lam
        v[act[~zero]] = u[~zero] / norm[~zero, None]
        done[act[conv]] = True
    if not done.all():
        j = int(np.flatnonzero(~done)[0])
        raise PowerIterationError((float(prev[j]), float(ritz[j])))
    return ritz


def spectral_norms(Js: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> np.ndarray:
    """Largest singular value of each matrix in a stack (b x r x c).

    Power iteration runs on ``J J^T`` or ``J^T J``, whichever is smaller.
    """
    Js = np.asarray(Js, dtype=float)
    if Js.size == 0:
        return np.zeros(Js.shape[0])
    r, c = Js.shape[1:]
    G = Js @ Js.transpose(0, 2, 1) if r <= c else Js.transpose(0, 2, 1) @ Js
    return np.sqrt(np.maximum(_batched_top_eigenvalue(G, tol, max_iter, POWER_SEED), 0.0))


def spectral_norm(J: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    J = np.atleast_2d(np.asarray(J, dtype=float))
    return float(spectral_norms(J[None], tol, max_iter)[0])


def psd_norm(M: np.ndarray, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(max(_batched_top_eigenvalue(M[None], tol, max_iter, POWER_SEED)[0], 0.0))


# -- Jacobians ----------------------------------------------------------------------


def cross_jacobian(kind: LossKind, w, x, y) -> np.ndarray:
    """Jacobian of ``grad_w loss`` in ``(x, y)``: a d x (d+1) matrix.

    Columns ``0..d-1`` hold the derivative in ``x``, column ``d`` the
    derivative in ``y``.
    """
    return cross_jacobians(kind, w, np.atleast_2d(x), np.atleast_1d(y))[0]


def cross_jacobians(kind: LossKind, w, X, y) -> np.ndarray:
    """Stack of per-example cross Jacobians, shape (n, d, d+1)."""
    kind = LossKind(kind)
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    n, d = X.shape
    a = X @ w
    curv = glm._curvature(kind, a)
    resid = glm._residual(kind, a, np.asarray(y, dtype=float))
    C = np.zeros((n, d, d + 1))
    C[:, :, :d] = curv[:, None, None] * X[:, :, None] * w[None, None, :]
    C[:, np.arange(d), np.arange(d)] += resid[:, None]
    C[:, :, d] = -X
    return C


@dataclasses.dataclass(frozen=True)
class Hessian:
    """Weighted objective Hessian with its Cholesky factor, shared across examples."""

    matrix: np.ndarray
    factor: tuple

    def solve(self, B: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.factor, B)


def hessian_full(ds: Dataset, params: ModelParams) -> Hessian:
    H = glm.objective_hessian(params.kind, params.w, ds.X, ds.y, params.lam, params.weights)
    try:
        factor = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError:
        raise IndefiniteHessianError(
            "objective Hessian is not numerically positive definite; check lam and the solver"
        ) from None
    return Hessian(H, factor)


def _check_params(ds: Dataset, params: ModelParams) -> None:
    if params.w.shape != (ds.d,) or params.weights.shape != (ds.n,):
        raise ValueError("model parameters do not match the dataset dimensions")
    if not params.converged:
        raise ValueError(
            f"model is not at a stationary point (gradient norm {params.grad_norm:.3e} > "
            f"{params.grad_tol:.3e}); the minimizer Jacobian would be invalid"
        )


def example_jacobians(ds: Dataset, params: ModelParams, hessian: Hessian | None = None, rows=None) -> np.ndarray:
    """Per-example minimizer Jacobians, shape (len(rows), d, d+1)."""
    _check_params(ds, params)
    H = hessian or hessian_full(ds, params)
    rows = np.arange(ds.n) if rows is None else np.atleast_1d(np.asarray(rows, dtype=np.int64))
    C = cross_jacobians(params.kind, params.w, ds.X[rows], ds.y[rows])
    C *= -params.weights[rows, None, None]
    d = ds.d
    # one multi-RHS solve: (d, b*(d+1))
    sol = H.solve(C.transpose(1, 0, 2).reshape(d, -1))
    return sol.reshape(d, len(rows), d + 1).transpose(1, 0, 2)


def example_jacobian(ds: Dataset, params: ModelParams, i: int, hessian: Hessian | None = None) -> np.ndarray:
    if not 0 <= i < ds.n:
        raise IndexError(f"example {i} out of range")
    return example_jacobians(ds, params, hessian, rows=[i])[0]


def full_jacobian(ds: Dataset, params: ModelParams, hessian: Hessian | None = None) -> np.ndarray:
    """d x n(d+1) Jacobian of the minimizer in the flattened data."""
    Js = example_jacobians(ds, params, hessian)
    return Js.transpose(1, 0, 2).reshape(ds.d, ds.size)


# -- Fisher information ------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class FisherMatrix:
    """Symmetric PSD Fisher information matrix over a set of flat data indices."""

    matrix: np.ndarray
    index: np.ndarray
    sigma: float | None = None
    d: int | None = None

    def __post_init__(self):
        index = np.asarray(self.index, dtype=np.int64).reshape(-1)
        if self.matrix.shape != (index.size, index.size):
            raise ValueError("matrix shape does not match the index map")
        object.__setattr__(self, "index", index)

    @property
    def norm(self) -> float:
        return psd_norm(self.matrix)

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.norm))

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix, hermitian=True))

    def pairs(self) -> list[tuple[int, int]]:
        """(example, coordinate) for each row; needs ``d``."""
        if self.d is None:
            raise ValueError("index map has no example width")
        return [divmod(int(k), self.d + 1) for k in self.index]


@dataclasses.dataclass(frozen=True)
class FilValue:
    eta: float
    granularity: str
    index: int | None
    sigma: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fim(J: np.ndarray, sigma: float, index=None, d: int | None = None) -> FisherMatrix:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    J = np.atleast_2d(np.asarray(J, dtype=float))
    M = (J.T @ J) / sigma**2
    M = 0.5 * (M + M.T)
    index = np.arange(J.shape[1]) if index is None else index
    return FisherMatrix(M, index, float(sigma), d)


def fil_eta(J: np.ndarray, sigma: float, granularity: str = "full", index: int | None = None) -> FilValue:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return FilValue(spectral_norm(J) / sigma, granularity, index, float(sigma))


def subset_fim(full: FisherMatrix, indices: Sequence[int]) -> FisherMatrix:
    """Principal submatrix over the given flat data indices."""
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if np.unique(indices).size != indices.size:
        raise ValueError("duplicate indices")
    pos = {int(k): p for p, k in enumerate(full.index)}
    try:
        sel = np.array([pos[int(k)] for k in indices], dtype=np.int64)
    except KeyError as exc:
        raise IndexError(f"index {exc.args[0]} not in the Fisher matrix") from None
    return FisherMatrix(full.matrix[np.ix_(sel, sel)], indices, full.sigma, full.d)


def compose(fims: Sequence[FisherMatrix]) -> FisherMatrix:
    """Fisher information of independent releases: the sum of their FIMs."""
    if not fims:
        raise ValueError("nothing to compose")
    first = fims[0]
    for f in fims[1:]:
        if f.index.shape != first.index.shape or not np.array_equal(f.index, first.index):
            raise ValueError("Fisher matrices have mismatched index maps")
    total = np.sum([f.matrix for f in fims], axis=0)
    sigma = first.sigma if len(fims) == 1 else None
    return FisherMatrix(total, first.index, sigma, first.d)


def full_fim(ds: Dataset, params: ModelParams, sigma: float, cap: int = FULL_FIM_CAP,
             hessian: Hessian | None = None) -> FisherMatrix:
    """Materialized n(d+1) x n(d+1) FIM; refuses above ``cap`` rows."""
    if ds.size > cap:
        raise ValueError(f"full FIM would have {ds.size} rows (> cap {cap}); use full_eta instead")
    return fim(full_jacobian(ds, params, hessian), sigma, d=ds.d)


def full_eta(ds: Dataset, params: ModelParams, sigma: float, hessian: Hessian | None = None) -> FilValue:
    """FIL with respect to the whole dataset without forming the FIM."""
    return fil_eta(full_jacobian(ds, params, hessian), sigma, "full")


def example_etas(ds: Dataset, params: ModelParams, sigma: float, coordinates=None,
                 hessian: Hessian | None = None) -> np.ndarray:
    """Per-example FIL; ``coordinates`` restricts to within-example columns (e.g. an attribute span)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    Js = example_jacobians(ds, params, hessian)
    if coordinates is not None:
        Js = Js[:, :, np.asarray(coordinates, dtype=np.int64)]
    return spectral_norms(Js) / sigma


def attribute_eta(ds: Dataset, params: ModelParams, sigma: float, j: int,
                  hessian: Hessian | None = None) -> FilValue:
    """FIL of coordinate ``j`` taken across all examples."""
    Js = example_jacobians(ds, params, hessian)
    return fil_eta(Js[:, :, j].T, sigma, "attribute", j)
