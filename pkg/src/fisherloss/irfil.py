"""Iteratively reweighted Fisher information loss (IRFIL).

Each round refits the model with the current example weights, releases a
perturbed copy, computes every example's FIL from the weighted Jacobian and
moves the weights toward ``omega_i / eta_i`` (renormalized to sum to ``n``).
Equal per-example FIL is a fixed point of the update.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from typing import Iterator

import numpy as np

from . import fil, glm
from .dataset import Dataset
from .glm import LossKind, ModelParams
from .mechanism import PerturbedModel, perturb


def weight_update(weights, etas) -> np.ndarray:
    """``omega_i <- n (omega_i / eta_i) / sum_j (omega_j / eta_j)``."""
    weights = np.asarray(weights, dtype=float)
    etas = np.asarray(etas, dtype=float)
    if weights.shape != etas.shape:
        raise ValueError("weights and etas must have the same length")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    if np.any(etas <= 0):
        bad = np.flatnonzero(etas <= 0)
        raise ValueError(f"examples {bad[:10].tolist()} have zero FIL and cannot be reweighted")
    r = weights / etas
    return weights.size * r / r.sum()


def coefficient_of_variation(x) -> float:
    x = np.asarray(x, dtype=float)
    m = x.mean()
    return float(x.std() / m) if m > 0 else 0.0


@dataclasses.dataclass
class IrfilTrace:
    """Everything produced by a run; ``etas[t]`` are computed under ``weights[t]``.

    ``releases`` holds every intermediate perturbed model. Only ``final`` is
    meant for release: publishing the others composes their leakage.
    """

    weights: list[np.ndarray]
    etas: list[np.ndarray]
    models: list[ModelParams]
    releases: list[PerturbedModel]
    sigma: float
    seed: int

    @property
    def final(self) -> PerturbedModel:
        return self.releases[-1]

    @property
    def final_params(self) -> ModelParams:
        return self.models[-1]

    @property
    def eta_mean(self) -> np.ndarray:
        return np.array([e.mean() for e in self.etas])

    @property
    def eta_std(self) -> np.ndarray:
        return np.array([e.std() for e in self.etas])

    @property
    def eta_cv(self) -> np.ndarray:
        return np.array([coefficient_of_variation(e) for e in self.etas])

    def records(self) -> Iterator[dict]:
        for t, (w, e) in enumerate(zip(self.weights, self.etas)):
            yield {
                "iteration": t,
                "eta_mean": float(e.mean()),
                "eta_std": float(e.std()),
                "eta_cv": coefficient_of_variation(e),
                "weights_sum": float(w.sum()),
                "weights_digest": hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()[:16],
                "seed": self.seed,
                "stream": list(self.releases[t].stream),
                "sigma": self.sigma,
            }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def run_irfil(
    ds: Dataset,
    kind: LossKind | str,
    lam: float,
    sigma: float,
    iters: int,
    seed: int,
    *,
    coordinates=None,
    grad_tol: float | None = None,
    early_stop_cv: float | None = None,
) -> IrfilTrace:
    """Run ``iters`` reweighting rounds starting from unit weights.

    Args:
        coordinates: within-example coordinates whose FIL is equalized, e.g.
            the encoded span of an attribute; all ``d + 1`` by default.
        early_stop_cv: stop once the coefficient of variation of eta falls
            below this value.

    Round ``t`` (0-based) fits with ``weights[t]``, draws its noise from the
    stream ``(seed, t)`` and yields ``etas[t]``; the returned trace also
    stores the updated weights after the last round.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    kind = LossKind(kind)
    weights = np.ones(ds.n)
    trace = IrfilTrace([], [], [], [], float(sigma), int(seed))
    w0 = None
    for t in range(iters):
        try:
            if kind is LossKind.LOGISTIC:
                params = glm.fit_logistic(ds, lam, weights, grad_tol, w0=w0)
                w0 = params.w
            else:
                params = glm.fit_linear(ds, lam, weights)
        except glm.ConvergenceError as exc:
            raise glm.ConvergenceError(f"IRFIL iteration {t}: solver failed", exc.grad_norm) from exc
        etas = fil.example_etas(ds, params, sigma, coordinates)
        trace.weights.append(weights)
        trace.etas.append(etas)
        trace.models.append(params)
        trace.releases.append(perturb(params, sigma, seed, t))
        weights = weight_update(weights, etas)
        if early_stop_cv is not None and coefficient_of_variation(etas) < early_stop_cv:
            break
    trace.weights.append(weights)
    return trace
