"""Gaussian output perturbation of trained parameters."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from .glm import ModelParams

RNG_NAME = "numpy.PCG64"


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the stream ``(seed, *keys)``.

    Streams are split with ``SeedSequence(seed, spawn_key=keys)``, so e.g.
    ``rng_for(seed, t)`` for IRFIL iteration ``t`` and ``rng_for(seed, trial)``
    for attack trials never overlap with ``rng_for(seed)``.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(keys))))


@dataclasses.dataclass(frozen=True)
class PerturbedModel:
    w_prime: np.ndarray
    w_star: np.ndarray
    sigma: float
    seed: int
    stream: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "w_prime": self.w_prime.tolist(),
            "sigma": self.sigma,
            "seed": self.seed,
            "stream": list(self.stream),
            "rng": RNG_NAME,
        }


def perturb(params: ModelParams | np.ndarray, sigma: float, seed: int, *stream: int) -> PerturbedModel:
    """Release ``w' = w* + sigma * g`` with ``g`` standard normal."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    w_star = params.w if isinstance(params, ModelParams) else np.asarray(params, dtype=float)
    g = rng_for(seed, *stream).standard_normal(w_star.shape[0])
    return PerturbedModel(w_star + sigma * g, w_star, float(sigma), int(seed), tuple(stream))


def log_density(w_prime, w_star, sigma: float) -> float:
    w_prime, w_star = np.asarray(w_prime, dtype=float), np.asarray(w_star, dtype=float)
    d = w_star.shape[0]
    r = w_prime - w_star
    return float(-0.5 * (r @ r) / sigma**2 - d * math.log(sigma) - 0.5 * d * math.log(2 * math.pi))


def score(w_prime, w_star, sigma: float) -> np.ndarray:
    """Gradient of the log-density in ``w*``: ``(w' - w*) / sigma^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return (np.asarray(w_prime, dtype=float) - np.asarray(w_star, dtype=float)) / sigma**2


def calibrate_sigma(epsilon: float, delta: float, sensitivity: float) -> float:
    """Classic Gaussian-mechanism scale ``sensitivity * sqrt(2 ln(1.25/delta)) / epsilon``.

    This is one standard (epsilon, delta) calibration, valid for
    ``0 < epsilon <= 1``; it is offered as a convenience only.
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must satisfy 0 < epsilon <= 1 for the classic bound")
    if not 0 < delta < 1:
        raise ValueError("delta must satisfy 0 < delta < 1")
    if not sensitivity > 0:
        raise ValueError("sensitivity must be positive")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon
