"""Attribute-inversion adversaries and their evaluation by FIL decile.

All attacks target a nominal attribute. A candidate value always rewrites the
attribute's whole encoded span (one-hot with the last category dropped,
times the dataset's unit-ball factor), never individual indicator bits.
"""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import fil, glm
from .dataset import Dataset
from .glm import ModelParams, Trainer
from .mechanism import rng_for

logger = logging.getLogger(__name__)

N_DECILES = 10


@dataclasses.dataclass(frozen=True)
class AttackTask:
    """Template for inverting one nominal attribute; the example index is supplied per call."""

    attribute: str
    categories: tuple[str, ...]
    span: tuple[int, ...]
    prior: np.ndarray

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        if len(self.categories) < 1:
            raise ValueError("candidate set must be nonempty")
        if prior.shape != (len(self.categories),):
            raise ValueError("prior must have one entry per candidate")
        object.__setattr__(self, "prior", prior)

    @classmethod
    def for_attribute(cls, ds: Dataset, attribute: str, prior=None) -> "AttackTask":
        """Task over ``attribute`` with the empirical category frequencies as prior."""
        if attribute not in ds.categories:
            raise ValueError(f"{attribute!r} is not a nominal attribute of this dataset")
        cats = tuple(ds.categories[attribute])
        if prior is None:
            counts = np.bincount(ds.codes[attribute], minlength=len(cats)).astype(float)
            prior = counts / counts.sum()
        return cls(attribute, cats, tuple(ds.groups[attribute]), prior)

    @property
    def size(self) -> int:
        return len(self.categories)

    def encoding(self, v: int, scale: float) -> np.ndarray:
        """Encoded span values for candidate ``v``."""
        e = np.zeros(len(self.span))
        if v < len(self.span):
            e[v] = 1.0
        return e * scale

    def rewrite(self, x: np.ndarray, v: int, scale: float) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[list(self.span)] = self.encoding(v, scale)
        return x


def candidate_models(ds: Dataset, task: AttackTask, i: int, trainer: Callable[[Dataset], np.ndarray]) -> np.ndarray:
    """Retrained minimizers for every candidate value of example ``i``; failed fits are +inf."""
    out = np.full((task.size, ds.d), np.inf)
    for v in range(task.size):
        X = np.array(ds.X)
        X[i] = task.rewrite(X[i], v, ds.scale)
        try:
            out[v] = trainer(ds.with_rows(X=X))
        except (glm.ConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("candidate %d of example %d failed to train: %s", v, i, exc)
    return out


def _nearest(w_prime: np.ndarray, models: np.ndarray) -> int:
    dist = np.linalg.norm(models - w_prime, axis=-1)
    dist = np.where(np.isfinite(dist), dist, np.inf)
    return int(np.argmin(dist))


def whitebox_invert(
    ds: Dataset,
    task: AttackTask,
    i: int,
    w_prime,
    trainer: Callable[[Dataset], np.ndarray],
    models: np.ndarray | None = None,
) -> int:
    """Candidate whose retrained model lies closest to ``w_prime`` (lowest index on ties).

    ``ds`` is the adversary's view: the victim's data with example ``i``'s
    attribute unknown (its current value is overwritten for every candidate).
    """
    if task.size == 1:
        return 0
    if models is None:
        models = candidate_models(ds, task, i, trainer)
    return _nearest(np.asarray(w_prime, dtype=float), models)


def gaussian_performance(s: float) -> Callable[[float, float], float]:
    """Likelihood of a prediction under N(y, s^2)."""
    if not s > 0:
        raise ValueError("standard error must be positive")
    return lambda pred, y: float(stats.norm.pdf(pred, loc=y, scale=s))


def blackbox_invert(
    task: AttackTask,
    x,
    y: float,
    predict_fn: Callable[[np.ndarray], float],
    prior,
    perf_metric: Callable[[float, float], float],
    scale: float = 1.0,
) -> int:
    """``argmax_v prior(v) * perf(predict(x with v), y)``, lowest index on ties."""
    prior = np.asarray(prior, dtype=float)
    if not np.any(prior > 0):
        raise ValueError("prior puts zero mass on every candidate")
    scores = np.array([
        prior[v] * perf_metric(predict_fn(task.rewrite(x, v, scale)), y) if prior[v] > 0 else 0.0
        for v in range(task.size)
    ])
    if not np.any(scores > 0):
        # all likelihoods underflowed; fall back to the prior
        return baseline_invert(prior)
    return int(np.argmax(scores))


def baseline_invert(prior) -> int:
    """Most probable candidate under the prior, first one on ties."""
    prior = np.asarray(prior, dtype=float)
    if prior.size == 0:
        raise ValueError("empty prior")
    return int(np.argmax(prior))


def decile_groups(etas: np.ndarray, n_bins: int = N_DECILES) -> list[np.ndarray]:
    """Positions of ``etas`` split into ``n_bins`` groups of increasing rank (stable sort)."""
    order = np.argsort(etas, kind="stable")
    return [np.sort(g) for g in np.array_split(order, n_bins)]


@dataclasses.dataclass
class AttackResult:
    attack: str
    sigma: float
    seed: int
    trials: int
    examples: np.ndarray
    truth: np.ndarray
    predictions: np.ndarray  # trials x examples
    etas: np.ndarray | None = None
    deciles: list[np.ndarray] | None = None

    @property
    def correct(self) -> np.ndarray:
        return self.predictions == self.truth[None, :]

    @property
    def trial_accuracy(self) -> np.ndarray:
        return self.correct.mean(axis=1)

    @property
    def accuracy(self) -> float:
        return float(self.trial_accuracy.mean())

    @property
    def accuracy_std(self) -> float:
        return float(self.trial_accuracy.std())

    @property
    def accuracy_se(self) -> float:
        return self.accuracy_std / np.sqrt(self.trials)

    @property
    def decile_accuracy(self) -> np.ndarray:
        if self.deciles is None:
            raise ValueError("no decile partition (etas were not supplied)")
        c = self.correct
        return np.array([c[:, g].mean() if g.size else np.nan for g in self.deciles])

    @property
    def decile_spread(self) -> float:
        """Largest minus smallest per-decile accuracy."""
        acc = self.decile_accuracy
        return float(np.nanmax(acc) - np.nanmin(acc))

    @property
    def top_bottom_gap(self) -> float:
        acc = self.decile_accuracy
        return float(acc[-1] - acc[0])

    def to_dict(self) -> dict:
        out = {
            "attack": self.attack,
            "sigma": self.sigma,
            "seed": self.seed,
            "trials": self.trials,
            "n_examples": int(self.examples.size),
            "accuracy_mean": self.accuracy,
            "accuracy_std": self.accuracy_std,
            "per_example_accuracy": self.correct.mean(axis=0).tolist(),
        }
        if self.deciles is not None:
            acc = self.decile_accuracy
            out["deciles"] = [
                {
                    "decile": k,
                    "n": int(g.size),
                    "eta_min": float(self.etas[g].min()) if g.size else None,
                    "eta_max": float(self.etas[g].max()) if g.size else None,
                    "accuracy": float(acc[k]),
                }
                for k, g in enumerate(self.deciles)
            ]
        return out


def attribute_etas(ds: Dataset, params: ModelParams, task: AttackTask, sigma: float = 1.0) -> np.ndarray:
    """Per-example FIL of the attribute's encoded span."""
    return fil.example_etas(ds, params, sigma, coordinates=task.span)


def evaluate_attack(
    ds: Dataset,
    task: AttackTask,
    params: ModelParams,
    attack: str,
    trials: int,
    sigma: float,
    seed: int,
    *,
    examples: Sequence[int] | None = None,
    etas: np.ndarray | None = None,
    trainer: Callable[[Dataset], np.ndarray] | None = None,
    threads: int = 1,
) -> AttackResult:
    """Repeat an attack over independent releases of ``params`` and score it.

    Trial ``t`` releases ``w* + sigma * g`` with ``g`` from the stream
    ``(seed, t)`` (``sigma = 0`` releases ``w*`` itself) and attacks every
    example in ``examples`` against that one release.

    Examples are grouped into deciles by ``etas`` (attribute-level FIL of the
    unperturbed model by default), so the partition does not depend on the
    noise draws.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    examples = np.arange(ds.n) if examples is None else np.asarray(examples, dtype=np.int64)
    truth = ds.codes[task.attribute][examples]
    if etas is None:
        etas = attribute_etas(ds, params, task)[examples]
    etas = np.asarray(etas, dtype=float)
    if etas.shape != examples.shape:
        raise ValueError("need one eta per attacked example")
    releases = np.stack([
        params.w + sigma * rng_for(seed, t).standard_normal(ds.d) for t in range(trials)
    ])
    preds = np.zeros((trials, examples.size), dtype=np.int64)

    if attack == "whitebox":
        trainer = trainer or Trainer.like(params)
        with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
            models = np.stack(list(pool.map(lambda i: candidate_models(ds, task, int(i), trainer), examples)))
        dist = np.linalg.norm(models[None, :, :, :] - releases[:, None, None, :], axis=-1)
        dist = np.where(np.isfinite(dist), dist, np.inf)
        preds = np.argmin(dist, axis=-1)
    elif attack == "blackbox":
        dof = ds.n - ds.d if ds.n > ds.d else ds.n
        for t, w in enumerate(releases):
            # residual standard error of the released model on the training set
            s = float(np.sqrt(np.sum((ds.X @ w - ds.y) ** 2) / dof))
            perf = gaussian_performance(max(s, np.finfo(float).tiny))
            predict_fn = lambda x, w=w: float(x @ w)
            for k, i in enumerate(examples):
                preds[t, k] = blackbox_invert(task, ds.X[i], ds.y[i], predict_fn, task.prior, perf, ds.scale)
    elif attack == "baseline":
        preds[:] = baseline_invert(task.prior)
    else:
        raise ValueError(f"unknown attack {attack!r}")
    return AttackResult(
        attack=attack,
        sigma=float(sigma),
        seed=int(seed),
        trials=int(trials),
        examples=examples,
        truth=truth,
        predictions=preds,
        etas=etas,
        deciles=decile_groups(etas),
    )
