"""Run configuration: one JSON file per run, overridable from the command line.

Schema (every field optional except where noted)::

    {
      "dataset": {
        "kind": "csv" | "npz" | "synthetic.regression"
                | "synthetic.classification" | "synthetic.attack",
        "path": "train.csv",            # csv / npz
        "spec": {...} | "spec_path": "spec.json",   # csv only, see FeatureSpec.from_dict
        "test_path": null,              # optional held-out csv / npz
        "test_fraction": null,          # holdout share when test_path is absent
        "pca_components": null,
        "params": {"n": 200, "d": 5}    # generator keyword arguments
      },
      "model": {"loss": "squared" | "logistic", "lam": 0.0, "grad_tol": null},
      "sigma": 1.0,
      "seed": 0,
      "output": "runs/default",
      "threads": 1,
      "audit": {"granularity": "example", "attribute": null, "indices": null,
                "bins": 20, "top_k": 8, "fim_cap": 4096},
      "irfil": {"iters": 10, "early_stop_cv": null, "attribute": null},
      "attack": {"type": "whitebox", "target_attribute": null, "trials": 100,
                 "sigmas": null, "irfil_iters": 0},
      "validate": {"examples": 10, "step": 1e-4, "mc_samples": 100000,
                   "blue_trials": 10000, "block_draws": 100},
      "scatter": {"fraction": 0.1}
    }
"""
from __future__ import annotations

import dataclasses
import json
import typing
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclasses.dataclass
class DatasetConfig:
    kind: str = "synthetic.regression"
    path: str | None = None
    spec: dict | None = None
    spec_path: str | None = None
    test_path: str | None = None
    test_fraction: float | None = None
    pca_components: int | None = None
    params: dict = dataclasses.field(default_factory=dict)

    def check(self, path: str) -> None:
        kinds = ("csv", "npz", "synthetic.regression", "synthetic.classification", "synthetic.attack")
        if self.kind not in kinds:
            raise ConfigError(f"{path}.kind", f"must be one of {kinds}")
        if self.kind in ("csv", "npz") and not self.path:
            raise ConfigError(f"{path}.path", f"required for kind {self.kind!r}")
        if self.kind == "csv" and self.spec is None and self.spec_path is None:
            raise ConfigError(f"{path}.spec", "csv datasets need 'spec' or 'spec_path'")
        if self.test_fraction is not None and not 0 < self.test_fraction < 1:
            raise ConfigError(f"{path}.test_fraction", "must lie in (0, 1)")


@dataclasses.dataclass
class ModelConfig:
    loss: str = "squared"
    lam: float = 0.0
    grad_tol: float | None = None

    def check(self, path: str) -> None:
        if self.loss not in ("squared", "logistic"):
            raise ConfigError(f"{path}.loss", "must be 'squared' or 'logistic'")
        if self.lam < 0:
            raise ConfigError(f"{path}.lam", "must be non-negative")
        if self.loss == "logistic" and self.lam <= 0:
            raise ConfigError(f"{path}.lam", "logistic regression needs lam > 0")


@dataclasses.dataclass
class AuditConfig:
    granularity: str = "example"
    attribute: str | None = None
    indices: list | None = None
    bins: int = 20
    top_k: int = 8
    fim_cap: int = 4096

    def check(self, path: str) -> None:
        options = ("example", "attribute", "full", "example_attribute", "custom")
        if self.granularity not in options:
            raise ConfigError(f"{path}.granularity", f"must be one of {options}")
        if self.granularity == "example_attribute" and not self.attribute:
            raise ConfigError(f"{path}.attribute", "required for granularity 'example_attribute'")
        if self.granularity == "custom" and not self.indices:
            raise ConfigError(f"{path}.indices", "required for granularity 'custom'")
        if self.bins < 1:
            raise ConfigError(f"{path}.bins", "must be >= 1")


@dataclasses.dataclass
class IrfilConfig:
    iters: int = 10
    early_stop_cv: float | None = None
    attribute: str | None = None

    def check(self, path: str) -> None:
        if self.iters < 1:
            raise ConfigError(f"{path}.iters", "must be >= 1")


@dataclasses.dataclass
class AttackConfig:
    type: str = "whitebox"
    target_attribute: str | None = None
    trials: int = 100
    sigmas: list | None = None
    irfil_iters: int = 0

    def check(self, path: str) -> None:
        if self.type not in ("whitebox", "blackbox", "baseline"):
            raise ConfigError(f"{path}.type", "must be 'whitebox', 'blackbox' or 'baseline'")
        if self.trials < 1:
            raise ConfigError(f"{path}.trials", "must be >= 1")
        if self.sigmas is not None and any(s < 0 for s in self.sigmas):
            raise ConfigError(f"{path}.sigmas", "must be non-negative")
        if self.irfil_iters < 0:
            raise ConfigError(f"{path}.irfil_iters", "must be >= 0")


@dataclasses.dataclass
class ValidateConfig:
    examples: int = 10
    step: float = 1e-4
    mc_samples: int = 100_000
    blue_trials: int = 10_000
    block_draws: int = 100

    def check(self, path: str) -> None:
        if self.step <= 0:
            raise ConfigError(f"{path}.step", "must be positive")
        if self.mc_samples < 1000:
            raise ConfigError(f"{path}.mc_samples", "must be >= 1000")


@dataclasses.dataclass
class ScatterConfig:
    fraction: float = 0.1

    def check(self, path: str) -> None:
        if not 0 < self.fraction < 1:
            raise ConfigError(f"{path}.fraction", "must lie in (0, 1)")


@dataclasses.dataclass
class RunConfig:
    dataset: DatasetConfig = dataclasses.field(default_factory=DatasetConfig)
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    sigma: float = 1.0
    seed: int = 0
    output: str = "runs/default"
    threads: int = 1
    audit: AuditConfig = dataclasses.field(default_factory=AuditConfig)
    irfil: IrfilConfig = dataclasses.field(default_factory=IrfilConfig)
    attack: AttackConfig = dataclasses.field(default_factory=AttackConfig)
    validate: ValidateConfig = dataclasses.field(default_factory=ValidateConfig)
    scatter: ScatterConfig = dataclasses.field(default_factory=ScatterConfig)

    def check(self, path: str = "config") -> None:
        if not self.sigma > 0:
            raise ConfigError(f"{path}.sigma", "must be positive")
        if self.threads < 1:
            raise ConfigError(f"{path}.threads", "must be >= 1")
        for f in dataclasses.fields(self):
            sub = getattr(self, f.name)
            if dataclasses.is_dataclass(sub):
                sub.check(f"{path}.{f.name}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "RunConfig":
        cfg = _build(cls, obj, "config")
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as f:
                obj = json.load(f)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj)


def _accepts(tp, value) -> bool:
    if tp is typing.Any:
        return True
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        return any(_accepts(a, value) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if origin is not None:
        return isinstance(value, origin)
    return isinstance(value, tp)


def _build(cls, obj: Any, path: str):
    if not isinstance(obj, Mapping):
        raise ConfigError(path, "expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown field")
    kwargs = {}
    for name, value in obj.items():
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, f"{path}.{name}")
            continue
        if not _accepts(tp, value):
            raise ConfigError(f"{path}.{name}", f"invalid value {value!r}")
        if tp is float or tp == (float | None):
            value = None if value is None else float(value)
        kwargs[name] = value
    return cls(**kwargs)


def set_path(obj: dict, dotted: str, value: Any) -> None:
    """Set ``obj["a"]["b"] = value`` for ``dotted == "a.b"``, creating levels."""
    keys = dotted.split(".")
    for k in keys[:-1]:
        obj = obj.setdefault(k, {})
    obj[keys[-1]] = value
