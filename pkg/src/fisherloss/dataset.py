"""Tabular ingestion, encoding and the flattened data vector.

A :class:`Dataset` holds the encoded design matrix ``X`` (n x d) and targets
``y``. All leakage computations index the data through the flattening

    z = [x_1, y_1, x_2, y_2, ..., x_n, y_n]

so element ``j`` of example ``i`` lives at flat index ``i * (d + 1) + j`` and
the target of example ``i`` at ``i * (d + 1) + d`` (0-based).
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "nan", "NaN"})
NUMERIC = "numeric"
NOMINAL = "nominal"

# Rows whose largest norm is within this of 1 count as already normalized.
UNIT_BALL_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class ColumnSpec:
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, NOMINAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == NOMINAL and len(self.categories) < 2:
            raise ValueError("a nominal column needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("duplicate categories in nominal column")

    @property
    def width(self) -> int:
        """Number of encoded columns (one-hot with the last category dropped)."""
        return 1 if self.kind == NUMERIC else len(self.categories) - 1


@dataclasses.dataclass(frozen=True)
class FeatureSpec:
    """Column kinds, the target column and an optional attack target.

    ``target_encoding`` only matters for a nominal target: ``"index"`` maps
    category k to k (so a binary target becomes {0, 1}); ``"signed"`` maps a
    binary target to {-1, 1}.
    """

    columns: Mapping[str, ColumnSpec]
    target: str
    target_attribute: str | None = None
    target_encoding: str = "index"

    def __post_init__(self):
        if self.target not in self.columns:
            raise ValueError(f"target column {self.target!r} not among columns")
        if self.target_attribute is not None:
            col = self.columns.get(self.target_attribute)
            if col is None:
                raise ValueError(f"target attribute {self.target_attribute!r} not among columns")
            if col.kind != NOMINAL or self.target_attribute == self.target:
                raise ValueError("target attribute must be a nominal feature column")
        if self.target_encoding not in ("index", "signed"):
            raise ValueError(f"unknown target encoding {self.target_encoding!r}")
        if self.target_encoding == "signed":
            tcol = self.columns[self.target]
            if tcol.kind != NOMINAL or len(tcol.categories) != 2:
                raise ValueError("signed target encoding needs a binary nominal target")

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.columns if c != self.target]

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "FeatureSpec":
        """Build from the config schema.

        ``{"columns": {"age": "numeric", "sex": ["F", "M"], ...},
        "target": "income", "target_attribute": "sex"}``; a column may also be
        written as ``{"kind": "nominal", "categories": [...]}``.
        """
        columns = {}
        for name, kind in obj["columns"].items():
            if isinstance(kind, str):
                columns[name] = ColumnSpec(kind)
            elif isinstance(kind, Sequence):
                columns[name] = ColumnSpec(NOMINAL, tuple(str(c) for c in kind))
            else:
                columns[name] = ColumnSpec(kind["kind"], tuple(str(c) for c in kind.get("categories", ())))
        return cls(
            columns=columns,
            target=obj["target"],
            target_attribute=obj.get("target_attribute"),
            target_encoding=obj.get("target_encoding", "index"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureSpec":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict[str, Any]:
        return {
            "columns": {
                name: (list(col.categories) if col.kind == NOMINAL else NUMERIC)
                for name, col in self.columns.items()
            },
            "target": self.target,
            "target_attribute": self.target_attribute,
            "target_encoding": self.target_encoding,
        }


@dataclasses.dataclass(frozen=True)
class RawTable:
    """Parsed CSV contents: floats for numeric columns, category codes for nominal ones."""

    values: Mapping[str, np.ndarray]
    dropped_count: int = 0

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.values.values()))) if self.values else 0


def load_csv(path: str | Path, spec: FeatureSpec) -> RawTable:
    """Read a UTF-8 CSV with a header row, dropping rows with any missing field."""
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        missing = [c for c in spec.columns if c not in header]
        if missing:
            raise ValueError(f"{path}: header lacks columns {missing}")
        pos = {c: header.index(c) for c in spec.columns}
        cols: dict[str, list] = {c: [] for c in spec.columns}
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            fields = {c: (row[p].strip() if p < len(row) else "") for c, p in pos.items()}
            if any(v in MISSING_TOKENS for v in fields.values()):
                dropped += 1
                continue
            for c, v in fields.items():
                col = spec.columns[c]
                if col.kind == NUMERIC:
                    try:
                        cols[c].append(float(v))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: non-numeric value {v!r} in column {c!r}") from None
                else:
                    try:
                        cols[c].append(col.categories.index(v))
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: unknown category {v!r} in column {c!r}") from None
    values = {
        c: np.asarray(v, dtype=float if spec.columns[c].kind == NUMERIC else np.int64)
        for c, v in cols.items()
    }
    if dropped:
        logger.info("%s: dropped %d rows with missing fields", path, dropped)
    return RawTable(values=values, dropped_count=dropped)


@dataclasses.dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # k x d, rows ordered by decreasing singular value
    singular_values: np.ndarray
    explained_variance_ratio: np.ndarray


@dataclasses.dataclass(frozen=True)
class Dataset:
    """Encoded data plus the metadata needed to map back to original columns.

    Attributes:
        X: design matrix, n x d.
        y: targets, length n.
        groups: original column name -> encoded column indices.
        categories: category lists for nominal columns.
        codes: true category codes per row for nominal columns.
        feature_names: name of every encoded column.
        scale: cumulative factor applied by unit-ball normalization.
        stats: (mean, std) used to standardize each numeric column.
        pca: basis used to project the data, if any.
    """

    X: np.ndarray
    y: np.ndarray
    groups: Mapping[str, tuple[int, ...]] = dataclasses.field(default_factory=dict)
    categories: Mapping[str, tuple[str, ...]] = dataclasses.field(default_factory=dict)
    codes: Mapping[str, np.ndarray] = dataclasses.field(default_factory=dict)
    feature_names: tuple[str, ...] = ()
    scale: float = 1.0
    stats: Mapping[str, tuple[float, float]] = dataclasses.field(default_factory=dict)
    pca: PcaBasis | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{j}" for j in range(X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def size(self) -> int:
        """Length of the flattened data vector z."""
        return self.n * (self.d + 1)

    def flat_index(self, i: int, j: int) -> int:
        """Flat index of coordinate ``j`` of example ``i``; ``j == d`` is the target."""
        if not (0 <= i < self.n and 0 <= j <= self.d):
            raise IndexError(f"(example {i}, coordinate {j}) out of range")
        return i * (self.d + 1) + j

    def unflatten(self, k: int) -> tuple[int, int]:
        if not 0 <= k < self.size:
            raise IndexError(f"flat index {k} out of range")
        return divmod(k, self.d + 1)

    def flatten(self) -> np.ndarray:
        return np.hstack([self.X, self.y[:, None]]).reshape(-1)

    def example_indices(self, i: int) -> np.ndarray:
        return np.arange(i * (self.d + 1), (i + 1) * (self.d + 1))

    def attribute_indices(self, j: int) -> np.ndarray:
        return np.arange(self.n) * (self.d + 1) + j

    def take(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return dataclasses.replace(
            self,
            X=self.X[rows],
            y=self.y[rows],
            codes={k: v[rows] for k, v in self.codes.items()},
        )

    def with_rows(self, X: np.ndarray | None = None, y: np.ndarray | None = None) -> "Dataset":
        return dataclasses.replace(
            self, X=self.X if X is None else X, y=self.y if y is None else y
        )

    def save(self, path: str | Path) -> None:
        """Write an ``.npz`` snapshot (arrays plus JSON metadata)."""
        meta = {
            "groups": {k: list(v) for k, v in self.groups.items()},
            "categories": {k: list(v) for k, v in self.categories.items()},
            "feature_names": list(self.feature_names),
            "scale": self.scale,
            "stats": {k: list(v) for k, v in self.stats.items()},
        }
        arrays = {"X": self.X, "y": self.y}
        arrays.update({f"code:{k}": v for k, v in self.codes.items()})
        if self.pca is not None:
            for f in dataclasses.fields(PcaBasis):
                arrays[f"pca:{f.name}"] = getattr(self.pca, f.name)
        np.savez(path, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            codes = {k[5:]: z[k] for k in z.files if k.startswith("code:")}
            pca = None
            if "pca:mean" in z.files:
                pca = PcaBasis(**{f.name: z[f"pca:{f.name}"] for f in dataclasses.fields(PcaBasis)})
            return cls(
                X=z["X"],
                y=z["y"],
                groups={k: tuple(v) for k, v in meta["groups"].items()},
                categories={k: tuple(v) for k, v in meta["categories"].items()},
                codes=codes,
                feature_names=tuple(meta["feature_names"]),
                scale=meta["scale"],
                stats={k: tuple(v) for k, v in meta["stats"].items()},
                pca=pca,
            )


def encode(
    raw: RawTable,
    spec: FeatureSpec,
    stats: Mapping[str, tuple[float, float]] | None = None,
) -> Dataset:
    """One-hot (drop-last) nominal columns and standardize numeric ones.

    Numeric columns are centered and divided by the population standard
    deviation computed on ``raw`` unless ``stats`` from a training table is
    given, in which case those statistics are reused.
    """
    missing = [c for c in spec.columns if c not in raw.values]
    if missing:
        raise ValueError(f"raw table lacks columns {missing}")
    n = raw.n_rows
    blocks, names, new_stats = [], [], {}
    groups, categories, codes = {}, {}, {}
    col = 0
    for name in spec.feature_columns:
        cs = spec.columns[name]
        v = raw.values[name]
        if cs.kind == NUMERIC:
            if stats is not None:
                mean, std = stats[name]
            else:
                if n == 0:
                    raise ValueError(f"cannot standardize column {name!r} of an empty table")
                mean, std = float(v.mean()), float(v.std())
            if std == 0.0:
                raise ValueError(f"numeric column {name!r} has zero variance; cannot scale")
            new_stats[name] = (mean, std)
            blocks.append(((v - mean) / std)[:, None])
            names.append(name)
        else:
            onehot = np.zeros((n, cs.width))
            rows = np.flatnonzero(v < cs.width)
            onehot[rows, v[rows]] = 1.0
            blocks.append(onehot)
            names.extend(f"{name}={c}" for c in cs.categories[:-1])
            categories[name] = cs.categories
            codes[name] = v.copy()
        groups[name] = tuple(range(col, col + cs.width))
        col += cs.width
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    t = raw.values[spec.target]
    if spec.columns[spec.target].kind == NOMINAL and spec.target_encoding == "signed":
        y = 2.0 * t - 1.0
    else:
        y = t.astype(float)
    return Dataset(
        X=X, y=y, groups=groups, categories=categories, codes=codes,
        feature_names=tuple(names), stats=new_stats,
    )


def normalize_unit_ball(ds: Dataset) -> Dataset:
    """Scale every row by 1 / max_i ||x_i|| so the data lies in the unit ball."""
    if ds.n < 1:
        raise ValueError("normalize_unit_ball needs at least one row")
    max_norm = float(np.linalg.norm(ds.X, axis=1).max())
    if max_norm == 0.0:
        logger.warning("all-zero design matrix; skipping unit-ball normalization")
        return ds
    if abs(max_norm - 1.0) <= UNIT_BALL_SLACK:
        return ds
    s = 1.0 / max_norm
    return dataclasses.replace(ds, X=ds.X * s, scale=ds.scale * s)


def apply_scale(ds: Dataset, scale: float) -> Dataset:
    """Apply a training set's unit-ball factor to held-out data."""
    return dataclasses.replace(ds, X=ds.X * scale, scale=ds.scale * scale)


def pca_project(ds: Dataset, k: int) -> Dataset:
    """Project onto the top-``k`` principal directions of the centered data."""
    if not 1 <= k <= ds.d:
        raise ValueError(f"k={k} must lie in [1, {ds.d}]")
    if ds.n < k:
        raise ValueError(f"need at least k={k} rows, have {ds.n}")
    mean = ds.X.mean(axis=0)
    _, s, vt = np.linalg.svd(ds.X - mean, full_matrices=False)
    tol = s.max(initial=0.0) * max(ds.n, ds.d) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    if k > rank:
        raise ValueError(f"k={k} exceeds the data rank; at most {rank} components are achievable")
    var = s**2
    basis = PcaBasis(
        mean=mean,
        components=vt[:k],
        singular_values=s[:k],
        explained_variance_ratio=var[:k] / var.sum(),
    )
    return apply_pca(ds, basis)


def apply_pca(ds: Dataset, basis: PcaBasis) -> Dataset:
    """Project with a stored basis (e.g. the training basis on test data)."""
    Z = (ds.X - basis.mean) @ basis.components.T
    k = basis.components.shape[0]
    return dataclasses.replace(
        ds, X=Z, groups={}, feature_names=tuple(f"pc{j}" for j in range(k)), pca=basis
    )


def preprocess(ds: Dataset, pca_components: int | None = None) -> Dataset:
    """Unit-ball normalize, optionally PCA-project, then re-normalize."""
    ds = normalize_unit_ball(ds)
    if pca_components is not None:
        ds = normalize_unit_ball(pca_project(ds, pca_components))
    return ds


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random train/test partition with ``round(n * test_fraction)`` test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(np.floor(ds.n * test_fraction + 0.5))
    perm = np.random.default_rng(seed).permutation(ds.n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return ds.take(train_rows), ds.take(test_rows)
