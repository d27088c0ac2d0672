"""Typed tabular datasets: schema, CSV ingestion, deterministic splits, losses.

All loss accounting is bit-stable: squared residuals are summed in ascending
index order (via the cumulative sum, whose final element equals the sequential
sum exactly), so replaying a transcript reproduces every number bit for bit.

The module also hosts the hidden-data guard used by the simulation harness:
datasets placed under ``guarded(...)`` raise ``HiddenDataAccess`` on any value
read, which is how tests prove competitor agents never touch the validation
or test splits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadWeights,
    DuplicateHeader,
    EmptyGroup,
    EmptyInput,
    HiddenDataAccess,
    LabelOutOfRange,
    LengthMismatch,
    MissingColumn,
    SchemaError,
    TypeMismatch,
    UnexpectedColumn,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# Dataset ids currently guarded against reads (hidden splits during agent turns).
_GUARDED: set[int] = set()


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    allowed_values: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be nonempty")
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown feature kind: {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.allowed_values:
                raise SchemaError(
                    f"categorical feature {self.name!r} needs allowed values"
                )
            if len(set(self.allowed_values)) != len(self.allowed_values):
                raise SchemaError(
                    f"categorical feature {self.name!r} has duplicate allowed values"
                )
        elif self.allowed_values:
            raise SchemaError(
                f"numeric feature {self.name!r} must not list allowed values"
            )


@dataclass(frozen=True)
class Schema:
    features: tuple[Feature, ...]
    label_name: str
    label_range: tuple[float, float]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if not self.label_name:
            raise SchemaError("label name must be nonempty")
        if self.label_name in names:
            raise SchemaError("label name collides with a feature name")
        lo, hi = self.label_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise SchemaError(f"label range must satisfy lo < hi, got {self.label_range}")

    def has_feature(self, name: str) -> bool:
        return any(f.name == name for f in self.features)

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def feature_index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def to_json_obj(self) -> dict:
        feats = []
        for f in self.features:
            obj = {"name": f.name, "kind": f.kind}
            if f.kind == CATEGORICAL:
                obj["allowed_values"] = list(f.allowed_values)
            feats.append(obj)
        return {
            "features": feats,
            "label": {"name": self.label_name, "range": list(self.label_range)},
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Schema":
        try:
            feats = tuple(
                Feature(
                    name=f["name"],
                    kind=f["kind"],
                    allowed_values=tuple(f.get("allowed_values", ())),
                )
                for f in obj["features"]
            )
            label = obj["label"]
            rng = label["range"]
            return cls(feats, label["name"], (float(rng[0]), float(rng[1])))
        except (KeyError, TypeError, IndexError) as e:
            raise SchemaError(f"malformed schema document: {e!r}") from e

    @classmethod
    def from_json(cls, text: str | bytes) -> "Schema":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"schema is not valid JSON: {e}") from e
        return cls.from_json_obj(obj)


class Dataset:
    """Immutable columnar dataset.

    Numeric columns are float64; categorical columns are int32 codes indexing
    the feature's allowed_values. Labels are float64 within the schema range.
    """

    __slots__ = ("schema", "_columns", "_labels", "n_rows")

    def __init__(self, schema: Schema, columns: dict[str, np.ndarray],
                 labels: np.ndarray, _validate: bool = True):
        self.schema = schema
        self._columns = columns
        self._labels = np.asarray(labels, dtype=np.float64)
        self.n_rows = int(self._labels.shape[0])
        if _validate:
            self._validate()
        for arr in self._columns.values():
            arr.setflags(write=False)
        self._labels.setflags(write=False)

    def _validate(self):
        if set(self._columns) != set(self.schema.feature_names):
            raise SchemaError("columns do not match schema features")
        for f in self.schema.features:
            col = self._columns[f.name]
            if col.shape != (self.n_rows,):
                raise SchemaError(f"column {f.name!r} misaligned with labels")
            if f.kind == NUMERIC:
                if col.dtype != np.float64:
                    raise SchemaError(f"numeric column {f.name!r} must be float64")
                if not np.all(np.isfinite(col)):
                    raise SchemaError(f"numeric column {f.name!r} has non-finite values")
            else:
                if not np.issubdtype(col.dtype, np.integer):
                    raise SchemaError(f"categorical column {f.name!r} must be codes")
                if col.size and (col.min() < 0 or col.max() >= len(f.allowed_values)):
                    raise SchemaError(f"categorical column {f.name!r} has bad codes")
        lo, hi = self.schema.label_range
        if self._labels.size and (
            not np.all(np.isfinite(self._labels))
            or self._labels.min() < lo
            or self._labels.max() > hi
        ):
            raise SchemaError("labels outside schema label range")

    def _check_guard(self):
        if id(self) in _GUARDED:
            raise HiddenDataAccess("attempted read of a hidden dataset")

    def column(self, name: str) -> np.ndarray:
        """Raw column: float64 for numeric features, int codes for categorical."""
        self._check_guard()
        return self._columns[name]

    @property
    def labels(self) -> np.ndarray:
        self._check_guard()
        return self._labels

    def category_values(self, name: str) -> np.ndarray:
        """Categorical column decoded back to value strings."""
        f = self.schema.feature(name)
        if f.kind != CATEGORICAL:
            raise KeyError(f"{name!r} is not categorical")
        return np.array(f.allowed_values, dtype=object)[self.column(name)]

    def take(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        cols = {name: col[idx].copy() for name, col in self._columns.items()}
        return Dataset(self.schema, cols, self._labels[idx].copy(), _validate=False)

    def __len__(self) -> int:
        return self.n_rows

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.n_rows == other.n_rows
            and np.array_equal(self._labels, other._labels)
            and all(
                np.array_equal(self._columns[n], other._columns[n])
                for n in self.schema.feature_names
            )
        )

    def __hash__(self):
        return id(self)

    @classmethod
    def from_values(cls, schema: Schema, values: dict[str, list], labels) -> "Dataset":
        """Build from python-level values (floats / category strings)."""
        cols: dict[str, np.ndarray] = {}
        for f in schema.features:
            if f.name not in values:
                raise MissingColumn(f.name)
            raw = values[f.name]
            if f.kind == NUMERIC:
                cols[f.name] = np.asarray(raw, dtype=np.float64)
            else:
                codebook = {v: i for i, v in enumerate(f.allowed_values)}
                try:
                    cols[f.name] = np.array([codebook[v] for v in raw], dtype=np.int32)
                except KeyError as e:
                    raise TypeMismatch(0, f.name, f"unknown category {e.args[0]!r}")
        return cls(schema, cols, np.asarray(labels, dtype=np.float64))


@contextmanager
def guarded(*datasets: Dataset):
    """Forbid value reads on the given datasets inside the context."""
    ids = [id(d) for d in datasets]
    _GUARDED.update(ids)
    try:
        yield
    finally:
        _GUARDED.difference_update(ids)


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

def load_csv(schema: Schema, data: bytes | str) -> Dataset:
    """Parse an RFC-4180-style CSV (UTF-8, header row, '.' decimals).

    Columns may appear in any order but must be exactly the schema features
    plus the label. Values must conform to their feature kind; missing values
    are not supported.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn(schema.label_name)

    seen: set[str] = set()
    for name in header:
        if name in seen:
            raise DuplicateHeader(name)
        seen.add(name)
    expected = set(schema.feature_names) | {schema.label_name}
    for name in expected:
        if name not in seen:
            raise MissingColumn(name)
    for name in seen:
        if name not in expected:
            raise UnexpectedColumn(name)

    col_pos = {name: header.index(name) for name in header}
    feats = schema.features
    raw_cols: list[list] = [[] for _ in feats]
    labels: list[float] = []
    codebooks = [
        {v: i for i, v in enumerate(f.allowed_values)} if f.kind == CATEGORICAL else None
        for f in feats
    ]
    lo, hi = schema.label_range

    for rownum, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise TypeMismatch(rownum, "", f"expected {len(header)} fields, got {len(row)}")
        for fi, f in enumerate(feats):
            cell = row[col_pos[f.name]]
            if f.kind == NUMERIC:
                try:
                    v = float(cell)
                except ValueError:
                    raise TypeMismatch(rownum, f.name, f"not a number: {cell!r}")
                if not math.isfinite(v):
                    raise TypeMismatch(rownum, f.name, f"non-finite: {cell!r}")
                raw_cols[fi].append(v)
            else:
                code = codebooks[fi].get(cell)
                if code is None:
                    raise TypeMismatch(rownum, f.name, f"not an allowed value: {cell!r}")
                raw_cols[fi].append(code)
        cell = row[col_pos[schema.label_name]]
        try:
            y = float(cell)
        except ValueError:
            raise TypeMismatch(rownum, schema.label_name, f"not a number: {cell!r}")
        if not math.isfinite(y) or y < lo or y > hi:
            raise LabelOutOfRange(rownum, y, lo, hi)
        labels.append(y)

    columns = {
        f.name: np.asarray(raw_cols[fi], dtype=np.float64 if f.kind == NUMERIC else np.int32)
        for fi, f in enumerate(feats)
    }
    return Dataset(schema, columns, np.asarray(labels, dtype=np.float64))


def dump_csv(dataset: Dataset) -> bytes:
    """Serialize in schema column order (label last); floats use repr."""
    out = io.StringIO(newline="")
    writer = csv.writer(out)
    names = dataset.schema.feature_names
    writer.writerow(names + [dataset.schema.label_name])
    cols = []
    for f in dataset.schema.features:
        if f.kind == NUMERIC:
            cols.append([repr(float(v)) for v in dataset.column(f.name)])
        else:
            allowed = f.allowed_values
            cols.append([allowed[c] for c in dataset.column(f.name)])
    label_strs = [repr(float(v)) for v in dataset.labels]
    for i in range(dataset.n_rows):
        writer.writerow([col[i] for col in cols] + [label_strs[i]])
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# deterministic splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSet:
    train: Dataset
    validation: Dataset
    test: Dataset
    seed: int
    weights: tuple[float, float, float]
    train_indices: np.ndarray
    validation_indices: np.ndarray
    test_indices: np.ndarray


def split(dataset: Dataset, weights: tuple[float, float, float], seed: int) -> SplitSet:
    """Shuffle-then-cut split, a pure function of (dataset, weights, seed).

    The permutation comes from NumPy's PCG64 generator (``default_rng(seed)``).
    Validation and test sizes are floor(n*w); train takes the remainder, so
    holdouts are never starved by rounding. Layout: the first n_train permuted
    indices are train, then validation, then test, kept in permuted order.
    """
    w = tuple(float(x) for x in weights)
    if len(w) != 3 or any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
        raise BadWeights(f"weights must be positive and sum to 1: {weights}")
    n = dataset.n_rows
    n_val = int(math.floor(n * w[1]))
    n_test = int(math.floor(n * w[2]))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    tr = perm[:n_train]
    va = perm[n_train:n_train + n_val]
    te = perm[n_train + n_val:]
    return SplitSet(
        train=dataset.take(tr),
        validation=dataset.take(va),
        test=dataset.take(te),
        seed=seed,
        weights=w,
        train_indices=tr,
        validation_indices=va,
        test_indices=te,
    )


# ---------------------------------------------------------------------------
# losses and weights
# ---------------------------------------------------------------------------

def _seq_sum(x: np.ndarray) -> float:
    # cumsum's last element equals the ascending-index sequential sum exactly
    if x.size == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


def mse(predictions, labels) -> float:
    """Mean squared error, residuals summed in ascending index order."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise LengthMismatch(f"shapes {p.shape} vs {y.shape}")
    if p.size == 0:
        raise EmptyInput("mse of empty vectors")
    sq = np.square(p - y)
    return _seq_sum(sq) / p.size


def group_loss(predictions, labels, mask) -> float:
    """MSE restricted to rows where the mask is true."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if not (p.shape == y.shape == m.shape) or p.ndim != 1:
        raise LengthMismatch(f"shapes {p.shape}, {y.shape}, {m.shape}")
    if not m.any():
        raise EmptyGroup("group selects zero rows")
    return mse(p[m], y[m])


def group_weight(mask) -> float:
    """Fraction of rows selected: popcount / length."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 1 or m.size == 0:
        raise EmptyInput("mask must have length >= 1")
    return int(np.count_nonzero(m)) / m.size
