"""Synthetic regression tasks with planted subgroup structure.

Labels follow regime-dependent affine functions of the numeric features: one
categorical feature keys the regime (its value picks intercept and slopes),
other categorical values can add offsets or bend slopes. Subgroup-specialized
hypotheses therefore genuinely beat global fits, which is what the scripted
competitions need. Generation is bit-identical for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpec
from .tabular import CATEGORICAL, NUMERIC, Dataset, Feature, Schema


@dataclass(frozen=True)
class NumericFeatureSpec:
    name: str
    lo: float
    hi: float


@dataclass(frozen=True)
class CategoricalFeatureSpec:
    name: str
    values: tuple[str, ...]
    probs: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Regime:
    intercept: float
    slopes: tuple[tuple[str, float], ...]  # numeric feature -> slope


@dataclass(frozen=True)
class TaskSpec:
    seed: int
    n_rows: int
    numeric: tuple[NumericFeatureSpec, ...]
    categorical: tuple[CategoricalFeatureSpec, ...]
    regime_feature: str
    regimes: tuple[tuple[str, Regime], ...]  # regime value -> regime
    offsets: tuple[tuple[str, str, float], ...] = ()  # (feature, value, shift)
    slope_overrides: tuple[tuple[str, str, str, float], ...] = ()  # (feat, value, numeric, delta)
    noise_sigma: float = 0.0
    label_name: str = "INCOME"
    label_range: tuple[float, float] = (0.0, 100000.0)

    def schema(self) -> Schema:
        feats = tuple(Feature(f.name, NUMERIC) for f in self.numeric) + tuple(
            Feature(f.name, CATEGORICAL, f.values) for f in self.categorical)
        return Schema(feats, self.label_name, self.label_range)

    def validate(self):
        if self.n_rows < 1:
            raise BadSpec("n_rows must be >= 1")
        if self.noise_sigma < 0:
            raise BadSpec("noise_sigma must be >= 0")
        cat = {c.name: c for c in self.categorical}
        numeric_names = {f.name for f in self.numeric}
        if self.regime_feature not in cat:
            raise BadSpec(f"regime feature {self.regime_feature!r} not categorical")
        regime_values = {v for v, _ in self.regimes}
        missing = set(cat[self.regime_feature].values) - regime_values
        if missing:
            raise BadSpec(f"regimes missing for values {sorted(missing)}")
        for value, regime in self.regimes:
            if value not in cat[self.regime_feature].values:
                raise BadSpec(f"regime value {value!r} not allowed")
            for name, _ in regime.slopes:
                if name not in numeric_names:
                    raise BadSpec(f"slope on unknown numeric feature {name!r}")
        for fname, value, _ in self.offsets:
            if fname not in cat or value not in cat[fname].values:
                raise BadSpec(f"offset on unknown category {fname}={value}")
        for fname, value, numeric, _ in self.slope_overrides:
            if fname not in cat or value not in cat[fname].values:
                raise BadSpec(f"override on unknown category {fname}={value}")
            if numeric not in numeric_names:
                raise BadSpec(f"override on unknown numeric {numeric!r}")
        for c in self.categorical:
            if c.probs is not None:
                if len(c.probs) != len(c.values) or abs(sum(c.probs) - 1.0) > 1e-9 \
                        or any(p < 0 for p in c.probs):
                    raise BadSpec(f"bad probabilities for {c.name!r}")

    # -- JSON (scenario files) -------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "seed": self.seed,
            "n_rows": self.n_rows,
            "numeric": [{"name": f.name, "lo": f.lo, "hi": f.hi} for f in self.numeric],
            "categorical": [
                {"name": c.name, "values": list(c.values),
                 **({"probs": list(c.probs)} if c.probs else {})}
                for c in self.categorical
            ],
            "regime_feature": self.regime_feature,
            "regimes": {
                v: {"intercept": r.intercept, "slopes": dict(r.slopes)}
                for v, r in self.regimes
            },
            "offsets": [list(o) for o in self.offsets],
            "slope_overrides": [list(o) for o in self.slope_overrides],
            "noise_sigma": self.noise_sigma,
            "label_name": self.label_name,
            "label_range": list(self.label_range),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TaskSpec":
        return cls(
            seed=int(obj["seed"]),
            n_rows=int(obj["n_rows"]),
            numeric=tuple(NumericFeatureSpec(f["name"], float(f["lo"]), float(f["hi"]))
                          for f in obj["numeric"]),
            categorical=tuple(
                CategoricalFeatureSpec(
                    c["name"], tuple(c["values"]),
                    tuple(c["probs"]) if c.get("probs") else None)
                for c in obj["categorical"]),
            regime_feature=obj["regime_feature"],
            regimes=tuple(
                (v, Regime(float(r["intercept"]),
                           tuple(sorted((k, float(s)) for k, s in r["slopes"].items()))))
                for v, r in obj["regimes"].items()),
            offsets=tuple((f, v, float(s)) for f, v, s in obj.get("offsets", ())),
            slope_overrides=tuple(
                (f, v, n, float(s)) for f, v, n, s in obj.get("slope_overrides", ())),
            noise_sigma=float(obj.get("noise_sigma", 0.0)),
            label_name=obj.get("label_name", "INCOME"),
            label_range=tuple(obj.get("label_range", (0.0, 100000.0))),
        )


def generate_task(spec: TaskSpec) -> Dataset:
    spec.validate()
    schema = spec.schema()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows

    numeric_cols: dict[str, np.ndarray] = {}
    for f in spec.numeric:
        numeric_cols[f.name] = rng.uniform(f.lo, f.hi, size=n)

    codes: dict[str, np.ndarray] = {}
    for c in spec.categorical:
        p = np.asarray(c.probs, dtype=np.float64) if c.probs else None
        codes[c.name] = rng.choice(len(c.values), size=n, p=p).astype(np.int32)

    regime_spec = next(c for c in spec.categorical if c.name == spec.regime_feature)
    regime_by_value = dict(spec.regimes)
    intercepts = np.array(
        [regime_by_value[v].intercept for v in regime_spec.values])
    labels = intercepts[codes[spec.regime_feature]].astype(np.float64)
    for j, value in enumerate(regime_spec.values):
        in_regime = codes[spec.regime_feature] == j
        for name, slope in regime_by_value[value].slopes:
            labels += np.where(in_regime, slope * numeric_cols[name], 0.0)

    value_index = {
        c.name: {v: i for i, v in enumerate(c.values)} for c in spec.categorical}
    for fname, value, shift in spec.offsets:
        labels += np.where(codes[fname] == value_index[fname][value], shift, 0.0)
    for fname, value, numeric, delta in spec.slope_overrides:
        hit = codes[fname] == value_index[fname][value]
        labels += np.where(hit, delta * numeric_cols[numeric], 0.0)

    if spec.noise_sigma > 0:
        labels += rng.normal(0.0, spec.noise_sigma, size=n)
    lo, hi = spec.label_range
    labels = np.clip(labels, lo, hi)

    columns: dict[str, np.ndarray] = {
        name: col for name, col in numeric_cols.items()}
    columns.update(codes)
    return Dataset(schema, columns, labels)
