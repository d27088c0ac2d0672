from __future__ import annotations

import numpy as np
import pytest

from bountyboard.tabular import CATEGORICAL, NUMERIC, Dataset, Feature, Schema


def toy_schema() -> Schema:
    return Schema(
        features=(
            Feature("AGEP", NUMERIC),
            Feature("WKHP", NUMERIC),
            Feature("RAC1P", CATEGORICAL, ("1", "2", "3", "4", "5")),
            Feature("SEX", CATEGORICAL, ("1", "2")),
        ),
        label_name="PINCP",
        label_range=(0.0, 100000.0),
    )


def random_dataset(rng: np.random.Generator, n: int, schema: Schema | None = None) -> Dataset:
    schema = schema or toy_schema()
    values: dict[str, list] = {}
    for f in schema.features:
        if f.kind == NUMERIC:
            values[f.name] = list(np.round(rng.uniform(0.0, 99.0, size=n), 3))
        else:
            values[f.name] = [f.allowed_values[i] for i in rng.integers(0, len(f.allowed_values), size=n)]
    lo, hi = schema.label_range
    labels = rng.uniform(lo, hi, size=n)
    return Dataset.from_values(schema, values, labels)


def structured_source(rng: np.random.Generator, n: int = 600) -> Dataset:
    """Labels keyed to RAC1P regimes plus a WKHP slope, so group fixes help."""
    schema = toy_schema()
    intercepts = {"1": 20000.0, "2": 32000.0, "3": 9000.0, "4": 45000.0, "5": 26000.0}
    race = [schema.feature("RAC1P").allowed_values[i]
            for i in rng.integers(0, 5, size=n)]
    wkhp = rng.uniform(0, 80, size=n)
    agep = rng.uniform(18, 90, size=n)
    sex = [("1", "2")[i] for i in rng.integers(0, 2, size=n)]
    noise = rng.normal(0, 800, size=n)
    labels = np.clip(
        np.array([intercepts[r] for r in race]) + 420.0 * wkhp + noise, 0, 100000)
    return Dataset.from_values(
        schema,
        {"AGEP": list(agep), "WKHP": list(wkhp), "RAC1P": race, "SEX": sex},
        labels,
    )


@pytest.fixture
def schema() -> Schema:
    return toy_schema()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
