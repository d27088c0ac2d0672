"""Random generators and naive row-at-a-time interpreters used as oracles."""

from __future__ import annotations

import numpy as np

from bountyboard.hypotheses import (
    CategorySplit,
    Constant,
    Leaf,
    Linear,
    NumericSplit,
    RegressionTree,
    TreeEnsemble,
)
from bountyboard.predicates import And, Compare, In, Not, Or, TruePred
from bountyboard.tabular import CATEGORICAL, NUMERIC, Dataset, Schema


def random_predicate(rng: np.random.Generator, schema: Schema, depth: int = 3):
    feats = schema.features
    if depth <= 1 or rng.random() < 0.4:
        roll = rng.random()
        if roll < 0.08:
            return TruePred()
        f = feats[rng.integers(0, len(feats))]
        if f.kind == NUMERIC:
            if roll < 0.85:
                op = ("==", "!=", "<", "<=", ">", ">=")[rng.integers(0, 6)]
                return Compare(f.name, op, float(np.round(rng.uniform(0, 99), 2)))
            vals = tuple(float(v) for v in np.round(rng.uniform(0, 99, size=rng.integers(1, 4)), 2))
            return In(f.name, vals)
        if roll < 0.6:
            op = ("==", "!=")[rng.integers(0, 2)]
            return Compare(f.name, op, f.allowed_values[rng.integers(0, len(f.allowed_values))])
        k = int(rng.integers(1, len(f.allowed_values) + 1))
        picked = rng.choice(len(f.allowed_values), size=k, replace=False)
        return In(f.name, tuple(f.allowed_values[i] for i in picked))
    roll = rng.random()
    if roll < 0.2:
        return Not(random_predicate(rng, schema, depth - 1))
    kids = tuple(
        random_predicate(rng, schema, depth - 1)
        for _ in range(int(rng.integers(2, 4)))
    )
    return And(kids) if roll < 0.6 else Or(kids)


def row_value(dataset: Dataset, feature: str, i: int):
    f = dataset.schema.feature(feature)
    if f.kind == CATEGORICAL:
        return f.allowed_values[int(dataset.column(feature)[i])]
    return float(dataset.column(feature)[i])


def naive_row_match(pred, dataset: Dataset, i: int) -> bool:
    """Row-at-a-time interpreter, written independently of the vectorized path."""
    if isinstance(pred, TruePred):
        return True
    if isinstance(pred, Compare):
        v = row_value(dataset, pred.feature, i)
        rhs = pred.value
        if isinstance(v, str) != isinstance(rhs, str):
            # unknown-category / mistyped comparisons match nothing (or everything for !=)
            return pred.op == "!="
        if pred.op == "==":
            return v == rhs
        if pred.op == "!=":
            return v != rhs
        if pred.op == "<":
            return v < rhs
        if pred.op == "<=":
            return v <= rhs
        if pred.op == ">":
            return v > rhs
        return v >= rhs
    if isinstance(pred, In):
        return row_value(dataset, pred.feature, i) in pred.values
    if isinstance(pred, And):
        return all(naive_row_match(c, dataset, i) for c in pred.children)
    if isinstance(pred, Or):
        return any(naive_row_match(c, dataset, i) for c in pred.children)
    if isinstance(pred, Not):
        return not naive_row_match(pred.child, dataset, i)
    raise TypeError(pred)


def naive_mask(pred, dataset: Dataset) -> np.ndarray:
    return np.array([naive_row_match(pred, dataset, i) for i in range(dataset.n_rows)], dtype=bool)


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

def random_tree_node(rng: np.random.Generator, schema: Schema, depth: int):
    if depth <= 0 or rng.random() < 0.35:
        return Leaf(float(np.round(rng.uniform(-20000, 120000), 2)))
    f = schema.features[rng.integers(0, len(schema.features))]
    left = random_tree_node(rng, schema, depth - 1)
    right = random_tree_node(rng, schema, depth - 1)
    if f.kind == NUMERIC:
        return NumericSplit(f.name, float(np.round(rng.uniform(0, 99), 2)), left, right)
    k = int(rng.integers(1, len(f.allowed_values)))
    picked = rng.choice(len(f.allowed_values), size=k, replace=False)
    return CategorySplit(f.name, tuple(f.allowed_values[i] for i in picked), left, right)


def random_hypothesis(rng: np.random.Generator, schema: Schema):
    roll = rng.random()
    if roll < 0.25:
        return Constant(float(np.round(rng.uniform(0, 100000), 2)))
    if roll < 0.5:
        numeric = [f for f in schema.features if f.kind == NUMERIC]
        cats = [f for f in schema.features if f.kind == CATEGORICAL]
        return Linear(
            intercept=float(np.round(rng.uniform(0, 50000), 2)),
            coefficients=tuple(
                (f.name, float(np.round(rng.normal(0, 300), 3)))
                for f in numeric
                if rng.random() < 0.8
            ),
            categorical_coefficients=tuple(
                (
                    f.name,
                    tuple(
                        (v, float(np.round(rng.normal(0, 4000), 3)))
                        for v in f.allowed_values
                        if rng.random() < 0.7
                    ),
                )
                for f in cats
                if rng.random() < 0.6
            ),
        )
    if roll < 0.8:
        return RegressionTree(random_tree_node(rng, schema, int(rng.integers(1, 5))))
    return TreeEnsemble(
        base_value=float(np.round(rng.uniform(0, 60000), 2)),
        trees=tuple(
            (float(np.round(rng.uniform(0.05, 1.0), 3)),
             RegressionTree(random_tree_node(rng, schema, int(rng.integers(1, 4)))))
            for _ in range(int(rng.integers(0, 4)))
        ),
    )


def naive_tree_value(node, dataset: Dataset, i: int) -> float:
    while not isinstance(node, Leaf):
        v = row_value(dataset, node.feature, i)
        if isinstance(node, NumericSplit):
            node = node.left if v <= node.threshold else node.right
        else:
            node = node.left if v in node.in_values else node.right
    return node.value


def naive_predict(h, dataset: Dataset, i: int) -> float:
    """Row-at-a-time prediction with final clamping, independent of the engine."""
    if isinstance(h, Constant):
        raw = h.value
    elif isinstance(h, Linear):
        raw = h.intercept
        for name, w in h.coefficients:
            raw += w * row_value(dataset, name, i)
        for fname, pairs in h.categorical_coefficients:
            v = row_value(dataset, fname, i)
            for value, w in pairs:
                if value == v:
                    raw += w
    elif isinstance(h, RegressionTree):
        raw = naive_tree_value(h.root, dataset, i)
    elif isinstance(h, TreeEnsemble):
        raw = h.base_value
        for s, t in h.trees:
            raw += s * naive_tree_value(t.root, dataset, i)
    else:
        raise TypeError(h)
    lo, hi = dataset.schema.label_range
    return min(max(raw, lo), hi)
