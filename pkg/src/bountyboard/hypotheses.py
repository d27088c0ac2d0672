"""Portable predictor families and the simple trainers used by the harness.

Four families: constant, linear (with one-hot terms for categorical values),
binary regression tree, and shrinkage-weighted tree ensembles. All evaluation
is vectorized and every prediction is clamped to the schema's label range, so
no valid hypothesis can produce an out-of-range value and per-row loss is
bounded by the squared range width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BundleParseError, EmptyDataset, SingularSystem
from .issues import Issue
from .tabular import CATEGORICAL, NUMERIC, Dataset, Schema


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Linear:
    """intercept + sum(coef * numeric) + sum(one-hot coef per categorical value)."""

    intercept: float
    coefficients: tuple[tuple[str, float], ...] = ()
    categorical_coefficients: tuple[tuple[str, tuple[tuple[str, float], ...]], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(
            self,
            "coefficients",
            tuple(sorted((str(n), float(w)) for n, w in self.coefficients)),
        )
        object.__setattr__(
            self,
            "categorical_coefficients",
            tuple(
                sorted(
                    (str(f), tuple(sorted((str(v), float(w)) for v, w in pairs)))
                    for f, pairs in self.categorical_coefficients
                )
            ),
        )


@dataclass(frozen=True)
class Leaf:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def tree_depth(self) -> int:
        return 0


@dataclass(frozen=True)
class NumericSplit:
    """Rows with value <= threshold go left."""

    feature: str
    threshold: float
    left: "TreeNode"
    right: "TreeNode"

    def __post_init__(self):
        object.__setattr__(self, "threshold", float(self.threshold))

    def tree_depth(self) -> int:
        return 1 + max(self.left.tree_depth(), self.right.tree_depth())


@dataclass(frozen=True)
class CategorySplit:
    """Rows whose value is in the set go left."""

    feature: str
    in_values: tuple[str, ...]
    left: "TreeNode"
    right: "TreeNode"

    def __post_init__(self):
        object.__setattr__(self, "in_values", tuple(sorted(set(self.in_values))))

    def tree_depth(self) -> int:
        return 1 + max(self.left.tree_depth(), self.right.tree_depth())


TreeNode = Leaf | NumericSplit | CategorySplit


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode


@dataclass(frozen=True)
class TreeEnsemble:
    """base_value + sum(shrinkage_i * tree_i(x))."""

    base_value: float
    trees: tuple[tuple[float, RegressionTree], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "base_value", float(self.base_value))
        object.__setattr__(
            self,
            "trees",
            tuple((float(s), t) for s, t in self.trees),
        )


Hypothesis = Constant | Linear | RegressionTree | TreeEnsemble


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def _tree_raw(node: TreeNode, dataset: Dataset, idx: np.ndarray, out: np.ndarray):
    if isinstance(node, Leaf):
        out[idx] = node.value
        return
    col = dataset.column(node.feature)[idx]
    if isinstance(node, NumericSplit):
        go_left = col <= node.threshold
    else:
        feat = dataset.schema.feature(node.feature)
        codes = [
            feat.allowed_values.index(v)
            for v in node.in_values
            if v in feat.allowed_values
        ]
        go_left = np.isin(col, np.asarray(codes, dtype=col.dtype))
    _tree_raw(node.left, dataset, idx[go_left], out)
    _tree_raw(node.right, dataset, idx[~go_left], out)


def _raw_predict(h: Hypothesis, dataset: Dataset) -> np.ndarray:
    n = dataset.n_rows
    if isinstance(h, Constant):
        return np.full(n, h.value, dtype=np.float64)
    if isinstance(h, Linear):
        out = np.full(n, h.intercept, dtype=np.float64)
        for name, w in h.coefficients:
            out += w * dataset.column(name)
        for fname, pairs in h.categorical_coefficients:
            feat = dataset.schema.feature(fname)
            table = np.zeros(len(feat.allowed_values), dtype=np.float64)
            for v, w in pairs:
                if v in feat.allowed_values:
                    table[feat.allowed_values.index(v)] = w
            out += table[dataset.column(fname)]
        return out
    if isinstance(h, RegressionTree):
        out = np.empty(n, dtype=np.float64)
        _tree_raw(h.root, dataset, np.arange(n, dtype=np.int64), out)
        return out
    if isinstance(h, TreeEnsemble):
        out = np.full(n, h.base_value, dtype=np.float64)
        scratch = np.empty(n, dtype=np.float64)
        for shrinkage, tree in h.trees:
            _tree_raw(tree.root, dataset, np.arange(n, dtype=np.int64), scratch)
            out += shrinkage * scratch
        return out
    raise TypeError(f"not a hypothesis: {h!r}")


def predict(h: Hypothesis, dataset: Dataset) -> np.ndarray:
    """One prediction per row, clamped to the schema label range."""
    lo, hi = dataset.schema.label_range
    return np.clip(_raw_predict(h, dataset), lo, hi)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_hypothesis(
    h: Hypothesis,
    schema: Schema,
    max_tree_depth: int,
    max_ensemble_size: int,
    where: str = "hypothesis",
) -> list[Issue]:
    issues: list[Issue] = []

    def check_finite(value, what):
        if not math.isfinite(value):
            issues.append(Issue("non-finite-parameter", f"{what} = {value!r}", where))

    def check_tree(node, what, depth_left):
        if isinstance(node, Leaf):
            check_finite(node.value, f"{what} leaf value")
            return
        if not schema.has_feature(node.feature):
            issues.append(Issue("unknown-feature", f"no feature {node.feature!r}", where))
            return
        feat = schema.feature(node.feature)
        if isinstance(node, NumericSplit):
            if feat.kind != NUMERIC:
                issues.append(Issue(
                    "type-mismatch",
                    f"numeric split on categorical feature {node.feature!r}", where))
            check_finite(node.threshold, f"{what} threshold")
        else:
            if feat.kind != CATEGORICAL:
                issues.append(Issue(
                    "type-mismatch",
                    f"category split on numeric feature {node.feature!r}", where))
            else:
                for v in node.in_values:
                    if v not in feat.allowed_values:
                        issues.append(Issue(
                            "unknown-category",
                            f"{v!r} not an allowed value of {node.feature!r}", where))
        check_tree(node.left, what, depth_left - 1)
        check_tree(node.right, what, depth_left - 1)

    if isinstance(h, Constant):
        check_finite(h.value, "constant")
    elif isinstance(h, Linear):
        check_finite(h.intercept, "intercept")
        for name, w in h.coefficients:
            if not schema.has_feature(name):
                issues.append(Issue("unknown-feature", f"no feature {name!r}", where))
            elif schema.feature(name).kind != NUMERIC:
                issues.append(Issue(
                    "type-mismatch", f"linear coefficient on categorical {name!r}", where))
            check_finite(w, f"coefficient[{name}]")
        for fname, pairs in h.categorical_coefficients:
            if not schema.has_feature(fname):
                issues.append(Issue("unknown-feature", f"no feature {fname!r}", where))
                continue
            feat = schema.feature(fname)
            if feat.kind != CATEGORICAL:
                issues.append(Issue(
                    "type-mismatch", f"one-hot coefficients on numeric {fname!r}", where))
                continue
            for v, w in pairs:
                if v not in feat.allowed_values:
                    issues.append(Issue(
                        "unknown-category",
                        f"{v!r} not an allowed value of {fname!r}", where))
                check_finite(w, f"one-hot[{fname}={v}]")
    elif isinstance(h, RegressionTree):
        if h.root.tree_depth() > max_tree_depth:
            issues.append(Issue(
                "limit-exceeded:tree-depth",
                f"depth {h.root.tree_depth()} > {max_tree_depth}", where))
        check_tree(h.root, "tree", max_tree_depth)
    elif isinstance(h, TreeEnsemble):
        check_finite(h.base_value, "base value")
        if len(h.trees) > max_ensemble_size:
            issues.append(Issue(
                "limit-exceeded:ensemble-size",
                f"{len(h.trees)} trees > {max_ensemble_size}", where))
        for k, (shrinkage, tree) in enumerate(h.trees):
            check_finite(shrinkage, f"shrinkage[{k}]")
            if tree.root.tree_depth() > max_tree_depth:
                issues.append(Issue(
                    "limit-exceeded:tree-depth",
                    f"tree[{k}] depth {tree.root.tree_depth()} > {max_tree_depth}",
                    where))
            check_tree(tree.root, f"tree[{k}]", max_tree_depth)
    else:
        issues.append(Issue("bad-node", f"not a hypothesis: {h!r}", where))
    return issues


# ---------------------------------------------------------------------------
# JSON encoding (tagged union)
# ---------------------------------------------------------------------------

def _tree_node_to_json(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.value}
    if isinstance(node, NumericSplit):
        return {
            "feature": node.feature,
            "threshold": node.threshold,
            "left": _tree_node_to_json(node.left),
            "right": _tree_node_to_json(node.right),
        }
    return {
        "feature": node.feature,
        "in_values": list(node.in_values),
        "left": _tree_node_to_json(node.left),
        "right": _tree_node_to_json(node.right),
    }


def _tree_node_from_json(obj, where) -> TreeNode:
    if not isinstance(obj, dict):
        raise BundleParseError("expected a tree node object", where)
    if "leaf" in obj:
        if set(obj) != {"leaf"} or isinstance(obj["leaf"], bool) \
                or not isinstance(obj["leaf"], (int, float)):
            raise BundleParseError("bad leaf node", where)
        return Leaf(float(obj["leaf"]))
    if "threshold" in obj:
        if set(obj) != {"feature", "threshold", "left", "right"}:
            raise BundleParseError("bad numeric split node", where)
        if not isinstance(obj["feature"], str) or isinstance(obj["threshold"], bool) \
                or not isinstance(obj["threshold"], (int, float)):
            raise BundleParseError("bad numeric split node", where)
        return NumericSplit(
            obj["feature"],
            float(obj["threshold"]),
            _tree_node_from_json(obj["left"], where + ".left"),
            _tree_node_from_json(obj["right"], where + ".right"),
        )
    if "in_values" in obj:
        if set(obj) != {"feature", "in_values", "left", "right"}:
            raise BundleParseError("bad category split node", where)
        vals = obj["in_values"]
        if not isinstance(obj["feature"], str) or not isinstance(vals, list) or not vals \
                or not all(isinstance(v, str) for v in vals):
            raise BundleParseError("bad category split node", where)
        return CategorySplit(
            obj["feature"],
            tuple(vals),
            _tree_node_from_json(obj["left"], where + ".left"),
            _tree_node_from_json(obj["right"], where + ".right"),
        )
    raise BundleParseError("unknown tree node shape", where)


def hypothesis_to_json(h: Hypothesis) -> dict:
    if isinstance(h, Constant):
        return {"kind": "constant", "value": h.value}
    if isinstance(h, Linear):
        return {
            "kind": "linear",
            "intercept": h.intercept,
            "coefficients": {n: w for n, w in h.coefficients},
            "categorical_coefficients": {
                f: {v: w for v, w in pairs}
                for f, pairs in h.categorical_coefficients
            },
        }
    if isinstance(h, RegressionTree):
        return {"kind": "tree", "root": _tree_node_to_json(h.root)}
    if isinstance(h, TreeEnsemble):
        return {
            "kind": "ensemble",
            "base_value": h.base_value,
            "trees": [
                {"shrinkage": s, "root": _tree_node_to_json(t.root)}
                for s, t in h.trees
            ],
        }
    raise TypeError(f"not a hypothesis: {h!r}")


def _require_number(obj, key, where):
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise BundleParseError(f"{key} must be a number", where)
    return float(v)


def hypothesis_from_json(obj, where: str = "hypothesis") -> Hypothesis:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise BundleParseError("expected a hypothesis object with a kind", where)
    kind = obj["kind"]
    if kind == "constant":
        if set(obj) != {"kind", "value"}:
            raise BundleParseError("constant takes exactly {kind, value}", where)
        return Constant(_require_number(obj, "value", where))
    if kind == "linear":
        if not set(obj) <= {"kind", "intercept", "coefficients", "categorical_coefficients"}:
            raise BundleParseError("unknown keys in linear hypothesis", where)
        coeffs = obj.get("coefficients", {})
        cats = obj.get("categorical_coefficients", {})
        if not isinstance(coeffs, dict) or not isinstance(cats, dict):
            raise BundleParseError("coefficient maps must be objects", where)
        for name, w in coeffs.items():
            if isinstance(w, bool) or not isinstance(w, (int, float)):
                raise BundleParseError(f"coefficient {name!r} must be a number", where)
        for fname, pairs in cats.items():
            if not isinstance(pairs, dict):
                raise BundleParseError(f"one-hot map for {fname!r} must be an object", where)
            for v, w in pairs.items():
                if isinstance(w, bool) or not isinstance(w, (int, float)):
                    raise BundleParseError(f"one-hot {fname}={v} must be a number", where)
        return Linear(
            intercept=_require_number(obj, "intercept", where),
            coefficients=tuple((n, float(w)) for n, w in coeffs.items()),
            categorical_coefficients=tuple(
                (f, tuple((v, float(w)) for v, w in pairs.items()))
                for f, pairs in cats.items()
            ),
        )
    if kind == "tree":
        if set(obj) != {"kind", "root"}:
            raise BundleParseError("tree takes exactly {kind, root}", where)
        return RegressionTree(_tree_node_from_json(obj["root"], where + ".root"))
    if kind == "ensemble":
        if not set(obj) <= {"kind", "base_value", "trees"}:
            raise BundleParseError("unknown keys in ensemble hypothesis", where)
        trees = obj.get("trees", [])
        if not isinstance(trees, list):
            raise BundleParseError("trees must be a list", where)
        parsed = []
        for k, t in enumerate(trees):
            if not isinstance(t, dict) or set(t) != {"shrinkage", "root"}:
                raise BundleParseError(f"bad ensemble member [{k}]", where)
            parsed.append((
                _require_number(t, "shrinkage", f"{where}.trees[{k}]"),
                RegressionTree(_tree_node_from_json(t["root"], f"{where}.trees[{k}].root")),
            ))
        return TreeEnsemble(
            base_value=_require_number(obj, "base_value", where),
            trees=tuple(parsed),
        )
    raise BundleParseError(f"unknown hypothesis kind {kind!r}", where)


# ---------------------------------------------------------------------------
# trainers
# ---------------------------------------------------------------------------

def fit_constant(dataset: Dataset) -> Constant:
    if dataset.n_rows == 0:
        raise EmptyDataset("cannot fit on zero rows")
    return Constant(float(dataset.labels.mean()))


def _design_matrix(dataset: Dataset):
    """Intercept, numeric columns, then drop-first one-hot per categorical."""
    cols = [np.ones(dataset.n_rows)]
    names: list[tuple] = [("intercept",)]
    for f in dataset.schema.features:
        if f.kind == NUMERIC:
            cols.append(dataset.column(f.name))
            names.append(("numeric", f.name))
    for f in dataset.schema.features:
        if f.kind == CATEGORICAL:
            codes = dataset.column(f.name)
            for ci, v in enumerate(f.allowed_values):
                if ci == 0:
                    continue  # reference level keeps the design full rank
                cols.append((codes == ci).astype(np.float64))
                names.append(("categorical", f.name, v))
    return np.column_stack(cols), names


def fit_linear(dataset: Dataset, ridge: float = 0.0) -> Linear:
    """Ridge-regularized least squares via the normal equations.

    The penalty excludes the intercept, so at large ridge the coefficients
    shrink to zero and the intercept tends to the label mean. With ridge=0 a
    rank-deficient design raises SingularSystem.
    """
    if dataset.n_rows == 0:
        raise EmptyDataset("cannot fit on zero rows")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    X, names = _design_matrix(dataset)
    y = dataset.labels
    if ridge == 0.0 and np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularSystem("design matrix is rank-deficient; use ridge > 0")
    penalty = np.eye(X.shape[1]) * ridge
    penalty[0, 0] = 0.0
    try:
        beta = np.linalg.solve(X.T @ X + penalty, X.T @ y)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(str(e)) from e
    coeffs = []
    cat_coeffs: dict[str, list[tuple[str, float]]] = {}
    for name, b in zip(names, beta):
        if name[0] == "numeric":
            coeffs.append((name[1], float(b)))
        elif name[0] == "categorical":
            cat_coeffs.setdefault(name[1], []).append((name[2], float(b)))
    return Linear(
        intercept=float(beta[0]),
        coefficients=tuple(coeffs),
        categorical_coefficients=tuple((f, tuple(v)) for f, v in cat_coeffs.items()),
    )


def _sse(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    return float(np.sum(np.square(y - y.mean())))


def fit_tree(dataset: Dataset, max_depth: int, min_leaf: int = 1) -> RegressionTree:
    """Greedy variance-reduction tree.

    Numeric candidates are midpoints between consecutive distinct sorted
    values; categorical candidates are single-value memberships ({v} vs rest).
    Ties break to the lower feature index, then the lower threshold / earlier
    allowed value, so training is fully reproducible.
    """
    if dataset.n_rows == 0:
        raise EmptyDataset("cannot fit on zero rows")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    labels = dataset.labels
    features = dataset.schema.features
    columns = [dataset.column(f.name) for f in features]

    def best_split(idx: np.ndarray):
        y = labels[idx]
        n = y.size
        parent_sse = _sse(y)
        best = None  # (gain, feature_index, kind, payload)
        for fi, f in enumerate(features):
            col = columns[fi][idx]
            if f.kind == NUMERIC:
                order = np.argsort(col, kind="stable")
                sv = col[order]
                sy = y[order]
                csum = np.cumsum(sy)
                csq = np.cumsum(np.square(sy))
                total, total_sq = csum[-1], csq[-1]
                # positions where the sorted value changes are valid cuts
                change = np.nonzero(sv[1:] > sv[:-1])[0]
                for cut in change:
                    nl = int(cut) + 1
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sl, sql = csum[cut], csq[cut]
                    sse_l = sql - sl * sl / nl
                    sr, sqr = total - sl, total_sq - sql
                    sse_r = sqr - sr * sr / nr
                    gain = parent_sse - sse_l - sse_r
                    if gain > 0 and (best is None or gain > best[0]):
                        thr = (sv[cut] + sv[cut + 1]) / 2.0
                        best = (gain, fi, "numeric", float(thr))
            else:
                counts = np.bincount(col, minlength=len(f.allowed_values))
                sums = np.bincount(col, weights=y, minlength=len(f.allowed_values))
                sqs = np.bincount(col, weights=np.square(y), minlength=len(f.allowed_values))
                total, total_sq = float(y.sum()), float(np.square(y).sum())
                for ci, v in enumerate(f.allowed_values):
                    nl = int(counts[ci])
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sse_l = sqs[ci] - sums[ci] ** 2 / nl
                    sr, sqr = total - sums[ci], total_sq - sqs[ci]
                    sse_r = sqr - sr * sr / nr
                    gain = parent_sse - sse_l - sse_r
                    if gain > 0 and (best is None or gain > best[0]):
                        best = (gain, fi, "categorical", v)
        return best

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        y = labels[idx]
        if depth >= max_depth or y.size < 2 * min_leaf:
            return Leaf(float(y.mean()))
        found = best_split(idx)
        if found is None:
            return Leaf(float(y.mean()))
        _, fi, kind, payload = found
        f = features[fi]
        col = columns[fi][idx]
        if kind == "numeric":
            go_left = col <= payload
            left = build(idx[go_left], depth + 1)
            right = build(idx[~go_left], depth + 1)
            return NumericSplit(f.name, payload, left, right)
        go_left = col == f.allowed_values.index(payload)
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        return CategorySplit(f.name, (payload,), left, right)

    root = build(np.arange(dataset.n_rows, dtype=np.int64), 0)
    return RegressionTree(root)
