"""Pointer decision list: prepend-only versioned ensemble with repair nodes.

Version 0 is the base hypothesis alone. Prepending node k creates version k;
evaluating version v walks nodes v..1 top-down and the first node whose group
predicate matches a row resolves it: an update node yields its hypothesis's
prediction, a repair node re-enters the frozen *earlier* version it points
to. Rows matching no node fall through to the base. Repair targets are
strictly older than their own version, so evaluation always terminates and
versions are immutable once created.

Prediction vectors are computed forward (version k from version k-1 and node
k), which is exactly the routing semantics; PdlEvaluator memoizes the per-
version vectors for one dataset so acceptance and repair checks reduce to
masked reductions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hypotheses, predicates
from .bundles import Limits
from .errors import BadTarget, BundleValidationError, UnknownVersion
from .hypotheses import Hypothesis, hypothesis_from_json, hypothesis_to_json, predict
from .predicates import Predicate, eval_predicate
from .tabular import Dataset, Schema


@dataclass(frozen=True)
class UpdateNode:
    predicate: Predicate
    hypothesis: Hypothesis
    version: int


@dataclass(frozen=True)
class RepairNode:
    predicate: Predicate
    target_version: int
    version: int


PdlNode = UpdateNode | RepairNode


class PointerDecisionList:
    """Single-writer append log of nodes; any created version is immutable."""

    def __init__(self, base: Hypothesis, schema: Schema, limits: Limits | None = None):
        limits = limits or Limits()
        issues = hypotheses.validate_hypothesis(
            base, schema, limits.max_tree_depth, limits.max_ensemble_size, where="base")
        if issues:
            raise BundleValidationError(issues)
        self.base = base
        self.schema = schema
        self.limits = limits
        self.nodes: list[PdlNode] = []

    @property
    def version(self) -> int:
        """Current (latest) version ordinal; 0 when only the base exists."""
        return len(self.nodes)

    @property
    def version_count(self) -> int:
        return len(self.nodes) + 1

    def _check_bundle(self, predicate, hypothesis=None):
        issues = predicates.validate_predicate(predicate, self.schema, where="group")
        if predicate.depth() > self.limits.max_predicate_depth:
            issues.append(_limit_issue("predicate-depth"))
        if predicate.node_count() > self.limits.max_predicate_nodes:
            issues.append(_limit_issue("predicate-nodes"))
        if hypothesis is not None:
            issues.extend(hypotheses.validate_hypothesis(
                hypothesis, self.schema,
                self.limits.max_tree_depth, self.limits.max_ensemble_size))
        if issues:
            raise BundleValidationError(issues)

    def prepend_update(self, predicate: Predicate, hypothesis: Hypothesis) -> int:
        self._check_bundle(predicate, hypothesis)
        v = self.version + 1
        self.nodes.append(UpdateNode(predicate, hypothesis, v))
        return v

    def prepend_repair(self, predicate: Predicate, target_version: int) -> int:
        self._check_bundle(predicate)
        if not isinstance(target_version, int) or not 0 <= target_version < self.version:
            raise BadTarget(
                f"repair target {target_version!r} must be in [0, {self.version})")
        v = self.version + 1
        self.nodes.append(RepairNode(predicate, target_version, v))
        return v

    def predict(self, dataset: Dataset, version: int | None = None) -> np.ndarray:
        """Predictions at a version (default: latest), one pass, no caching."""
        v = self.version if version is None else version
        return PdlEvaluator(self, dataset).predictions(v)

    # -- snapshot ----------------------------------------------------------

    def to_json_obj(self) -> dict:
        nodes = []
        for node in self.nodes:
            if isinstance(node, UpdateNode):
                nodes.append({
                    "kind": "update",
                    "group": predicates.to_text(node.predicate),
                    "hypothesis": hypothesis_to_json(node.hypothesis),
                    "version": node.version,
                })
            else:
                nodes.append({
                    "kind": "repair",
                    "group": predicates.to_text(node.predicate),
                    "target_version": node.target_version,
                    "version": node.version,
                })
        return {
            "base": hypothesis_to_json(self.base),
            "nodes": nodes,
            "version": self.version,
        }

    @classmethod
    def from_json_obj(cls, obj: dict, schema: Schema, limits: Limits | None = None) -> "PointerDecisionList":
        pdl = cls(hypothesis_from_json(obj["base"]), schema, limits)
        for i, node in enumerate(obj.get("nodes", ())):
            pred = predicates.parse_text(node["group"])
            if node.get("version") != i + 1:
                raise UnknownVersion(node.get("version"))
            if node["kind"] == "update":
                pdl.prepend_update(pred, hypothesis_from_json(node["hypothesis"]))
            elif node["kind"] == "repair":
                pdl.prepend_repair(pred, int(node["target_version"]))
            else:
                raise UnknownVersion(node["kind"])
        if obj.get("version") != pdl.version:
            raise UnknownVersion(obj.get("version"))
        return pdl


def _limit_issue(which):
    from .issues import Issue

    return Issue(f"limit-exceeded:{which}", "over configured limit", "group")


class PdlEvaluator:
    """Memoized per-version prediction vectors of one PDL over one dataset.

    Extends lazily as versions are created; safe because the node log is
    append-only and created versions never change.
    """

    def __init__(self, pdl: PointerDecisionList, dataset: Dataset):
        self.pdl = pdl
        self.dataset = dataset
        self._vectors: list[np.ndarray] = []

    def predictions(self, version: int | None = None) -> np.ndarray:
        v = self.pdl.version if version is None else version
        if not isinstance(v, int) or not 0 <= v <= self.pdl.version:
            raise UnknownVersion(v)
        while len(self._vectors) <= v:
            self._extend()
        return self._vectors[v]

    def head(self) -> np.ndarray:
        return self.predictions(self.pdl.version)

    def _extend(self):
        k = len(self._vectors)
        if k == 0:
            vec = predict(self.pdl.base, self.dataset)
        else:
            node = self.pdl.nodes[k - 1]
            mask = eval_predicate(node.predicate, self.dataset)
            prev = self._vectors[k - 1]
            if isinstance(node, UpdateNode):
                vals = predict(node.hypothesis, self.dataset)
            else:
                vals = self._vectors[node.target_version]
            vec = np.where(mask, vals, prev)
        vec.setflags(write=False)
        self._vectors.append(vec)


def predict_version(pdl: PointerDecisionList, version: int, dataset: Dataset) -> np.ndarray:
    """Predictions of an exact historical version."""
    if not isinstance(version, int) or not 0 <= version <= pdl.version:
        raise UnknownVersion(version)
    return pdl.predict(dataset, version)
