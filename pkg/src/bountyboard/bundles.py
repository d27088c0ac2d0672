"""Submission bundles: the declarative (group, hypothesis) wire format.

A bundle is a JSON document::

    {
      "format_version": 1,
      "group": "AGEP < 30 AND RAC1P IN {\"1\", \"2\"}",
      "hypothesis": {"kind": "constant", "value": 42000.0},
      "metadata": {"team": "crew", "note": "young cohort fix"}
    }

``group`` is either surface predicate text or a JSON expression tree.
Validation is exhaustive (shape, schema conformance, limits, finiteness) and
the format admits no behavior beyond arithmetic, so a bundle that validates
can always be evaluated without runtime errors. Serialization is canonical:
sorted keys, compact separators, groups rendered as canonical surface text,
making ``serialize(parse(serialize(b))) == serialize(b)`` byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import hypotheses, predicates
from .errors import (
    BundleParseError,
    BundleTooLarge,
    BundleValidationError,
    PredicateSyntaxError,
    VersionUnsupported,
)
from .issues import Issue
from .tabular import Schema

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Limits:
    max_predicate_depth: int = 32
    max_predicate_nodes: int = 1024
    max_tree_depth: int = 16
    max_ensemble_size: int = 512
    max_bundle_bytes: int = 4 * 1024 * 1024

    def to_json_obj(self) -> dict:
        return {
            "max_predicate_depth": self.max_predicate_depth,
            "max_predicate_nodes": self.max_predicate_nodes,
            "max_tree_depth": self.max_tree_depth,
            "max_ensemble_size": self.max_ensemble_size,
            "max_bundle_bytes": self.max_bundle_bytes,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Limits":
        return cls(**{k: int(v) for k, v in obj.items()})


@dataclass(frozen=True)
class Metadata:
    team: str | None = None
    note: str = ""


@dataclass(frozen=True)
class ModelBundle:
    predicate: predicates.Predicate
    hypothesis: hypotheses.Hypothesis
    metadata: Metadata = field(default_factory=Metadata)
    format_version: int = FORMAT_VERSION


def validate_bundle(bundle: ModelBundle, schema: Schema, limits: Limits) -> list[Issue]:
    """Exhaustive issue list (never raises); empty means valid."""
    issues = predicates.validate_predicate(bundle.predicate, schema, where="group")
    depth = bundle.predicate.depth()
    nodes = bundle.predicate.node_count()
    if depth > limits.max_predicate_depth:
        issues.append(Issue(
            "limit-exceeded:predicate-depth",
            f"depth {depth} > {limits.max_predicate_depth}", "group"))
    if nodes > limits.max_predicate_nodes:
        issues.append(Issue(
            "limit-exceeded:predicate-nodes",
            f"{nodes} nodes > {limits.max_predicate_nodes}", "group"))
    issues.extend(hypotheses.validate_hypothesis(
        bundle.hypothesis, schema,
        max_tree_depth=limits.max_tree_depth,
        max_ensemble_size=limits.max_ensemble_size,
        where="hypothesis",
    ))
    if bundle.format_version != FORMAT_VERSION:
        issues.append(Issue(
            "version-unsupported", f"format_version {bundle.format_version}", ""))
    return issues


def parse_bundle(document: bytes | str, schema: Schema, limits: Limits | None = None) -> ModelBundle:
    """Parse and validate; raises on the first structural problem, or
    BundleValidationError carrying the full issue list for semantic ones."""
    limits = limits or Limits()
    data = document.encode("utf-8") if isinstance(document, str) else document
    if len(data) > limits.max_bundle_bytes:
        raise BundleTooLarge(len(data), limits.max_bundle_bytes)
    try:
        obj = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise BundleParseError(f"not UTF-8: {e}") from e
    except json.JSONDecodeError as e:
        raise BundleParseError(f"not valid JSON: {e.msg}", f"line {e.lineno} col {e.colno}") from e
    if not isinstance(obj, dict):
        raise BundleParseError("bundle must be a JSON object")
    extra = set(obj) - {"format_version", "group", "hypothesis", "metadata"}
    if extra:
        raise BundleParseError(f"unknown top-level keys {sorted(extra)}")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(version)
    if "group" not in obj or "hypothesis" not in obj:
        raise BundleParseError("bundle needs both group and hypothesis")

    group = obj["group"]
    try:
        if isinstance(group, str):
            pred = predicates.parse_text(group)
        elif isinstance(group, dict):
            pred = predicates.from_tree(group)
        else:
            raise BundleParseError("group must be predicate text or an expression tree")
    except PredicateSyntaxError as e:
        raise BundleParseError(f"bad group predicate: {e}", e.location) from e

    hyp = hypotheses.hypothesis_from_json(obj["hypothesis"])

    meta_obj = obj.get("metadata", {})
    if not isinstance(meta_obj, dict):
        raise BundleParseError("metadata must be an object")
    if not set(meta_obj) <= {"team", "note"}:
        raise BundleParseError(f"unknown metadata keys {sorted(set(meta_obj) - {'team', 'note'})}")
    team = meta_obj.get("team")
    note = meta_obj.get("note", "")
    if team is not None and not isinstance(team, str):
        raise BundleParseError("metadata.team must be a string")
    if not isinstance(note, str):
        raise BundleParseError("metadata.note must be a string")

    bundle = ModelBundle(pred, hyp, Metadata(team=team, note=note))
    issues = validate_bundle(bundle, schema, limits)
    if issues:
        raise BundleValidationError(issues)
    return bundle


def bundle_to_json_obj(bundle: ModelBundle) -> dict:
    obj = {
        "format_version": bundle.format_version,
        "group": predicates.to_text(bundle.predicate),
        "hypothesis": hypotheses.hypothesis_to_json(bundle.hypothesis),
        "metadata": {},
    }
    if bundle.metadata.team is not None:
        obj["metadata"]["team"] = bundle.metadata.team
    if bundle.metadata.note:
        obj["metadata"]["note"] = bundle.metadata.note
    return obj


def serialize_bundle(bundle: ModelBundle) -> bytes:
    """Canonical bytes: stable key order, compact separators, canonical group text."""
    return json.dumps(
        bundle_to_json_obj(bundle), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
