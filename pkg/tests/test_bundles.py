from __future__ import annotations

import json

import numpy as np
import pytest

from bountyboard.bundles import (
    Limits,
    Metadata,
    ModelBundle,
    bundle_to_json_obj,
    parse_bundle,
    serialize_bundle,
    validate_bundle,
)
from bountyboard.errors import (
    BundleParseError,
    BundleTooLarge,
    BundleValidationError,
    VersionUnsupported,
)
from bountyboard.hypotheses import Constant, Leaf, Linear, NumericSplit, RegressionTree
from bountyboard.predicates import TruePred, eval_predicate
from bountyboard.tabular import Dataset

from conftest import random_dataset
from predgen import random_hypothesis, random_predicate


def doc(group="TRUE", hypothesis=None, **kw):
    obj = {
        "format_version": 1,
        "group": group,
        "hypothesis": hypothesis or {"kind": "constant", "value": 50000.0},
    }
    obj.update(kw)
    return json.dumps(obj).encode()


def test_parse_trivial_bundle(schema, rng):
    b = parse_bundle(doc(), schema)
    assert b.predicate == TruePred()
    assert b.hypothesis == Constant(50000.0)
    ds = random_dataset(rng, 12)
    assert eval_predicate(b.predicate, ds).all()


def test_parse_unknown_feature(schema):
    with pytest.raises(BundleValidationError) as ei:
        parse_bundle(doc(group="XYZ < 3"), schema)
    issues = ei.value.issues
    assert any(i.code == "unknown-feature" and "XYZ" in i.message for i in issues)


def test_parse_group_tree_form(schema):
    b = parse_bundle(
        doc(group={"op": "compare", "feature": "AGEP", "cmp": "<", "value": 30}),
        schema,
    )
    assert b.predicate.feature == "AGEP"


def test_parse_syntax_error_has_location(schema):
    with pytest.raises(BundleParseError) as ei:
        parse_bundle(doc(group="AGEP <"), schema)
    assert "offset" in str(ei.value)


def test_parse_version_unsupported(schema):
    bad = json.dumps({"format_version": 2, "group": "TRUE",
                      "hypothesis": {"kind": "constant", "value": 1.0}}).encode()
    with pytest.raises(VersionUnsupported):
        parse_bundle(bad, schema)


def test_parse_rejects_oversize(schema):
    limits = Limits(max_bundle_bytes=64)
    with pytest.raises(BundleTooLarge):
        parse_bundle(doc(metadata={"note": "x" * 200}), schema, limits)


def test_parse_rejects_garbage(schema):
    for raw in (b"not json", b"[1,2]", doc(extra=1),
                doc(metadata={"who": "me"}), b'{"format_version": 1}'):
        with pytest.raises(BundleParseError):
            parse_bundle(raw, schema)


def test_parse_rejects_nan_parameter(schema):
    # python's json accepts NaN literals; validation must catch them
    raw = b'{"format_version": 1, "group": "TRUE", "hypothesis": {"kind": "constant", "value": NaN}}'
    with pytest.raises(BundleValidationError) as ei:
        parse_bundle(raw, schema)
    assert any(i.code == "non-finite-parameter" for i in ei.value.issues)


def test_validate_depth_limit_boundary(schema):
    node = Leaf(0.0)
    for _ in range(5):
        node = NumericSplit("AGEP", 1.0, node, Leaf(0.0))
    bundle = ModelBundle(TruePred(), RegressionTree(node))
    limits = Limits(max_tree_depth=5)
    assert validate_bundle(bundle, schema, limits) == []
    limits = Limits(max_tree_depth=4)
    issues = validate_bundle(bundle, schema, limits)
    assert [i.code for i in issues] == ["limit-exceeded:tree-depth"]


def test_validate_predicate_limits(schema, rng):
    pred = random_predicate(rng, schema, depth=4)
    bundle = ModelBundle(pred, Constant(1.0))
    limits = Limits(max_predicate_depth=1, max_predicate_nodes=1)
    codes = {i.code for i in validate_bundle(bundle, schema, limits)}
    if pred.depth() > 1:
        assert "limit-exceeded:predicate-depth" in codes
    if pred.node_count() > 1:
        assert "limit-exceeded:predicate-nodes" in codes


def test_validate_nonfinite(schema):
    bundle = ModelBundle(TruePred(), Linear(intercept=float("inf")))
    issues = validate_bundle(bundle, schema, Limits())
    assert any(i.code == "non-finite-parameter" for i in issues)


def test_validate_valid_bundle_empty_list(schema):
    bundle = ModelBundle(TruePred(), Constant(3.0))
    assert validate_bundle(bundle, schema, Limits()) == []


def test_validation_is_exhaustive_not_first_failure(schema):
    bundle = ModelBundle(
        predicates_with_two_problems(),
        Linear(intercept=float("nan"), coefficients=(("NOPE", 1.0),)),
    )
    issues = validate_bundle(bundle, schema, Limits())
    assert len(issues) >= 3


def predicates_with_two_problems():
    from bountyboard.predicates import And, Compare

    return And((Compare("XYZ", "<", 1.0), Compare("SEX", "==", "9")))


def test_round_trip_500_random_bundles(schema, rng):
    for _ in range(500):
        bundle = ModelBundle(
            random_predicate(rng, schema),
            random_hypothesis(rng, schema),
            Metadata(team="t" + str(rng.integers(0, 9)), note="n"),
        )
        blob = serialize_bundle(bundle)
        again = parse_bundle(blob, schema)
        assert again == bundle
        # canonical serialization is stable byte-for-byte
        assert serialize_bundle(again) == blob


def test_validation_soundness_valid_bundles_always_evaluate(schema, rng):
    # anything that passes validate_bundle must evaluate without runtime error
    for _ in range(150):
        bundle = ModelBundle(random_predicate(rng, schema), random_hypothesis(rng, schema))
        assert validate_bundle(bundle, schema, Limits()) == []
        ds = random_dataset(rng, int(rng.integers(1, 25)))
        from bountyboard.hypotheses import predict

        mask = eval_predicate(bundle.predicate, ds)
        preds = predict(bundle.hypothesis, ds)
        assert mask.shape == preds.shape == (ds.n_rows,)
        lo, hi = schema.label_range
        assert (preds >= lo).all() and (preds <= hi).all()
