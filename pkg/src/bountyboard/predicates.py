"""Boolean group predicates over tabular features.

A predicate is a small expression AST — comparisons, set membership, and
AND/OR/NOT — evaluated row-wise with strict two-valued logic. It is the only
way a submission can select rows, which is what makes the submission format
free of executable code.

Two interchangeable encodings exist:

* surface text, e.g. ``AGEP < 30 AND RAC1P IN {"1", "2"}``
* a JSON expression tree, e.g. ``{"op": "compare", "feature": "AGEP", ...}``

ASTs are canonical by construction: nested AND-in-AND / OR-in-OR are
flattened and IN sets are sorted and deduplicated, so structural equality is
canonical equality and ``parse_text(to_text(p)) == p`` holds exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PredicateSyntaxError
from .issues import Issue
from .tabular import CATEGORICAL, NUMERIC, Dataset, Schema

COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")
ORDERED_OPS = ("<", "<=", ">", ">=")

_KEYWORDS = ("TRUE", "AND", "OR", "NOT", "IN")


@dataclass(frozen=True)
class TruePred:
    def evaluate(self, dataset: Dataset) -> np.ndarray:
        return np.ones(dataset.n_rows, dtype=bool)

    def node_count(self) -> int:
        return 1

    def depth(self) -> int:
        return 1


@dataclass(frozen=True)
class Compare:
    feature: str
    op: str
    value: float | str

    def __post_init__(self):
        if self.op not in COMPARE_OPS:
            raise PredicateSyntaxError(f"bad comparison operator {self.op!r}", "compare")
        if isinstance(self.value, (int, np.floating, np.integer)) and not isinstance(self.value, bool):
            object.__setattr__(self, "value", float(self.value))

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        feat = dataset.schema.feature(self.feature)
        col = dataset.column(self.feature)
        if feat.kind == NUMERIC:
            rhs = float(self.value)
        else:
            try:
                rhs = feat.allowed_values.index(self.value)
            except ValueError:
                # unknown category: == matches nothing, != matches everything
                return np.full(dataset.n_rows, self.op == "!=")
        if self.op == "==":
            return col == rhs
        if self.op == "!=":
            return col != rhs
        if self.op == "<":
            return col < rhs
        if self.op == "<=":
            return col <= rhs
        if self.op == ">":
            return col > rhs
        return col >= rhs

    def node_count(self) -> int:
        return 1

    def depth(self) -> int:
        return 1


@dataclass(frozen=True)
class In:
    feature: str
    values: tuple

    def __post_init__(self):
        vals = []
        for v in self.values:
            if isinstance(v, (int, np.floating, np.integer)) and not isinstance(v, bool):
                v = float(v)
            vals.append(v)
        floats = sorted({v for v in vals if isinstance(v, float)})
        strs = sorted({v for v in vals if isinstance(v, str)})
        object.__setattr__(self, "values", tuple(floats) + tuple(strs))

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        feat = dataset.schema.feature(self.feature)
        col = dataset.column(self.feature)
        if feat.kind == NUMERIC:
            wanted = [v for v in self.values if isinstance(v, float)]
            return np.isin(col, np.asarray(wanted, dtype=np.float64))
        codes = [
            feat.allowed_values.index(v)
            for v in self.values
            if isinstance(v, str) and v in feat.allowed_values
        ]
        return np.isin(col, np.asarray(codes, dtype=col.dtype))

    def node_count(self) -> int:
        return 1

    def depth(self) -> int:
        return 1


def _flatten(kind, children):
    flat = []
    for c in children:
        if isinstance(c, kind):
            flat.extend(c.children)
        else:
            flat.append(c)
    return tuple(flat)


@dataclass(frozen=True)
class And:
    children: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "children", _flatten(And, tuple(self.children)))
        if len(self.children) < 2:
            raise PredicateSyntaxError("AND requires at least two operands", "and")

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        out = self.children[0].evaluate(dataset)
        for c in self.children[1:]:
            out = out & c.evaluate(dataset)
        return out

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)

    def depth(self) -> int:
        return 1 + max(c.depth() for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "children", _flatten(Or, tuple(self.children)))
        if len(self.children) < 2:
            raise PredicateSyntaxError("OR requires at least two operands", "or")

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        out = self.children[0].evaluate(dataset)
        for c in self.children[1:]:
            out = out | c.evaluate(dataset)
        return out

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)

    def depth(self) -> int:
        return 1 + max(c.depth() for c in self.children)


@dataclass(frozen=True)
class Not:
    child: "Predicate"

    def evaluate(self, dataset: Dataset) -> np.ndarray:
        return ~self.child.evaluate(dataset)

    def node_count(self) -> int:
        return 1 + self.child.node_count()

    def depth(self) -> int:
        return 1 + self.child.depth()


Predicate = TruePred | Compare | In | And | Or | Not


def eval_predicate(pred: Predicate, dataset: Dataset) -> np.ndarray:
    """Row-wise boolean mask; TRUE yields the all-true mask."""
    mask = pred.evaluate(dataset)
    return np.asarray(mask, dtype=bool)


# ---------------------------------------------------------------------------
# semantic validation against a schema
# ---------------------------------------------------------------------------

def validate_predicate(pred: Predicate, schema: Schema, where: str = "group") -> list[Issue]:
    """Exhaustive semantic issues; empty list when valid against the schema."""
    issues: list[Issue] = []
    _validate(pred, schema, where, issues)
    return issues


def _validate(pred, schema, where, issues):
    if isinstance(pred, TruePred):
        return
    if isinstance(pred, Compare):
        if not schema.has_feature(pred.feature):
            issues.append(Issue("unknown-feature", f"no feature {pred.feature!r}", where))
            return
        feat = schema.feature(pred.feature)
        if feat.kind == NUMERIC:
            if not isinstance(pred.value, float):
                issues.append(Issue(
                    "type-mismatch",
                    f"numeric feature {pred.feature!r} compared to {pred.value!r}",
                    where,
                ))
            elif not math.isfinite(pred.value):
                issues.append(Issue("non-finite-constant", f"{pred.value!r}", where))
        else:
            if pred.op in ORDERED_OPS:
                issues.append(Issue(
                    "ordered-compare-on-categorical",
                    f"{pred.op} not allowed on categorical {pred.feature!r}",
                    where,
                ))
            if not isinstance(pred.value, str):
                issues.append(Issue(
                    "type-mismatch",
                    f"categorical feature {pred.feature!r} compared to {pred.value!r}",
                    where,
                ))
            elif pred.value not in feat.allowed_values:
                issues.append(Issue(
                    "unknown-category",
                    f"{pred.value!r} not an allowed value of {pred.feature!r}",
                    where,
                ))
        return
    if isinstance(pred, In):
        if not schema.has_feature(pred.feature):
            issues.append(Issue("unknown-feature", f"no feature {pred.feature!r}", where))
            return
        feat = schema.feature(pred.feature)
        want = float if feat.kind == NUMERIC else str
        for v in pred.values:
            if not isinstance(v, want):
                issues.append(Issue(
                    "type-mismatch",
                    f"{feat.kind} feature {pred.feature!r} vs set member {v!r}",
                    where,
                ))
            elif want is float and not math.isfinite(v):
                issues.append(Issue("non-finite-constant", f"{v!r}", where))
            elif want is str and v not in feat.allowed_values:
                issues.append(Issue(
                    "unknown-category",
                    f"{v!r} not an allowed value of {pred.feature!r}",
                    where,
                ))
        return
    if isinstance(pred, (And, Or)):
        for i, c in enumerate(pred.children):
            _validate(c, schema, f"{where}.children[{i}]", issues)
        return
    if isinstance(pred, Not):
        _validate(pred.child, schema, f"{where}.child", issues)
        return
    issues.append(Issue("bad-node", f"not a predicate node: {pred!r}", where))


# ---------------------------------------------------------------------------
# surface text
# ---------------------------------------------------------------------------

def _literal_text(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return json.dumps(value)


def to_text(pred: Predicate) -> str:
    """Canonical surface form; ``parse_text(to_text(p)) == p``."""
    if isinstance(pred, TruePred):
        return "TRUE"
    if isinstance(pred, Compare):
        return f"{pred.feature} {pred.op} {_literal_text(pred.value)}"
    if isinstance(pred, In):
        inner = ", ".join(_literal_text(v) for v in pred.values)
        return f"{pred.feature} IN {{{inner}}}"
    if isinstance(pred, Not):
        child = to_text(pred.child)
        if isinstance(pred.child, (And, Or)):
            child = f"({child})"
        return f"NOT {child}"
    if isinstance(pred, And):
        parts = []
        for c in pred.children:
            text = to_text(c)
            if isinstance(c, Or):
                text = f"({text})"
            parts.append(text)
        return " AND ".join(parts)
    if isinstance(pred, Or):
        return " OR ".join(to_text(c) for c in pred.children)
    raise TypeError(f"not a predicate: {pred!r}")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, object, int]] = []
        self._scan()
        self.i = 0

    def _err(self, message, pos):
        raise PredicateSyntaxError(message, f"offset {pos}")

    def _scan(self):
        text = self.text
        n = len(text)
        i = 0
        while i < n:
            ch = text[i]
            if ch in " \t\r\n":
                i += 1
                continue
            if ch in "(){},":
                kind = {"(": "LPAREN", ")": "RPAREN", "{": "LBRACE",
                        "}": "RBRACE", ",": "COMMA"}[ch]
                self.tokens.append((kind, ch, i))
                i += 1
                continue
            if ch in "=!<>":
                two = text[i:i + 2]
                if two in ("==", "!=", "<=", ">="):
                    self.tokens.append(("OP", two, i))
                    i += 2
                    continue
                if ch in "<>":
                    self.tokens.append(("OP", ch, i))
                    i += 1
                    continue
                self._err(f"unexpected character {ch!r}", i)
            if ch == '"':
                j = i + 1
                while j < n:
                    if text[j] == "\\":
                        j += 2
                        continue
                    if text[j] == '"':
                        break
                    j += 1
                if j >= n:
                    self._err("unterminated string literal", i)
                try:
                    value = json.loads(text[i:j + 1])
                except json.JSONDecodeError:
                    self._err("bad string literal", i)
                self.tokens.append(("STRING", value, i))
                i = j + 1
                continue
            if ch.isdigit() or ch == "." or (
                ch == "-" and i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")
            ):
                j = i + 1 if ch == "-" else i
                start = i
                while j < n and (text[j].isdigit() or text[j] in ".eE+-"):
                    # only allow +/- right after an exponent marker
                    if text[j] in "+-" and text[j - 1] not in "eE":
                        break
                    j += 1
                try:
                    value = float(text[start:j])
                except ValueError:
                    self._err(f"bad number {text[start:j]!r}", start)
                self.tokens.append(("NUMBER", value, start))
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                word = text[i:j]
                if word in _KEYWORDS:
                    self.tokens.append((word, word, i))
                else:
                    self.tokens.append(("IDENT", word, i))
                i = j
                continue
            self._err(f"unexpected character {ch!r}", i)
        self.tokens.append(("EOF", None, n))

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise PredicateSyntaxError(
                f"expected {kind}, got {tok[0]}", f"offset {tok[2]}"
            )
        return tok


def parse_text(text: str) -> Predicate:
    """Parse the surface syntax. Precedence: NOT > AND > OR."""
    tz = _Tokenizer(text)
    pred = _parse_or(tz)
    tok = tz.peek()
    if tok[0] != "EOF":
        raise PredicateSyntaxError(f"trailing input {tok[1]!r}", f"offset {tok[2]}")
    return pred


def _parse_or(tz):
    parts = [_parse_and(tz)]
    while tz.peek()[0] == "OR":
        tz.next()
        parts.append(_parse_and(tz))
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def _parse_and(tz):
    parts = [_parse_not(tz)]
    while tz.peek()[0] == "AND":
        tz.next()
        parts.append(_parse_not(tz))
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def _parse_not(tz):
    if tz.peek()[0] == "NOT":
        tz.next()
        return Not(_parse_not(tz))
    return _parse_atom(tz)


def _parse_atom(tz):
    kind, value, pos = tz.next()
    if kind == "TRUE":
        return TruePred()
    if kind == "LPAREN":
        inner = _parse_or(tz)
        tz.expect("RPAREN")
        return inner
    if kind == "IDENT":
        nxt = tz.next()
        if nxt[0] == "OP":
            lit = tz.next()
            if lit[0] not in ("NUMBER", "STRING"):
                raise PredicateSyntaxError(
                    f"expected literal after {nxt[1]!r}", f"offset {lit[2]}"
                )
            return Compare(value, nxt[1], lit[1])
        if nxt[0] == "IN":
            tz.expect("LBRACE")
            vals = []
            while True:
                lit = tz.next()
                if lit[0] not in ("NUMBER", "STRING"):
                    raise PredicateSyntaxError(
                        "expected literal in set", f"offset {lit[2]}"
                    )
                vals.append(lit[1])
                sep = tz.next()
                if sep[0] == "RBRACE":
                    break
                if sep[0] != "COMMA":
                    raise PredicateSyntaxError(
                        "expected ',' or '}' in set", f"offset {sep[2]}"
                    )
            return In(value, tuple(vals))
        raise PredicateSyntaxError(
            f"expected comparison or IN after {value!r}", f"offset {nxt[2]}"
        )
    raise PredicateSyntaxError(f"unexpected token {value!r}", f"offset {pos}")


# ---------------------------------------------------------------------------
# JSON expression tree
# ---------------------------------------------------------------------------

def to_tree(pred: Predicate) -> dict:
    if isinstance(pred, TruePred):
        return {"op": "true"}
    if isinstance(pred, Compare):
        return {"op": "compare", "feature": pred.feature, "cmp": pred.op,
                "value": pred.value}
    if isinstance(pred, In):
        return {"op": "in", "feature": pred.feature, "values": list(pred.values)}
    if isinstance(pred, And):
        return {"op": "and", "children": [to_tree(c) for c in pred.children]}
    if isinstance(pred, Or):
        return {"op": "or", "children": [to_tree(c) for c in pred.children]}
    if isinstance(pred, Not):
        return {"op": "not", "child": to_tree(pred.child)}
    raise TypeError(f"not a predicate: {pred!r}")


def _tree_err(msg, where):
    raise PredicateSyntaxError(msg, where)


def _check_keys(obj, allowed, where):
    extra = set(obj) - set(allowed)
    if extra:
        _tree_err(f"unknown keys {sorted(extra)}", where)


def from_tree(obj, where: str = "group") -> Predicate:
    if not isinstance(obj, dict) or "op" not in obj:
        _tree_err("expected an expression node object", where)
    op = obj["op"]
    if op == "true":
        _check_keys(obj, ("op",), where)
        return TruePred()
    if op == "compare":
        _check_keys(obj, ("op", "feature", "cmp", "value"), where)
        try:
            feature, cmp_, value = obj["feature"], obj["cmp"], obj["value"]
        except KeyError as e:
            _tree_err(f"compare node missing {e.args[0]!r}", where)
        if not isinstance(feature, str):
            _tree_err("feature must be a string", where)
        if cmp_ not in COMPARE_OPS:
            _tree_err(f"bad comparison operator {cmp_!r}", where)
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            _tree_err("comparison value must be a number or string", where)
        return Compare(feature, cmp_, value)
    if op == "in":
        _check_keys(obj, ("op", "feature", "values"), where)
        feature = obj.get("feature")
        values = obj.get("values")
        if not isinstance(feature, str):
            _tree_err("feature must be a string", where)
        if not isinstance(values, list) or not values:
            _tree_err("in node needs a nonempty values list", where)
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float, str)):
                _tree_err("set members must be numbers or strings", where)
        return In(feature, tuple(values))
    if op in ("and", "or"):
        _check_keys(obj, ("op", "children"), where)
        children = obj.get("children")
        if not isinstance(children, list) or len(children) < 2:
            _tree_err(f"{op} node needs at least two children", where)
        parsed = tuple(
            from_tree(c, f"{where}.children[{i}]") for i, c in enumerate(children)
        )
        return And(parsed) if op == "and" else Or(parsed)
    if op == "not":
        _check_keys(obj, ("op", "child"), where)
        if "child" not in obj:
            _tree_err("not node needs a child", where)
        return Not(from_tree(obj["child"], f"{where}.child"))
    _tree_err(f"unknown op {op!r}", where)
