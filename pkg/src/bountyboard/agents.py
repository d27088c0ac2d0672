"""Scripted competitor strategies for the simulation harness.

Agents see only the training split and the published global training
predictions (the same artifacts real competitors get) and are deliberately
open-loop: what they propose depends on the round number and the published
predictions, never on their own past verdicts, so whole-run behavior stays
comparable across acceptance-threshold sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundles import Metadata, ModelBundle
from .hypotheses import fit_constant, fit_tree
from .predicates import (
    And,
    Compare,
    Predicate,
    TruePred,
    eval_predicate,
    parse_text,
    to_text,
)
from .tabular import CATEGORICAL, NUMERIC, Dataset


@dataclass
class AgentContext:
    team: str
    round: int
    train: Dataset
    global_train_predictions: np.ndarray
    alpha: float
    rng: np.random.Generator


class Agent:
    """Interface: produce at most one bundle per round."""

    name: str

    def propose(self, ctx: AgentContext) -> ModelBundle | None:
        raise NotImplementedError


def _fit_group_model(train: Dataset, rows: np.ndarray, depth: int, min_leaf: int):
    sub = train.take(rows)
    if sub.n_rows < 4 * min_leaf or depth == 0:
        return fit_constant(sub)
    return fit_tree(sub, max_depth=depth, min_leaf=min_leaf)


def _estimate(train: Dataset, preds: np.ndarray, mask: np.ndarray, model) -> float:
    """Optimistic w*(L(f,g) - L(h,g)) estimated on training data."""
    from .hypotheses import predict

    w = mask.mean()
    y = train.labels
    lf = float(np.mean((preds[mask] - y[mask]) ** 2))
    sub_rows = np.nonzero(mask)[0]
    sub = train.take(sub_rows)
    lh = float(np.mean((predict(model, sub) - sub.labels) ** 2))
    return float(w * (lf - lh))


@dataclass
class ManualConditioner(Agent):
    """Cycles through hand-picked group conditions, fixing one per round.

    With depth_growth > 0 the fitted tree deepens on every later pass over the
    condition list, so a group already fixed once can be improved again."""

    name: str
    conditions: list[str]  # predicate texts, tried round-robin
    depth: int = 4
    min_leaf: int = 10
    margin: float = 1.0  # submit when estimated gain > margin * alpha
    depth_growth: int = 0
    max_depth: int = 8

    def propose(self, ctx: AgentContext) -> ModelBundle | None:
        if not self.conditions:
            return None
        pred = parse_text(self.conditions[ctx.round % len(self.conditions)])
        mask = eval_predicate(pred, ctx.train)
        if not mask.any():
            return None
        rows = np.nonzero(mask)[0]
        cycle = ctx.round // len(self.conditions)
        depth = min(self.depth + self.depth_growth * cycle, self.max_depth)
        model = _fit_group_model(ctx.train, rows, depth, self.min_leaf)
        est = _estimate(ctx.train, ctx.global_train_predictions, mask, model)
        if est <= self.margin * ctx.alpha:
            return None
        return ModelBundle(pred, model, Metadata(team=ctx.team, note=self.name))


@dataclass
class KaggleStyle(Agent):
    """Whole-dataset replacement attempts: g is always TRUE."""

    name: str
    depth_schedule: list[int]
    min_leaf: int = 25
    margin: float = 1.0

    def propose(self, ctx: AgentContext) -> ModelBundle | None:
        depth = self.depth_schedule[min(ctx.round, len(self.depth_schedule) - 1)]
        model = fit_tree(ctx.train, max_depth=depth, min_leaf=self.min_leaf)
        mask = np.ones(ctx.train.n_rows, dtype=bool)
        est = _estimate(ctx.train, ctx.global_train_predictions, mask, model)
        if est <= self.margin * ctx.alpha:
            return None
        return ModelBundle(TruePred(), model, Metadata(team=ctx.team, note=self.name))


@dataclass
class AutomatedSearcher(Agent):
    """Enumerates single-feature (and optionally two-feature) groups, ranked
    by estimated weighted improvement on train residuals."""

    name: str
    budget: int = 16
    depth: int = 3
    min_leaf: int = 10
    min_rows: int = 40
    pairs: bool = False
    margin: float = 1.0
    _submitted: set[str] = field(default_factory=set, repr=False)

    def _atoms(self, train: Dataset) -> list[Predicate]:
        atoms: list[Predicate] = []
        for feat in train.schema.features:
            if feat.kind == NUMERIC:
                col = train.column(feat.name)
                for q in (0.25, 0.5, 0.75):
                    thr = float(np.quantile(col, q))
                    atoms.append(Compare(feat.name, "<", thr))
                    atoms.append(Compare(feat.name, ">=", thr))
            else:
                for value in feat.allowed_values:
                    atoms.append(Compare(feat.name, "==", value))
        return atoms

    def _candidates(self, train: Dataset, rng: np.random.Generator) -> list[Predicate]:
        atoms = self._atoms(train)
        cands = list(atoms)
        if self.pairs and len(atoms) >= 2:
            for _ in range(2 * self.budget):
                i, j = rng.choice(len(atoms), size=2, replace=False)
                a, b = atoms[int(i)], atoms[int(j)]
                if isinstance(a, Compare) and isinstance(b, Compare) \
                        and a.feature == b.feature:
                    continue
                cands.append(And((a, b)))
        return cands

    def propose(self, ctx: AgentContext) -> ModelBundle | None:
        train = ctx.train
        y = train.labels
        resid_sq = np.square(ctx.global_train_predictions - y)
        scored: list[tuple[float, str, Predicate, np.ndarray]] = []
        for pred in self._candidates(train, ctx.rng):
            text = to_text(pred)
            if text in self._submitted:
                continue
            mask = eval_predicate(pred, train)
            count = int(mask.sum())
            if count < self.min_rows:
                continue
            w = count / train.n_rows
            loss_now = float(resid_sq[mask].mean())
            best_possible = float(y[mask].var())
            scored.append((w * (loss_now - best_possible), text, pred, mask))
        scored.sort(key=lambda item: (-item[0], item[1]))
        for est_ceiling, text, pred, mask in scored[: self.budget]:
            if est_ceiling <= self.margin * ctx.alpha:
                break
            rows = np.nonzero(mask)[0]
            model = _fit_group_model(train, rows, self.depth, self.min_leaf)
            est = _estimate(train, ctx.global_train_predictions, mask, model)
            if est > self.margin * ctx.alpha:
                self._submitted.add(text)
                return ModelBundle(pred, model, Metadata(team=ctx.team, note=self.name))
        return None


def build_agent(spec: dict, seed) -> Agent:
    """Instantiate an agent from its scenario-file description."""
    kind = spec["kind"]
    if kind == "manual_conditioner":
        return ManualConditioner(
            name=spec["name"],
            conditions=list(spec["conditions"]),
            depth=int(spec.get("depth", 4)),
            min_leaf=int(spec.get("min_leaf", 10)),
            margin=float(spec.get("margin", 1.0)),
            depth_growth=int(spec.get("depth_growth", 0)),
            max_depth=int(spec.get("max_depth", 8)),
        )
    if kind == "kaggle_style":
        return KaggleStyle(
            name=spec["name"],
            depth_schedule=[int(d) for d in spec["depth_schedule"]],
            min_leaf=int(spec.get("min_leaf", 25)),
            margin=float(spec.get("margin", 1.0)),
        )
    if kind == "automated_searcher":
        return AutomatedSearcher(
            name=spec["name"],
            budget=int(spec.get("budget", 16)),
            depth=int(spec.get("depth", 3)),
            min_leaf=int(spec.get("min_leaf", 10)),
            min_rows=int(spec.get("min_rows", 40)),
            pairs=bool(spec.get("pairs", False)),
            margin=float(spec.get("margin", 1.0)),
        )
    raise ValueError(f"unknown agent kind {kind!r}")
