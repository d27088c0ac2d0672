"""Competition semantics over pointer decision lists.

One global PDL shared by everyone plus one local PDL per team. A submission
is evaluated independently against both: the group's weighted improvement on
the hidden validation split must strictly exceed alpha (which, by the loss
decomposition identity, equals the overall validation-MSE drop the prepend
would cause). Accepted updates register their group; every later version
that regresses a registered group beyond repair_epsilon triggers automatic
repairs routing the group back to its historically best version, iterated to
a fixpoint in ascending introduction order.

Scoring: global acceptances earn points equal to the net overall validation
drop (update plus its repairs), optionally scaled over time. Local
acceptances earn no points; they move the team's leaderboard entry.

All state transitions are pure functions of (config, source data, submission
log), so replaying a transcript reproduces the exact state hash.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta, timezone

import numpy as np

from .bundles import Limits, ModelBundle, serialize_bundle
from .errors import BadSpec, DuplicateTeam, RateLimited, UnknownTeam
from .hypotheses import (
    Constant,
    Hypothesis,
    fit_constant,
    fit_tree,
    hypothesis_from_json,
    hypothesis_to_json,
    predict,
)
from .pdl import PdlEvaluator, PointerDecisionList, RepairNode, UpdateNode
from .predicates import Predicate, eval_predicate, to_text
from .tabular import Dataset, Schema, SplitSet, group_loss, group_weight, mse, split

GLOBAL = "global"

REWARD_MODES = ("flat", "time_scaled")
LOCAL_BASES = ("constant", "stump")


def utc(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def next_utc_midnight(now: datetime) -> datetime:
    now = utc(now)
    return datetime.combine(now.date() + timedelta(days=1), time(0), tzinfo=timezone.utc)


@dataclass
class CompetitionConfig:
    alpha: float
    schema: Schema
    seed: int
    repair_epsilon: float = 0.0
    daily_submission_limit: int = 50
    reward_mode: str = "flat"
    reward_rate: float = 0.0
    local_base: str = "constant"
    split_weights: tuple[float, float, float] = (0.70, 0.15, 0.15)
    limits: Limits = field(default_factory=Limits)
    started_at: datetime = field(
        default_factory=lambda: datetime(2024, 1, 1, tzinfo=timezone.utc))
    queue_depth_limit: int = 1024

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise BadSpec(f"alpha must be > 0, got {self.alpha}")
        if self.repair_epsilon < 0:
            raise BadSpec("repair_epsilon must be >= 0")
        if self.daily_submission_limit < 1:
            raise BadSpec("daily_submission_limit must be positive")
        if self.reward_mode not in REWARD_MODES:
            raise BadSpec(f"reward_mode must be one of {REWARD_MODES}")
        if self.local_base not in LOCAL_BASES:
            raise BadSpec(f"local_base must be one of {LOCAL_BASES}")
        if self.queue_depth_limit < 1:
            raise BadSpec("queue_depth_limit must be positive")
        self.started_at = utc(self.started_at)

    def reward_scale(self, now: datetime) -> float:
        if self.reward_mode == "flat":
            return 1.0
        days = max(0.0, (utc(now) - self.started_at).total_seconds() / 86400.0)
        return 1.0 + self.reward_rate * days

    def to_json_obj(self) -> dict:
        return {
            "alpha": self.alpha,
            "schema": self.schema.to_json_obj(),
            "seed": self.seed,
            "repair_epsilon": self.repair_epsilon,
            "daily_submission_limit": self.daily_submission_limit,
            "reward_mode": self.reward_mode,
            "reward_rate": self.reward_rate,
            "local_base": self.local_base,
            "split_weights": list(self.split_weights),
            "limits": self.limits.to_json_obj(),
            "started_at": self.started_at.isoformat(),
            "queue_depth_limit": self.queue_depth_limit,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CompetitionConfig":
        return cls(
            alpha=float(obj["alpha"]),
            schema=Schema.from_json_obj(obj["schema"]),
            seed=int(obj["seed"]),
            repair_epsilon=float(obj.get("repair_epsilon", 0.0)),
            daily_submission_limit=int(obj.get("daily_submission_limit", 50)),
            reward_mode=obj.get("reward_mode", "flat"),
            reward_rate=float(obj.get("reward_rate", 0.0)),
            local_base=obj.get("local_base", "constant"),
            split_weights=tuple(obj.get("split_weights", (0.70, 0.15, 0.15))),
            limits=Limits.from_json_obj(obj.get("limits", {})) if obj.get("limits") else Limits(),
            started_at=datetime.fromisoformat(obj["started_at"]) if "started_at" in obj
            else datetime(2024, 1, 1, tzinfo=timezone.utc),
            queue_depth_limit=int(obj.get("queue_depth_limit", 1024)),
        )


@dataclass
class GroupRecord:
    predicate: Predicate
    introduced_at: int
    best_version: int
    best_val_loss: float
    current_val_loss: float
    mask: np.ndarray  # over the validation split; runtime cache

    def to_json_obj(self) -> dict:
        return {
            "group": to_text(self.predicate),
            "introduced_at": self.introduced_at,
            "best_version": self.best_version,
            "best_val_loss": self.best_val_loss,
            "current_val_loss": self.current_val_loss,
        }


@dataclass(frozen=True)
class Measured:
    weight: float
    loss_current: float | None
    loss_candidate: float | None
    weighted_improvement: float | None
    overall_before: float
    overall_after_update: float | None
    overall_after: float | None

    def to_json_obj(self) -> dict:
        return {
            "weight": self.weight,
            "loss_current": self.loss_current,
            "loss_candidate": self.loss_candidate,
            "weighted_improvement": self.weighted_improvement,
            "overall_before": self.overall_before,
            "overall_after_update": self.overall_after_update,
            "overall_after": self.overall_after,
        }


@dataclass(frozen=True)
class RepairAction:
    group: str
    target_version: int
    version: int

    def to_json_obj(self) -> dict:
        return {"group": self.group, "target_version": self.target_version,
                "version": self.version}


@dataclass
class Verdict:
    decision: str  # "accepted" | "rejected"
    reason: str | None
    measured: Measured
    version: int | None = None
    repairs_triggered: list[RepairAction] = field(default_factory=list)
    points_awarded: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.decision == "accepted"

    def to_json_obj(self) -> dict:
        return {
            "decision": self.decision,
            "reason": self.reason,
            "measured": self.measured.to_json_obj(),
            "version": self.version,
            "repairs_triggered": [r.to_json_obj() for r in self.repairs_triggered],
            "points_awarded": self.points_awarded,
        }


@dataclass(frozen=True)
class LeaderboardEntry:
    team: str
    display_name: str
    validation_loss: float
    accepted_updates: int
    repairs: int
    points: float
    is_global: bool = False

    def to_json_obj(self) -> dict:
        return {
            "team": self.team,
            "display_name": self.display_name,
            "validation_loss": self.validation_loss,
            "accepted_updates": self.accepted_updates,
            "repairs": self.repairs,
            "points": self.points,
            "is_global": self.is_global,
        }


REPORT_COLUMNS = ("model", "training_loss", "validation_loss", "test_loss",
                  "updates", "repairs")


@dataclass(frozen=True)
class ReportRow:
    model: str
    training_loss: float
    validation_loss: float
    test_loss: float
    updates: int
    repairs: int


@dataclass(frozen=True)
class FinalReport:
    rows: tuple[ReportRow, ...]

    def to_json_obj(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "rows": [
                {c: getattr(r, c) for c in REPORT_COLUMNS}
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        headers = ("Model", "Training Loss", "Validation Loss", "Test Loss",
                   "Updates", "Repairs")
        cells = [
            (r.model, f"{r.training_loss:.2f}", f"{r.validation_loss:.2f}",
             f"{r.test_loss:.2f}", str(r.updates), str(r.repairs))
            for r in self.rows
        ]
        widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
                  for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for c in cells:
            lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)))
        return "\n".join(lines)


@dataclass
class TeamInfo:
    team: str
    index: int
    registered_at: datetime
    last_accepted_local: datetime | None = None
    last_accepted_global: datetime | None = None


@dataclass(frozen=True)
class LogEntry:
    seq: int
    team: str
    at: datetime
    bundle: bytes  # canonical serialization
    verdict_global: dict
    verdict_local: dict

    def to_json_obj(self) -> dict:
        return {
            "seq": self.seq,
            "team": self.team,
            "at": self.at.isoformat(),
            "bundle": self.bundle.decode("utf-8"),
            "verdict_global": self.verdict_global,
            "verdict_local": self.verdict_local,
        }


def evaluate_acceptance(pdl: PointerDecisionList, bundle: ModelBundle,
                        validation: Dataset, alpha: float) -> Verdict:
    """Dry-run acceptance test; never mutates the PDL.

    For an accepted verdict, overall_after_update is the hypothetical drop via
    the decomposition identity; overall_after stays None because repairs are
    not simulated here.
    """
    ev = PdlEvaluator(pdl, validation)
    return _measure(pdl, ev, bundle, validation, alpha)


def _measure(pdl, ev, bundle, validation, alpha) -> Verdict:
    y = validation.labels
    head = ev.predictions(pdl.version)
    overall_before = mse(head, y)
    mask = eval_predicate(bundle.predicate, validation)
    if not mask.any():
        measured = Measured(0.0, None, None, None,
                            overall_before, overall_before, overall_before)
        return Verdict("rejected", "empty-group", measured)
    w = group_weight(mask)
    loss_f = group_loss(head, y, mask)
    loss_h = group_loss(predict(bundle.hypothesis, validation), y, mask)
    improvement = w * (loss_f - loss_h)
    measured = Measured(w, loss_f, loss_h, improvement,
                        overall_before, None, None)
    if improvement > alpha:
        hypothetical = Measured(w, loss_f, loss_h, improvement, overall_before,
                                overall_before - improvement, None)
        return Verdict("accepted", None, hypothetical)
    rejected = Measured(w, loss_f, loss_h, improvement, overall_before,
                        overall_before, overall_before)
    return Verdict("rejected", "below-threshold", rejected)


class CompetitionState:
    """Global and per-team PDLs plus all bookkeeping; single-writer."""

    def __init__(self, config: CompetitionConfig, splits: SplitSet,
                 global_base: Hypothesis):
        self.config = config
        self.splits = splits
        self.global_base = global_base
        self.pdls: dict[str, PointerDecisionList] = {
            GLOBAL: PointerDecisionList(global_base, config.schema, config.limits)
        }
        self._val_eval: dict[str, PdlEvaluator] = {
            GLOBAL: PdlEvaluator(self.pdls[GLOBAL], splits.validation)
        }
        self._train_eval: dict[str, PdlEvaluator] = {
            GLOBAL: PdlEvaluator(self.pdls[GLOBAL], splits.train)
        }
        self.registries: dict[str, list[GroupRecord]] = {GLOBAL: []}
        self.base_val_loss: dict[str, float] = {
            GLOBAL: mse(self._val_eval[GLOBAL].predictions(0), splits.validation.labels)
        }
        self.teams: dict[str, TeamInfo] = {}
        self.scores: dict[str, float] = {}
        self.log: list[LogEntry] = []
        self.checkpoints: dict[str, list[int]] = {GLOBAL: [0]}
        self._daily_counts: dict[tuple[str, str], int] = {}
        self._local_base: Hypothesis | None = None
        self._leaderboard_cache: list[LeaderboardEntry] | None = None

    # -- setup --------------------------------------------------------------

    @classmethod
    def build(cls, config: CompetitionConfig, source: Dataset,
              global_base: Hypothesis | None = None) -> "CompetitionState":
        """Split the source deterministically and train the base if not given."""
        parts = split(source, config.split_weights, config.seed)
        if global_base is None:
            global_base = fit_constant(parts.train)
        return cls(config, parts, global_base)

    def _local_base_hypothesis(self) -> Hypothesis:
        if self._local_base is None:
            if self.config.local_base == "constant":
                self._local_base = fit_constant(self.splits.train)
            else:
                self._local_base = fit_tree(self.splits.train, max_depth=1)
        return self._local_base

    def register_team(self, team: str, now: datetime) -> None:
        if team in self.teams:
            raise DuplicateTeam(team)
        self.teams[team] = TeamInfo(team, len(self.teams), utc(now))
        pdl = PointerDecisionList(
            self._local_base_hypothesis(), self.config.schema, self.config.limits)
        self.pdls[team] = pdl
        self._val_eval[team] = PdlEvaluator(pdl, self.splits.validation)
        self.registries[team] = []
        self.base_val_loss[team] = mse(
            self._val_eval[team].predictions(0), self.splits.validation.labels)
        self.scores[team] = 0.0
        self.checkpoints[team] = [0]
        self._leaderboard_cache = None

    # -- rate limiting --------------------------------------------------------

    def submissions_today(self, team: str, now: datetime) -> int:
        return self._daily_counts.get((team, utc(now).date().isoformat()), 0)

    def _check_rate_limit(self, team: str, now: datetime):
        if self.submissions_today(team, now) >= self.config.daily_submission_limit:
            raise RateLimited(next_utc_midnight(now))

    # -- core transition ------------------------------------------------------

    def evaluate_acceptance(self, pdl_key: str, bundle: ModelBundle) -> Verdict:
        """Dry run against the cached evaluator for one PDL."""
        pdl = self.pdls[pdl_key]
        return _measure(pdl, self._val_eval[pdl_key], bundle,
                        self.splits.validation, self.config.alpha)

    def apply_submission(self, team: str, bundle: ModelBundle,
                         now: datetime) -> tuple[Verdict, Verdict]:
        if team not in self.teams:
            raise UnknownTeam(team)
        now = utc(now)
        self._check_rate_limit(team, now)

        verdict_global = self._apply_to_pdl(GLOBAL, bundle)
        verdict_local = self._apply_to_pdl(team, bundle)

        if verdict_global.accepted:
            drop = (verdict_global.measured.overall_before
                    - verdict_global.measured.overall_after)
            points = drop * self.config.reward_scale(now)
            verdict_global.points_awarded = points
            self.scores[team] += points
            self.teams[team].last_accepted_global = now
        if verdict_local.accepted:
            self.teams[team].last_accepted_local = now

        entry = LogEntry(
            seq=len(self.log) + 1,
            team=team,
            at=now,
            bundle=serialize_bundle(bundle),
            verdict_global=verdict_global.to_json_obj(),
            verdict_local=verdict_local.to_json_obj(),
        )
        self.log.append(entry)
        key = (team, now.date().isoformat())
        self._daily_counts[key] = self._daily_counts.get(key, 0) + 1
        if verdict_global.accepted or verdict_local.accepted:
            self._leaderboard_cache = None
        return verdict_global, verdict_local

    def _apply_to_pdl(self, pdl_key: str, bundle: ModelBundle) -> Verdict:
        pdl = self.pdls[pdl_key]
        ev = self._val_eval[pdl_key]
        validation = self.splits.validation
        y = validation.labels

        verdict = _measure(pdl, ev, bundle, validation, self.config.alpha)
        if not verdict.accepted:
            return verdict

        m = verdict.measured
        version = pdl.prepend_update(bundle.predicate, bundle.hypothesis)
        self._register_group(pdl_key, bundle.predicate, version)
        self._refresh_records(pdl_key)
        repairs = self._run_repairs(pdl_key)
        overall_after_update = mse(ev.predictions(version), y)
        overall_after = mse(ev.predictions(pdl.version), y)
        self.checkpoints[pdl_key].append(pdl.version)
        measured = Measured(
            weight=m.weight,
            loss_current=m.loss_current,
            loss_candidate=m.loss_candidate,
            weighted_improvement=m.weighted_improvement,
            overall_before=m.overall_before,
            overall_after_update=overall_after_update,
            overall_after=overall_after,
        )
        return Verdict("accepted", None, measured, version=version,
                       repairs_triggered=repairs)

    def _register_group(self, pdl_key: str, predicate: Predicate, version: int):
        registry = self.registries[pdl_key]
        for rec in registry:
            if rec.predicate == predicate:
                return  # same canonical predicate shares one record
        mask = eval_predicate(predicate, self.splits.validation)
        registry.append(GroupRecord(
            predicate=predicate,
            introduced_at=version,
            best_version=version,
            best_val_loss=math.inf,
            current_val_loss=math.inf,
            mask=mask,
        ))

    def _refresh_records(self, pdl_key: str):
        pdl = self.pdls[pdl_key]
        head = self._val_eval[pdl_key].predictions(pdl.version)
        y = self.splits.validation.labels
        for rec in self.registries[pdl_key]:
            cur = group_loss(head, y, rec.mask)
            rec.current_val_loss = cur
            if cur < rec.best_val_loss:
                rec.best_val_loss = cur
                rec.best_version = pdl.version

    def _run_repairs(self, pdl_key: str) -> list[RepairAction]:
        pdl = self.pdls[pdl_key]
        eps = self.config.repair_epsilon
        applied: list[RepairAction] = []
        # each repair strictly lowers overall validation MSE and head states
        # cannot repeat, so the fixpoint is finite; the cap only guards
        # against an implementation bug turning into a hang
        cap = 64 * (len(self.registries[pdl_key]) + 1) + 64
        passes = 0
        while True:
            passes += 1
            if passes > cap:
                raise RuntimeError("repair fixpoint failed to converge")
            fired = False
            for rec in self.registries[pdl_key]:
                if rec.current_val_loss > rec.best_val_loss + eps:
                    version = pdl.prepend_repair(rec.predicate, rec.best_version)
                    applied.append(RepairAction(
                        to_text(rec.predicate), rec.best_version, version))
                    self._refresh_records(pdl_key)
                    fired = True
            if not fired:
                return applied

    # -- reads ---------------------------------------------------------------

    def _pdl_counts(self, pdl_key: str) -> tuple[int, int]:
        updates = sum(1 for n in self.pdls[pdl_key].nodes if isinstance(n, UpdateNode))
        repairs = sum(1 for n in self.pdls[pdl_key].nodes if isinstance(n, RepairNode))
        return updates, repairs

    def current_val_loss(self, pdl_key: str) -> float:
        pdl = self.pdls[pdl_key]
        return mse(self._val_eval[pdl_key].predictions(pdl.version),
                   self.splits.validation.labels)

    def leaderboard(self) -> list[LeaderboardEntry]:
        """Sorted ascending by local validation loss; ties break to the earlier
        last-accepted timestamp, then registration order; includes a synthetic
        Global Model row."""
        if self._leaderboard_cache is not None:
            return self._leaderboard_cache
        far_future = datetime(9999, 1, 1, tzinfo=timezone.utc)
        keyed = []
        gu, gr = self._pdl_counts(GLOBAL)
        global_last = max(
            (t.last_accepted_global for t in self.teams.values()
             if t.last_accepted_global), default=None)
        keyed.append((
            (self.current_val_loss(GLOBAL), global_last or far_future, -1),
            LeaderboardEntry(GLOBAL, "Global Model", self.current_val_loss(GLOBAL),
                             gu, gr, 0.0, is_global=True),
        ))
        for info in self.teams.values():
            lu, lr = self._pdl_counts(info.team)
            loss = self.current_val_loss(info.team)
            keyed.append((
                (loss, info.last_accepted_local or far_future, info.index),
                LeaderboardEntry(info.team, info.team, loss, lu, lr,
                                 self.scores[info.team]),
            ))
        keyed.sort(key=lambda pair: pair[0])
        self._leaderboard_cache = [entry for _, entry in keyed]
        return self._leaderboard_cache

    def final_report(self, test: Dataset) -> FinalReport:
        """Train/validation/test losses per model; the only place test is read."""
        rows = []
        for key in [GLOBAL] + list(self.teams):
            pdl = self.pdls[key]
            updates, repairs = self._pdl_counts(key)
            train_loss = mse(pdl.predict(self.splits.train), self.splits.train.labels)
            val_loss = self.current_val_loss(key)
            test_loss = mse(pdl.predict(test), test.labels)
            rows.append(ReportRow(
                model="Global Model" if key == GLOBAL else key,
                training_loss=train_loss,
                validation_loss=val_loss,
                test_loss=test_loss,
                updates=updates,
                repairs=repairs,
            ))
        rows.sort(key=lambda r: (r.test_loss, r.model))
        return FinalReport(tuple(rows))

    def train_predictions(self, version: int) -> np.ndarray:
        """Cached global-model training predictions for a published version."""
        return self._train_eval[GLOBAL].predictions(version)

    # -- hashing / transcript --------------------------------------------------

    def model_obj(self) -> dict:
        """Everything the competition has decided, minus the raw log."""
        return {
            "config": self.config.to_json_obj(),
            "global_base": hypothesis_to_json(self.global_base),
            "teams": [
                [t.team, t.index, t.registered_at.isoformat()]
                for t in self.teams.values()
            ],
            "pdls": {key: self.pdls[key].to_json_obj() for key in self.pdls},
            "registries": {
                key: [rec.to_json_obj() for rec in recs]
                for key, recs in self.registries.items()
            },
            "scores": dict(self.scores),
        }

    def snapshot_obj(self) -> dict:
        obj = self.model_obj()
        obj["log"] = [entry.to_json_obj() for entry in self.log]
        return obj

    def model_hash(self) -> str:
        """Hash of decided state only; rejected submissions leave it unchanged."""
        blob = json.dumps(self.model_obj(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def state_hash(self) -> str:
        """Hash of the full state including the submission log; the replay and
        crash-recovery fixed point."""
        blob = json.dumps(self.snapshot_obj(), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def export_transcript(self) -> dict:
        return {
            "format": "bountyboard-transcript-1",
            "config": self.config.to_json_obj(),
            "global_base": hypothesis_to_json(self.global_base),
            "teams": [
                [t.team, t.registered_at.isoformat()] for t in self.teams.values()
            ],
            "entries": [entry.to_json_obj() for entry in self.log],
            "final_state_hash": self.state_hash(),
        }


def replay_transcript(transcript: dict, source: Dataset,
                      verify: bool = True) -> CompetitionState:
    """Rebuild a competition from its transcript and the source dataset.

    Re-applies every submission; with verify=True, checks each entry's
    verdicts and the final state hash byte-for-byte.
    """
    from .bundles import parse_bundle

    config = CompetitionConfig.from_json_obj(transcript["config"])
    base = hypothesis_from_json(transcript["global_base"])
    state = CompetitionState.build(config, source, base)
    for team, registered_at in transcript["teams"]:
        state.register_team(team, datetime.fromisoformat(registered_at))
    for entry in transcript["entries"]:
        bundle = parse_bundle(entry["bundle"].encode("utf-8"), config.schema,
                              config.limits)
        vg, vl = state.apply_submission(
            entry["team"], bundle, datetime.fromisoformat(entry["at"]))
        if verify:
            if vg.to_json_obj() != entry["verdict_global"] \
                    or vl.to_json_obj() != entry["verdict_local"]:
                raise BadSpec(f"replay diverged at seq {entry['seq']}")
    if verify:
        want = transcript.get("final_state_hash")
        got = state.state_hash()
        if want is not None and got != want:
            raise BadSpec(f"replayed state hash {got} != recorded {want}")
    return state
