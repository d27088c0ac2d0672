"""Competition host service: admission-ordered evaluation, receipts, events,
credentials, rate limiting, and durable persistence.

Transport-agnostic: the HTTP layer in server.py and the in-process simulation
harness both drive this object. Prechecks (auth, freeze, size, quota, parse,
validate) run synchronously at submit time; accepted-for-evaluation
submissions are appended to the durable log *at enqueue*, assigned a dense
admission id, and evaluated strictly in id order — by the background worker
when started, or via process_pending() when driven synchronously.

The append-only log (admin actions + admitted submissions) is the source of
truth: open() replays it through the deterministic competition core, which
reproduces the exact state hash, receipts, and event feed.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bundles import parse_bundle, serialize_bundle
from .competition import (
    GLOBAL,
    CompetitionConfig,
    CompetitionState,
    next_utc_midnight,
    utc,
)
from .errors import (
    AuthError,
    BundleTooLarge,
    CompetitionFrozen,
    QueueFull,
    RateLimited,
    UnknownTeam,
)
from .hypotheses import Hypothesis, hypothesis_from_json, hypothesis_to_json
from .pdl import RepairNode, UpdateNode
from .predicates import to_text
from .tabular import Dataset, dump_csv, load_csv


def _hash_token(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


@dataclass
class TeamCredential:
    team: str
    token_hash: str
    created_at: datetime
    revoked_at: datetime | None = None


@dataclass
class SubmissionReceipt:
    id: int
    team: str
    received_at: datetime
    status: str = "queued"  # queued | evaluated | rejected_precheck
    verdict_global: dict | None = None
    verdict_local: dict | None = None
    reason: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "team": self.team,
            "received_at": self.received_at.isoformat(),
            "status": self.status,
            "verdict_global": self.verdict_global,
            "verdict_local": self.verdict_local,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class CompetitionEvent:
    seq: int
    kind: str
    at: datetime
    payload: dict

    def to_json_obj(self) -> dict:
        return {"seq": self.seq, "kind": self.kind,
                "at": self.at.isoformat(), "payload": self.payload}


CONFIG_FILE = "config.json"
SOURCE_FILE = "source.csv"
TRAIN_FILE = "train.csv"
BASE_FILE = "base_hypothesis.json"
TOKEN_FILE = "organizer_token"
LOG_FILE = "log.jsonl"


class CompetitionService:
    """Single competition host; thread-safe, single admission order."""

    def __init__(self, state: CompetitionState, organizer_token: str,
                 state_dir: str | Path | None = None,
                 clock=None):
        self.state = state
        self.organizer_token = organizer_token
        self.state_dir = Path(state_dir) if state_dir else None
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.credentials: dict[str, TeamCredential] = {}
        self.receipts: dict[int, SubmissionReceipt] = {}
        self.events: list[CompetitionEvent] = []
        self.frozen = False
        self.memory_log: list[dict] = []
        self._next_id = 1
        self._queue: deque[int] = deque()
        self._pending: dict[int, tuple[str, bytes, datetime]] = {}
        self._lock = threading.RLock()
        self._event_cond = threading.Condition(self._lock)
        self._queue_cond = threading.Condition(self._lock)
        self._worker: threading.Thread | None = None
        self._stopping = False
        self._log_fh = None
        if self.state_dir:
            self._log_fh = open(self.state_dir / LOG_FILE, "a", encoding="utf-8")

    # -- construction ---------------------------------------------------------

    @classmethod
    def create(cls, config: CompetitionConfig, source: Dataset,
               global_base: Hypothesis | None = None,
               state_dir: str | Path | None = None,
               organizer_token: str | None = None,
               clock=None) -> "CompetitionService":
        state = CompetitionState.build(config, source, global_base)
        organizer_token = organizer_token or secrets.token_hex(16)
        if state_dir:
            d = Path(state_dir)
            d.mkdir(parents=True, exist_ok=False)
            (d / CONFIG_FILE).write_text(
                json.dumps(config.to_json_obj(), indent=2, sort_keys=True))
            (d / SOURCE_FILE).write_bytes(dump_csv(source))
            (d / TRAIN_FILE).write_bytes(dump_csv(state.splits.train))
            (d / BASE_FILE).write_text(
                json.dumps(hypothesis_to_json(state.global_base), sort_keys=True))
            token_path = d / TOKEN_FILE
            token_path.write_text(organizer_token)
            os.chmod(token_path, 0o600)
            (d / LOG_FILE).touch()
        return cls(state, organizer_token, state_dir, clock)

    @classmethod
    def open(cls, state_dir: str | Path, clock=None) -> "CompetitionService":
        """Rebuild the whole service by replaying the append-only log."""
        d = Path(state_dir)
        config = CompetitionConfig.from_json_obj(
            json.loads((d / CONFIG_FILE).read_text()))
        source = load_csv(config.schema, (d / SOURCE_FILE).read_bytes())
        base = hypothesis_from_json(json.loads((d / BASE_FILE).read_text()))
        organizer_token = (d / TOKEN_FILE).read_text().strip()
        state = CompetitionState.build(config, source, base)
        entries = [
            json.loads(line)
            for line in (d / LOG_FILE).read_text().splitlines()
            if line.strip()
        ]
        service = cls.__new__(cls)
        CompetitionService.__init__(service, state, organizer_token, None, clock)
        for entry in entries:
            service._replay_entry(entry)
        service.state_dir = d
        service._log_fh = open(d / LOG_FILE, "a", encoding="utf-8")
        return service

    def _replay_entry(self, entry: dict):
        kind = entry["kind"]
        at = datetime.fromisoformat(entry["at"])
        if kind == "add_team":
            self.state.register_team(entry["team"], at)
            self.credentials[entry["team"]] = TeamCredential(
                entry["team"], entry["token_hash"], at)
            self.memory_log.append(entry)
        elif kind == "revoke_team":
            self.credentials[entry["team"]].revoked_at = at
            self.memory_log.append(entry)
        elif kind == "freeze":
            self.frozen = True
            self.memory_log.append(entry)
        elif kind == "submission":
            sid = int(entry["id"])
            body = entry["bundle"].encode("utf-8")
            self.memory_log.append(entry)
            self._next_id = max(self._next_id, sid + 1)
            self.receipts[sid] = SubmissionReceipt(sid, entry["team"], at)
            self._evaluate(sid, entry["team"], body, at)
        else:
            raise ValueError(f"unknown log entry kind {kind!r}")

    def _persist(self, obj: dict):
        self.memory_log.append(obj)
        if self._log_fh:
            self._log_fh.write(json.dumps(obj, sort_keys=True) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())

    def close(self):
        self.stop()
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    # -- team administration ----------------------------------------------------

    def check_organizer(self, token: str):
        if not (isinstance(token, str)
                and hmac.compare_digest(token, self.organizer_token)):
            raise AuthError("organizer token required")

    def add_team(self, name: str, now: datetime | None = None) -> tuple[str, str]:
        """Returns (team id, plaintext token). The token is never stored or
        retrievable again; only its hash persists."""
        ok_chars = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_"
        if not isinstance(name, str) or not name or len(name) > 64 \
                or not all(c in ok_chars for c in name):
            raise ValueError("team name must be 1-64 chars of [A-Za-z0-9_-]")
        now = utc(now or self.clock())
        token = secrets.token_hex(16)
        with self._lock:
            self.state.register_team(name, now)  # raises DuplicateTeam
            self.credentials[name] = TeamCredential(name, _hash_token(token), now)
            self._persist({"kind": "add_team", "team": name,
                           "token_hash": _hash_token(token), "at": now.isoformat()})
        return name, token

    def revoke_team(self, name: str, now: datetime | None = None):
        now = utc(now or self.clock())
        with self._lock:
            cred = self.credentials.get(name)
            if cred is None:
                raise UnknownTeam(name)
            cred.revoked_at = now
            self._persist({"kind": "revoke_team", "team": name, "at": now.isoformat()})

    def authenticate(self, token: str) -> str:
        """Bearer token -> team id; constant-time hash comparison."""
        if not isinstance(token, str) or not token:
            raise AuthError("missing token")
        digest = _hash_token(token)
        with self._lock:
            for cred in self.credentials.values():
                if hmac.compare_digest(digest, cred.token_hash):
                    if cred.revoked_at is not None:
                        raise AuthError("credential revoked")
                    return cred.team
        raise AuthError("unknown token")

    def freeze(self, now: datetime | None = None):
        now = utc(now or self.clock())
        with self._lock:
            if not self.frozen:
                self.frozen = True
                self._persist({"kind": "freeze", "at": now.isoformat()})

    # -- submission intake --------------------------------------------------------

    def _pending_today(self, team: str, now: datetime) -> int:
        day = utc(now).date().isoformat()
        return sum(
            1 for sid in self._queue
            if self._pending[sid][0] == team
            and self._pending[sid][2].date().isoformat() == day
        )

    def submit(self, token: str, body: bytes, now: datetime | None = None) -> SubmissionReceipt:
        team = self.authenticate(token)
        now = utc(now or self.clock())
        if self.frozen:
            raise CompetitionFrozen("competition is frozen")
        limits = self.state.config.limits
        if len(body) > limits.max_bundle_bytes:
            raise BundleTooLarge(len(body), limits.max_bundle_bytes)
        with self._lock:
            used = self.state.submissions_today(team, now) + self._pending_today(team, now)
            if used >= self.state.config.daily_submission_limit:
                raise RateLimited(next_utc_midnight(now))
            if len(self._queue) >= self.state.config.queue_depth_limit:
                raise QueueFull(f"queue depth {len(self._queue)}")
            # parse+validate inside the lock so admission ids stay dense
            bundle = parse_bundle(body, self.state.config.schema, limits)
            canonical = serialize_bundle(bundle)
            sid = self._next_id
            self._next_id += 1
            self._persist({"kind": "submission", "id": sid, "team": team,
                           "at": now.isoformat(),
                           "bundle": canonical.decode("utf-8")})
            receipt = SubmissionReceipt(sid, team, now)
            self.receipts[sid] = receipt
            self._pending[sid] = (team, canonical, now)
            self._queue.append(sid)
            self._queue_cond.notify_all()
        return receipt

    # -- evaluation ---------------------------------------------------------------

    def _evaluate(self, sid: int, team: str, body: bytes, at: datetime):
        """Apply one admitted submission; caller holds the admission order."""
        receipt = self.receipts[sid]
        before_board = [e.to_json_obj() for e in self.state.leaderboard()]
        try:
            bundle = parse_bundle(body, self.state.config.schema,
                                  self.state.config.limits)
            vg, vl = self.state.apply_submission(team, bundle, at)
        except Exception as e:  # revoked mid-queue, over-quota replays, etc.
            receipt.status = "rejected_precheck"
            receipt.reason = f"{type(e).__name__}: {e}"
            return
        receipt.status = "evaluated"
        receipt.verdict_global = vg.to_json_obj()
        receipt.verdict_local = vl.to_json_obj()
        if vg.accepted:
            m = vg.measured
            self._emit("global_update_accepted", at, {
                "version": vg.version,
                "team": team,
                "error_reduction": m.overall_before - m.overall_after,
                "train_predictions": f"/model/global/{vg.version}/train-predictions",
            })
            for repair in vg.repairs_triggered:
                self._emit("repair_applied", at, {
                    "version": repair.version,
                    "group": repair.group,
                    "target_version": repair.target_version,
                })
        after_board = [e.to_json_obj() for e in self.state.leaderboard()]
        if after_board != before_board:
            self._emit("leaderboard_changed", at, {})

    def _emit(self, kind: str, at: datetime, payload: dict):
        with self._event_cond:  # reentrant; replay calls arrive without the lock
            event = CompetitionEvent(len(self.events) + 1, kind, at, payload)
            self.events.append(event)
            self._event_cond.notify_all()

    def process_pending(self) -> int:
        """Evaluate everything queued, in admission order; returns the count."""
        done = 0
        while True:
            with self._lock:
                if not self._queue:
                    return done
                sid = self._queue.popleft()
                team, body, at = self._pending.pop(sid)
                self._evaluate(sid, team, body, at)
                done += 1

    # -- background worker ----------------------------------------------------------

    def start(self):
        if self._worker is not None:
            return
        self._stopping = False
        self._worker = threading.Thread(target=self._run_worker, daemon=True,
                                        name="bountyboard-eval")
        self._worker.start()

    def stop(self):
        with self._lock:
            self._stopping = True
            self._queue_cond.notify_all()
        if self._worker is not None:
            self._worker.join(timeout=10)
            self._worker = None

    def _run_worker(self):
        while True:
            with self._lock:
                while not self._queue and not self._stopping:
                    self._queue_cond.wait(timeout=0.5)
                if self._stopping and not self._queue:
                    return
                sid = self._queue.popleft()
                team, body, at = self._pending.pop(sid)
                self._evaluate(sid, team, body, at)

    def drain(self, timeout: float = 30.0):
        """Block until the queue is empty (worker mode) or process it inline."""
        if self._worker is None:
            self.process_pending()
            return
        deadline = datetime.now(timezone.utc).timestamp() + timeout
        while datetime.now(timezone.utc).timestamp() < deadline:
            with self._lock:
                if not self._queue:
                    return
            threading.Event().wait(0.005)
        raise TimeoutError("queue did not drain")

    # -- reads ------------------------------------------------------------------------

    def get_receipt(self, sid: int, requester: str | None,
                    is_organizer: bool = False) -> SubmissionReceipt:
        with self._lock:
            receipt = self.receipts.get(sid)
        if receipt is None:
            raise KeyError(sid)
        if not is_organizer and requester != receipt.team:
            raise PermissionError("not your submission")
        return receipt

    def leaderboard(self) -> list[dict]:
        with self._lock:
            return [e.to_json_obj() for e in self.state.leaderboard()]

    def competition_info(self) -> dict:
        cfg = self.state.config
        return {
            "alpha": cfg.alpha,
            "repair_epsilon": cfg.repair_epsilon,
            "daily_submission_limit": cfg.daily_submission_limit,
            "reward_mode": cfg.reward_mode,
            "schema": cfg.schema.to_json_obj(),
            "limits": cfg.limits.to_json_obj(),
            "global_version": self.state.pdls[GLOBAL].version,
            "frozen": self.frozen,
            "teams": list(self.state.teams),
        }

    def train_predictions_csv(self, version: int) -> str:
        with self._lock:
            preds = self.state.train_predictions(version)
        lines = ["row,prediction"]
        lines.extend(f"{i},{repr(float(p))}" for i, p in enumerate(preds))
        return "\r\n".join(lines) + "\r\n"

    def global_structure(self) -> dict:
        """Node chain of the global model: enough to draw it, no parameters."""
        with self._lock:
            pdl = self.state.pdls[GLOBAL]
            nodes = []
            for node in pdl.nodes:
                if isinstance(node, UpdateNode):
                    nodes.append({"version": node.version, "kind": "update",
                                  "group": to_text(node.predicate)})
                else:
                    nodes.append({"version": node.version, "kind": "repair",
                                  "group": to_text(node.predicate),
                                  "target_version": node.target_version})
            return {"version": pdl.version, "nodes": nodes}

    def events_since(self, since: int, timeout: float = 0.0) -> list[dict]:
        """Events with sequence > since; blocks up to timeout when empty."""
        with self._event_cond:
            fresh = [e for e in self.events if e.seq > since]
            if fresh or timeout <= 0:
                return [e.to_json_obj() for e in fresh]
            self._event_cond.wait(timeout)
            return [e.to_json_obj() for e in self.events if e.seq > since]

    def admin_state(self) -> dict:
        with self._lock:
            return {
                "state_hash": self.state.state_hash(),
                "model_hash": self.state.model_hash(),
                "global_version": self.state.pdls[GLOBAL].version,
                "teams": list(self.state.teams),
                "scores": dict(self.state.scores),
                "frozen": self.frozen,
                "log_length": len(self.memory_log),
                "queued": len(self._queue),
                "events": len(self.events),
            }

    def export_transcript(self) -> dict:
        with self._lock:
            return self.state.export_transcript()
