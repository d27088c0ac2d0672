"""Deterministic scripted competitions.

A scenario bundles a synthetic task, a roster of scripted agents, and the
competition configuration. Running it drives the real service layer in
process: every proposal goes through submit -> admission queue -> evaluation,
with the validation and test splits guarded so any agent read of hidden data
raises. Outputs are the transcript (replayable, hash-verified), the final
report, and a claims summary stating which structural properties held.

The `southern_toy` scenario is the reference run: six agents on a 20k-row
task with planted sector/education/disability structure, tuned so that the
global model ends ahead of every local model and at least one whole-dataset
update triggers repairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from .agents import Agent, AgentContext, build_agent
from .bundles import serialize_bundle
from .competition import GLOBAL, CompetitionConfig, CompetitionState
from .errors import RateLimited
from .hypotheses import fit_tree, predict
from .pdl import PdlEvaluator, RepairNode, UpdateNode
from .service import CompetitionService
from .synth import (
    CategoricalFeatureSpec,
    NumericFeatureSpec,
    Regime,
    TaskSpec,
    generate_task,
)
from .tabular import group_loss, guarded, mse


@dataclass
class ScenarioSpec:
    name: str
    task: TaskSpec
    agents: list[dict]
    alpha_fraction: float  # alpha = fraction * base global validation MSE
    rounds: int
    seed: int = 0
    base_depth: int = 3
    base_min_leaf: int = 50
    daily_submission_limit: int = 200
    repair_epsilon: float = 0.0
    local_base: str = "constant"
    reward_mode: str = "flat"
    reward_rate: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "task": self.task.to_json_obj(),
            "agents": self.agents,
            "alpha_fraction": self.alpha_fraction,
            "rounds": self.rounds,
            "seed": self.seed,
            "base_depth": self.base_depth,
            "base_min_leaf": self.base_min_leaf,
            "daily_submission_limit": self.daily_submission_limit,
            "repair_epsilon": self.repair_epsilon,
            "local_base": self.local_base,
            "reward_mode": self.reward_mode,
            "reward_rate": self.reward_rate,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioSpec":
        return cls(
            name=obj["name"],
            task=TaskSpec.from_json_obj(obj["task"]),
            agents=list(obj["agents"]),
            alpha_fraction=float(obj["alpha_fraction"]),
            rounds=int(obj["rounds"]),
            seed=int(obj.get("seed", 0)),
            base_depth=int(obj.get("base_depth", 3)),
            base_min_leaf=int(obj.get("base_min_leaf", 50)),
            daily_submission_limit=int(obj.get("daily_submission_limit", 200)),
            repair_epsilon=float(obj.get("repair_epsilon", 0.0)),
            local_base=obj.get("local_base", "constant"),
            reward_mode=obj.get("reward_mode", "flat"),
            reward_rate=float(obj.get("reward_rate", 0.0)),
        )


@dataclass
class RunResult:
    scenario: ScenarioSpec
    service: CompetitionService
    transcript: dict
    report: object
    claims: dict

    @property
    def state(self) -> CompetitionState:
        return self.service.state

    def save(self, out_dir) -> dict:
        """Write the run artifacts: scenario spec, transcript, report, claims."""
        from pathlib import Path

        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "scenario": d / "scenario.json",
            "transcript": d / "transcript.json",
            "report_json": d / "report.json",
            "report_text": d / "report.txt",
            "claims_json": d / "claims.json",
            "claims_text": d / "claims.txt",
        }
        paths["scenario"].write_text(
            json.dumps(self.scenario.to_json_obj(), indent=2, sort_keys=True) + "\n")
        paths["transcript"].write_text(
            json.dumps(self.transcript, sort_keys=True) + "\n")
        paths["report_json"].write_text(
            json.dumps(self.report.to_json_obj(), indent=2, sort_keys=True) + "\n")
        paths["report_text"].write_text(self.report.to_text() + "\n")
        paths["claims_json"].write_text(
            json.dumps(self.claims, indent=2, sort_keys=True) + "\n")
        paths["claims_text"].write_text(claims_text(self.claims) + "\n")
        return {k: str(v) for k, v in paths.items()}


class CompetitionRun:
    """One scenario in flight; supports stopping and resuming mid-run."""

    def __init__(self, scenario: ScenarioSpec, state_dir=None,
                 alpha_scale: float = 1.0):
        self.scenario = scenario
        self.source = generate_task(scenario.task)
        schema = scenario.task.schema()

        probe = CompetitionConfig(alpha=1.0, schema=schema, seed=scenario.task.seed)
        from .tabular import split as split_fn

        parts = split_fn(self.source, probe.split_weights, probe.seed)
        base = fit_tree(parts.train, max_depth=scenario.base_depth,
                        min_leaf=scenario.base_min_leaf)
        base_val = mse(predict(base, parts.validation), parts.validation.labels)
        alpha = base_val * scenario.alpha_fraction * alpha_scale

        self.config = CompetitionConfig(
            alpha=alpha,
            schema=schema,
            seed=scenario.task.seed,
            repair_epsilon=scenario.repair_epsilon,
            daily_submission_limit=scenario.daily_submission_limit,
            reward_mode=scenario.reward_mode,
            reward_rate=scenario.reward_rate,
            local_base=scenario.local_base,
        )
        self.service = CompetitionService.create(
            self.config, self.source, base, state_dir=state_dir)
        self.agents: list[Agent] = [
            build_agent(spec, (scenario.seed, i))
            for i, spec in enumerate(scenario.agents)
        ]
        self._agent_rngs = [
            np.random.default_rng((scenario.seed, 7919, i))
            for i in range(len(self.agents))
        ]
        self.tokens: dict[str, str] = {}
        for agent in self.agents:
            team, token = self.service.add_team(
                agent.name, now=self.config.started_at)
            self.tokens[team] = token
        self.rounds_played = 0

    def attach_service(self, service: CompetitionService):
        """Continue the same run against a restarted server."""
        self.service = service

    def _now(self, round_index: int, agent_index: int):
        return (self.config.started_at
                + timedelta(hours=6 * round_index, minutes=5 * agent_index))

    def play_round(self, round_index: int) -> int:
        """Every agent takes one turn; returns how many bundles were submitted."""
        state = self.service.state
        submitted = 0
        for idx, agent in enumerate(self.agents):
            version = state.pdls[GLOBAL].version
            ctx = AgentContext(
                team=agent.name,
                round=round_index,
                train=state.splits.train,
                global_train_predictions=state.train_predictions(version),
                alpha=self.config.alpha,
                rng=self._agent_rngs[idx],
            )
            with guarded(state.splits.validation, state.splits.test):
                bundle = agent.propose(ctx)
            if bundle is None:
                continue
            try:
                self.service.submit(self.tokens[agent.name],
                                    serialize_bundle(bundle),
                                    now=self._now(round_index, idx))
            except RateLimited:
                continue
            self.service.process_pending()
            submitted += 1
        return submitted

    def play(self, rounds: int | None = None):
        target = self.scenario.rounds if rounds is None else rounds
        while self.rounds_played < target:
            self.play_round(self.rounds_played)
            self.rounds_played += 1
        return self

    def finish(self) -> RunResult:
        state = self.service.state
        transcript = self.service.export_transcript()
        report = state.final_report(state.splits.test)
        claims = build_claims(state, self.scenario, self.config)
        return RunResult(self.scenario, self.service, transcript, report, claims)


def run_competition(scenario: ScenarioSpec, state_dir=None,
                    alpha_scale: float = 1.0) -> RunResult:
    return CompetitionRun(scenario, state_dir=state_dir,
                          alpha_scale=alpha_scale).play().finish()


# ---------------------------------------------------------------------------
# independent verification (brute-force recomputation, no state bookkeeping)
# ---------------------------------------------------------------------------

def per_version_group_losses(state: CompetitionState, pdl_key: str) -> dict:
    """Fresh per-version loss table for every registered group of one PDL."""
    pdl = state.pdls[pdl_key]
    val = state.splits.validation
    ev = PdlEvaluator(pdl, val)  # fresh evaluator, not the state's cache
    tables = {}
    for rec in state.registries[pdl_key]:
        tables[id(rec)] = {
            v: group_loss(ev.predictions(v), val.labels, rec.mask)
            for v in range(rec.introduced_at, pdl.version + 1)
        }
    return tables


def verify_count_bound(state: CompetitionState) -> dict:
    """Theorem-style node bound: accepted nodes per PDL <= ceil(L0/alpha)."""
    worst = None
    ok = True
    per_pdl = {}
    for key, pdl in state.pdls.items():
        bound = math.ceil(state.base_val_loss[key] / state.config.alpha)
        nodes = len(pdl.nodes)
        per_pdl[key] = {"nodes": nodes, "bound": bound}
        if nodes > bound:
            ok = False
            worst = key
    return {"ok": ok, "worst": worst, "per_pdl": per_pdl}


def verify_group_monotonicity(state: CompetitionState, rel_tol: float = 1e-9) -> dict:
    """Group losses non-increasing across post-repair checkpoint versions."""
    worst = 0.0
    ok = True
    for key in state.pdls:
        tables = per_version_group_losses(state, key)
        for rec in state.registries[key]:
            checkpoints = [v for v in state.checkpoints[key]
                           if v >= rec.introduced_at]
            losses = [tables[id(rec)][v] for v in checkpoints]
            for a, b in zip(losses, losses[1:]):
                slack = (b - a) / max(1.0, abs(a))
                worst = max(worst, slack)
                if slack > rel_tol:
                    ok = False
    return {"ok": ok, "worst_relative_increase": worst}


def verify_strict_progress(state: CompetitionState, rel_tol: float = 1e-9) -> dict:
    """Accepted updates drop overall validation MSE by > alpha pre-repair, and
    the measured w*delta equals that drop (decomposition identity)."""
    alpha = state.config.alpha
    ok = True
    checked = 0
    worst_gap = 0.0
    for entry in state.log:
        for verdict in (entry.verdict_global, entry.verdict_local):
            if verdict["decision"] != "accepted":
                continue
            checked += 1
            m = verdict["measured"]
            drop = m["overall_before"] - m["overall_after_update"]
            if not drop > alpha:
                ok = False
            gap = abs(drop - m["weighted_improvement"]) / max(1.0, abs(drop))
            worst_gap = max(worst_gap, gap)
            if gap > rel_tol:
                ok = False
            if m["overall_after"] > m["overall_after_update"] + 1e-12:
                ok = False  # repairs must never increase overall loss
    return {"ok": ok, "accepted_checked": checked, "worst_identity_gap": worst_gap}


def build_claims(state: CompetitionState, scenario: ScenarioSpec,
                 config: CompetitionConfig) -> dict:
    global_accepted = sum(
        1 for e in state.log if e.verdict_global["decision"] == "accepted")
    local_accepted = sum(
        1 for e in state.log if e.verdict_local["decision"] == "accepted")
    true_with_repairs = sum(
        1 for e in state.log
        if e.verdict_global["decision"] == "accepted"
        and json.loads(e.bundle)["group"] == "TRUE"
        and e.verdict_global["repairs_triggered"])
    global_val = state.current_val_loss(GLOBAL)
    local_vals = {team: state.current_val_loss(team) for team in state.teams}
    min_local = min(local_vals.values()) if local_vals else math.inf
    gu = sum(1 for n in state.pdls[GLOBAL].nodes if isinstance(n, UpdateNode))
    gr = sum(1 for n in state.pdls[GLOBAL].nodes if isinstance(n, RepairNode))
    return {
        "scenario": scenario.name,
        "alpha": config.alpha,
        "submissions": len(state.log),
        "global_accepted": global_accepted,
        "local_accepted": local_accepted,
        "global_updates": gu,
        "global_repairs": gr,
        "whole_dataset_acceptances_with_repairs": true_with_repairs,
        "final_global_validation_mse": global_val,
        "min_local_validation_mse": min_local,
        "global_beats_locals": global_val <= min_local,
        "count_bound": verify_count_bound(state),
        "group_monotonicity": verify_group_monotonicity(state),
        "strict_progress": verify_strict_progress(state),
    }


def claims_text(claims: dict) -> str:
    lines = [f"scenario {claims['scenario']}  alpha={claims['alpha']:.4f}"]
    lines.append(
        f"submissions={claims['submissions']} global_accepted={claims['global_accepted']}"
        f" local_accepted={claims['local_accepted']}"
        f" global_nodes={claims['global_updates']}+{claims['global_repairs']}r")
    for key, label in (
        ("global_beats_locals", "global model <= every local model (validation)"),
        ("count_bound", "node count within ceil(L0/alpha)"),
        ("group_monotonicity", "registered group losses non-increasing"),
        ("strict_progress", "accepted updates drop overall MSE by > alpha"),
    ):
        value = claims[key]
        ok = value if isinstance(value, bool) else value["ok"]
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}")
    lines.append(
        f"whole-dataset acceptances that triggered repairs: "
        f"{claims['whole_dataset_acceptances_with_repairs']}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# reference and fuzz scenarios
# ---------------------------------------------------------------------------

def southern_toy() -> ScenarioSpec:
    task = TaskSpec(
        seed=7021,
        n_rows=20000,
        numeric=(
            NumericFeatureSpec("AGE", 18, 80),
            NumericFeatureSpec("HOURS", 5, 60),
            NumericFeatureSpec("TENURE", 0, 30),
            NumericFeatureSpec("COMMUTE", 0, 90),
        ),
        categorical=(
            CategoricalFeatureSpec("SECTOR", ("ag", "mfg", "tech", "svc", "gov"),
                                   (0.22, 0.22, 0.20, 0.22, 0.14)),
            CategoricalFeatureSpec("REGION", ("s1", "s2", "s3", "s4"),
                                   (0.30, 0.30, 0.25, 0.15)),
            CategoricalFeatureSpec("EDU", ("hs", "col", "grad"),
                                   (0.50, 0.35, 0.15)),
            CategoricalFeatureSpec("DIS", ("y", "n"), (0.10, 0.90)),
        ),
        regime_feature="SECTOR",
        regimes=(
            ("ag", Regime(6000, (("AGE", 40.0), ("HOURS", 260.0), ("TENURE", 80.0)))),
            ("mfg", Regime(14000, (("AGE", 110.0), ("HOURS", 520.0), ("TENURE", 150.0)))),
            ("tech", Regime(20000, (("AGE", 240.0), ("HOURS", 950.0), ("TENURE", 320.0)))),
            ("svc", Regime(10000, (("AGE", 90.0), ("HOURS", 410.0), ("TENURE", 100.0)))),
            ("gov", Regime(16000, (("AGE", 170.0), ("HOURS", 500.0), ("TENURE", 260.0)))),
        ),
        offsets=(
            ("EDU", "col", 8000.0),
            ("EDU", "grad", 18000.0),
            ("REGION", "s2", 1500.0),
            ("REGION", "s3", -2000.0),
            ("REGION", "s4", 4500.0),
            ("DIS", "y", -6000.0),
        ),
        slope_overrides=(("DIS", "y", "HOURS", -200.0),),
        noise_sigma=3500.0,
    )
    agents = [
        {"kind": "kaggle_style", "name": "fullfit", "margin": 0.5,
         "depth_schedule": [4, 5, 6, 7, 8, 8, 8, 8, 8, 8, 9, 9], "min_leaf": 30},
        {"kind": "manual_conditioner", "name": "sector-crew", "depth": 4, "margin": 0.2,
         "depth_growth": 1,
         "conditions": [f'SECTOR == "{v}"' for v in ("tech", "ag", "mfg", "svc", "gov")]},
        {"kind": "manual_conditioner", "name": "edu-region", "depth": 4, "margin": 0.2,
         "depth_growth": 1,
         "conditions": ['EDU == "grad"', 'EDU == "hs"', 'REGION == "s4"',
                        'REGION == "s3" AND EDU == "col"', 'EDU == "col"',
                        'REGION == "s1"', 'REGION == "s2" AND EDU == "hs"']},
        {"kind": "manual_conditioner", "name": "dis-advocates", "depth": 3, "margin": 0.2,
         "depth_growth": 1,
         "conditions": ['DIS == "y"', 'DIS == "y" AND HOURS < 30.0',
                        'DIS == "y" AND SECTOR == "tech"', 'DIS == "y" AND AGE >= 50.0']},
        {"kind": "automated_searcher", "name": "auto-scan", "budget": 12,
         "depth": 3, "min_rows": 150, "margin": 0.3},
        {"kind": "automated_searcher", "name": "auto-combo", "budget": 20,
         "depth": 3, "min_rows": 150, "pairs": True, "margin": 0.3},
    ]
    return ScenarioSpec(
        name="southern-toy",
        task=task,
        agents=agents,
        alpha_fraction=0.002,
        rounds=12,
        seed=4177,
    )


def fuzz_scenario(seed: int) -> ScenarioSpec:
    """Small randomized scenario for property sweeps; a few seconds each."""
    rng = np.random.default_rng(seed)
    n_regime = int(rng.integers(3, 5))
    regime_values = tuple(f"r{i}" for i in range(n_regime))
    extra_values = tuple(f"v{i}" for i in range(int(rng.integers(2, 4))))
    numeric = (
        NumericFeatureSpec("X1", 0, float(rng.uniform(20, 120))),
        NumericFeatureSpec("X2", 0, float(rng.uniform(20, 120))),
    )
    regimes = tuple(
        (v, Regime(float(rng.uniform(5000, 40000)),
                   (("X1", float(rng.uniform(50, 900))),
                    ("X2", float(rng.uniform(-300, 300))))))
        for v in regime_values
    )
    offsets = tuple(
        ("C2", v, float(rng.uniform(-9000, 9000))) for v in extra_values
    )
    task = TaskSpec(
        seed=int(rng.integers(0, 2**31)),
        n_rows=int(rng.integers(1500, 2600)),
        numeric=numeric,
        categorical=(
            CategoricalFeatureSpec("C1", regime_values),
            CategoricalFeatureSpec("C2", extra_values),
        ),
        regime_feature="C1",
        regimes=regimes,
        offsets=offsets,
        noise_sigma=float(rng.uniform(500, 4000)),
    )
    agents = [
        {"kind": "kaggle_style", "name": "whole",
         "depth_schedule": [3, 4, 5, 6], "min_leaf": 15},
        {"kind": "manual_conditioner", "name": "conds", "depth": 3, "min_leaf": 5,
         "conditions": [f'C1 == "{v}"' for v in regime_values]},
        {"kind": "automated_searcher", "name": "scan",
         "budget": 10, "depth": 2, "min_rows": 25,
         "pairs": bool(rng.integers(0, 2))},
    ]
    return ScenarioSpec(
        name=f"fuzz-{seed}",
        task=task,
        agents=agents,
        alpha_fraction=float(rng.uniform(0.004, 0.03)),
        rounds=int(rng.integers(3, 5)),
        seed=seed,
    )


def alpha_sweep(scenario: ScenarioSpec, scales=(0.5, 1.0, 2.0, 4.0, 8.0)) -> list[dict]:
    """Re-run the same scenario seeds at scaled acceptance thresholds."""
    table = []
    for scale in scales:
        result = run_competition(scenario, alpha_scale=scale)
        claims = result.claims
        table.append({
            "alpha_scale": scale,
            "alpha": claims["alpha"],
            "global_accepted": claims["global_accepted"],
            "local_accepted": claims["local_accepted"],
            "total_accepted": claims["global_accepted"] + claims["local_accepted"],
        })
        result.service.close()
    return table
