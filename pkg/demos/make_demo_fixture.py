"""Regenerate the demo competition fixture in demos/demo_competition/.

The fixture is a small planted-structure task plus a sample bundle that a
fresh competition accepts: the sample groups on the tech sector, where the
constant base model is far off, and patches it with a shallow tree.
"""

from __future__ import annotations

import json
import shutil
import tempfile
from pathlib import Path

from bountyboard.bundles import ModelBundle, bundle_to_json_obj
from bountyboard.hypotheses import fit_tree
from bountyboard.predicates import parse_text
from bountyboard.service import CompetitionService
from bountyboard.synth import (
    CategoricalFeatureSpec,
    NumericFeatureSpec,
    Regime,
    TaskSpec,
    generate_task,
)
from bountyboard.tabular import dump_csv, load_csv

HERE = Path(__file__).parent
OUT = HERE / "demo_competition"


def demo_task() -> TaskSpec:
    return TaskSpec(
        seed=424242,
        n_rows=800,
        numeric=(
            NumericFeatureSpec("HOURS", 5, 60),
            NumericFeatureSpec("AGE", 18, 75),
        ),
        categorical=(
            CategoricalFeatureSpec("SECTOR", ("ag", "svc", "tech"), (0.4, 0.35, 0.25)),
            CategoricalFeatureSpec("REGION", ("north", "south"), (0.5, 0.5)),
        ),
        regime_feature="SECTOR",
        regimes=(
            ("ag", Regime(8000, (("HOURS", 300.0), ("AGE", 60.0)))),
            ("svc", Regime(12000, (("HOURS", 420.0), ("AGE", 90.0)))),
            ("tech", Regime(21000, (("HOURS", 900.0), ("AGE", 200.0)))),
        ),
        offsets=(("REGION", "south", -2500.0),),
        noise_sigma=2500.0,
    )


def main():
    OUT.mkdir(exist_ok=True)
    task = demo_task()
    source = generate_task(task)
    schema = task.schema()

    (OUT / "schema.json").write_text(
        json.dumps(schema.to_json_obj(), indent=2, sort_keys=True) + "\n")
    (OUT / "data.csv").write_bytes(dump_csv(source))
    config = {
        "alpha": 2_000_000.0,
        "seed": 20240301,
        "daily_submission_limit": 25,
        "reward_mode": "flat",
        "local_base": "constant",
        "base": "constant",
        "started_at": "2024-03-01T00:00:00+00:00",
        "schema_path": "schema.json",
        "data_path": "data.csv",
    }
    (OUT / "competition.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n")

    # build the sample bundle against the exact train split init would create
    with tempfile.TemporaryDirectory() as tmp:
        from bountyboard.competition import CompetitionConfig
        from bountyboard.tabular import Schema

        cfg = CompetitionConfig(
            alpha=config["alpha"], schema=schema, seed=config["seed"],
            daily_submission_limit=config["daily_submission_limit"])
        service = CompetitionService.create(cfg, source, state_dir=Path(tmp) / "s")
        train = service.state.splits.train
        pred = parse_text('SECTOR == "tech"')
        mask = pred.evaluate(train)
        import numpy as np

        sub = train.take(np.nonzero(mask)[0])
        model = fit_tree(sub, max_depth=2, min_leaf=10)
        bundle = ModelBundle(pred, model)
        obj = bundle_to_json_obj(bundle)
        obj["metadata"] = {"note": "patch the tech sector with a shallow tree"}
        (OUT / "sample_bundle.json").write_text(
            json.dumps(obj, indent=2, sort_keys=True) + "\n")

        # prove the sample is accepted on a fresh competition
        _, token = service.add_team("demo-team")
        receipt = service.submit(token, (OUT / "sample_bundle.json").read_bytes())
        service.process_pending()
        verdict = receipt.verdict_global
        assert verdict["decision"] == "accepted", verdict
        assert verdict["points_awarded"] > 0
        print("sample bundle accepted; points:", verdict["points_awarded"])
        service.close()

    print("fixture written to", OUT)


if __name__ == "__main__":
    main()
