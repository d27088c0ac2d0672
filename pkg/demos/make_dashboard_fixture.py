"""Record real server responses into a fixture for the dashboard tests.

Plays the canonical two-update-plus-repair competition through the actual
HTTP app and captures every body the dashboard consumes, so the frontend
test suite can assert field-for-field equivalence against genuine payloads.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from bountyboard.competition import CompetitionConfig
from bountyboard.server import create_app
from bountyboard.service import CompetitionService
from bountyboard.tabular import Dataset, Feature, Schema

OUT = Path(__file__).parent.parent / "frontend" / "test" / "fixtures"


def young_old_source() -> tuple[Schema, Dataset]:
    schema = Schema(
        features=(Feature("AGE", "numeric"), Feature("HOURS", "numeric")),
        label_name="INCOME",
        label_range=(0.0, 100000.0),
    )
    n_young, n_old = 30, 270
    ages = [22.0] * n_young + [55.0] * n_old
    hours = [20.0 + (i % 30) for i in range(n_young + n_old)]
    labels = [10000.0] * n_young + [50000.0] * n_old
    return schema, Dataset.from_values(schema, {"AGE": ages, "HOURS": hours}, labels)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    schema, source = young_old_source()
    config = CompetitionConfig(
        alpha=1000.0, schema=schema, seed=5, split_weights=(0.34, 0.33, 0.33))
    from bountyboard.hypotheses import Constant

    service = CompetitionService.create(config, source, Constant(30000.0))
    app = create_app(service, start_worker=False)
    client = TestClient(app)

    _, token = service.add_team("pioneers")
    auth = {"Authorization": f"Bearer {token}"}

    def bundle(group, value):
        return json.dumps({
            "format_version": 1,
            "group": group,
            "hypothesis": {"kind": "constant", "value": value},
        }).encode()

    # fix the young group, then a whole-dataset update that regresses it
    client.post("/submissions", content=bundle("AGE < 30.0", 10000.0), headers=auth)
    service.process_pending()
    client.post("/submissions", content=bundle("TRUE", 50000.0), headers=auth)
    service.process_pending()

    invalid = client.post(
        "/submissions",
        content=json.dumps({
            "format_version": 1, "group": "AGE < ",
            "hypothesis": {"kind": "constant", "value": 1.0}}).encode(),
        headers=auth)
    assert invalid.status_code == 422

    fixture = {
        "leaderboard": client.get("/leaderboard").json(),
        "events": client.get("/events", params={"since": 0}).json(),
        "structure": client.get("/model/global/structure").json(),
        "competition": client.get("/competition").json(),
        "receipts": {
            "1": client.get("/submissions/1", headers=auth).json(),
            "2": client.get("/submissions/2", headers=auth).json(),
        },
        "submit_422": invalid.json(),
    }
    events = fixture["events"]["events"]
    repairs = [e for e in events if e["kind"] == "repair_applied"]
    assert len(repairs) == 1, repairs  # exactly one repair for the back-edge check
    (OUT / "stream.json").write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")
    print(f"fixture written: {len(events)} events, "
          f"{len(fixture['structure']['nodes'])} nodes, 1 repair")
    service.close()


if __name__ == "__main__":
    main()
