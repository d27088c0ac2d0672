from __future__ import annotations

import json
import os
import stat
import threading
import time
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from bountyboard.cli import main
from bountyboard.server import create_app
from bountyboard.service import CompetitionService

DEMO = Path(__file__).parent.parent / "demos" / "demo_competition"


@pytest.fixture
def comp(tmp_path):
    """state dir from `init` plus an in-process server over it."""
    state_dir = tmp_path / "state"
    code = main(["init", "--config", str(DEMO / "competition.json"),
                 "--out", str(state_dir)])
    assert code == 0
    service = CompetitionService.open(state_dir)
    app = create_app(service, start_worker=False)
    client = TestClient(app)
    factory = lambda url: client  # noqa: E731
    yield state_dir, service, client, factory
    service.close()


def organizer_token(state_dir) -> str:
    return (state_dir / "organizer_token").read_text().strip()


def cli_add_team(state_dir, factory, name, capsys):
    code = main(["add-team", name, "--server", "http://testserver",
                 "--organizer-token-file", str(state_dir / "organizer_token")],
                client_factory=factory)
    assert code == 0
    return json.loads(capsys.readouterr().out)["token"]


def test_init_writes_state_dir_and_refuses_rerun(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["init", "--config", str(DEMO / "competition.json"),
                 "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["rows"] == 800
    for name in ("config.json", "source.csv", "train.csv", "log.jsonl",
                 "organizer_token", "base_hypothesis.json"):
        assert (out / name).exists()
    assert main(["init", "--config", str(DEMO / "competition.json"),
                 "--out", str(out)]) == 1


def test_profile_set_restricts_permissions(tmp_path, capsys):
    profile = tmp_path / "profile.json"
    code = main(["profile", "set", "--server", "http://x", "--token", "sekrit",
                 "--team", "crew", "--profile", str(profile)])
    assert code == 0
    out = capsys.readouterr().out
    assert "sekrit" not in out  # token never printed
    assert stat.S_IMODE(os.stat(profile).st_mode) == 0o600
    assert json.loads(profile.read_text())["token"] == "sekrit"


def test_submit_status_leaderboard_flow(comp, tmp_path, capsys):
    state_dir, service, client, factory = comp
    token = cli_add_team(state_dir, factory, "demo-team", capsys)

    profile = tmp_path / "profile.json"
    main(["profile", "set", "--server", "http://testserver", "--token", token,
          "--team", "demo-team", "--profile", str(profile)])
    capsys.readouterr()

    code = main(["submit", str(DEMO / "sample_bundle.json"),
                 "--profile", str(profile)], client_factory=factory)
    assert code == 0
    assert capsys.readouterr().out.strip() == "submission 1 queued"

    service.process_pending()

    code = main(["status", "1", "--profile", str(profile)], client_factory=factory)
    assert code == 0
    text = capsys.readouterr().out
    assert "global: accepted" in text
    assert "w=" in text and "L(f,g)=" in text and "L(h,g)=" in text and "w*delta=" in text
    assert "points=" in text

    # accepted sample earns positive points on a fresh demo competition
    code = main(["status", "1", "--json", "--profile", str(profile)],
                client_factory=factory)
    receipt = json.loads(capsys.readouterr().out)
    assert receipt["verdict_global"]["points_awarded"] > 0

    code = main(["leaderboard", "--json", "--server", "http://testserver"],
                client_factory=factory)
    assert code == 0
    entries = json.loads(capsys.readouterr().out)
    assert entries == client.get("/leaderboard").json()["entries"]

    code = main(["leaderboard", "--server", "http://testserver"],
                client_factory=factory)
    table = capsys.readouterr().out
    assert "Global Model" in table and "demo-team" in table


def test_fetch_train_predictions(comp, tmp_path, capsys):
    state_dir, service, client, factory = comp
    out_file = tmp_path / "preds.csv"
    code = main(["fetch-train-predictions", "0", "-o", str(out_file),
                 "--server", "http://testserver"], client_factory=factory)
    assert code == 0
    lines = out_file.read_text().strip().splitlines()
    assert lines[0] == "row,prediction"
    assert len(lines) == service.state.splits.train.n_rows + 1


def test_cli_exit_codes(comp, tmp_path, capsys):
    state_dir, service, client, factory = comp
    token = cli_add_team(state_dir, factory, "demo-team", capsys)
    base = ["--server", "http://testserver", "--token", token]

    bad_bundle = tmp_path / "bad.json"
    bad_bundle.write_text(json.dumps({
        "format_version": 1, "group": "NOPE < 1",
        "hypothesis": {"kind": "constant", "value": 1.0}}))
    assert main(["submit", str(bad_bundle)] + base, client_factory=factory) == 3
    assert "unknown-feature" in capsys.readouterr().err

    assert main(["submit", str(DEMO / "sample_bundle.json"),
                 "--server", "http://testserver", "--token", "wrong"],
                client_factory=factory) == 4
    capsys.readouterr()

    assert main(["status", "99"] + base, client_factory=factory) == 6
    capsys.readouterr()

    # another team's receipt is forbidden
    main(["submit", str(DEMO / "sample_bundle.json")] + base, client_factory=factory)
    capsys.readouterr()
    other = cli_add_team(state_dir, factory, "rivals", capsys)
    assert main(["status", "1", "--server", "http://testserver",
                 "--token", other], client_factory=factory) == 5
    capsys.readouterr()

    # rate limit: demo config allows 25/day
    for i in range(24):
        assert main(["submit", str(DEMO / "sample_bundle.json")] + base,
                    client_factory=factory) == 0
        capsys.readouterr()
    assert main(["submit", str(DEMO / "sample_bundle.json")] + base,
                client_factory=factory) == 9
    capsys.readouterr()

    # freeze -> 409 -> exit 7
    client.post("/admin/freeze",
                headers={"Authorization": f"Bearer {organizer_token(state_dir)}"})
    assert main(["submit", str(DEMO / "sample_bundle.json"),
                 "--server", "http://testserver", "--token", other],
                client_factory=factory) == 7
    capsys.readouterr()


def test_report_command(comp, capsys):
    state_dir, service, client, factory = comp
    token = cli_add_team(state_dir, factory, "demo-team", capsys)
    client.post("/submissions", content=(DEMO / "sample_bundle.json").read_bytes(),
                headers={"Authorization": f"Bearer {token}"})
    service.process_pending()
    service.close()

    assert main(["report", str(state_dir)]) == 0
    text = capsys.readouterr().out
    assert "Training Loss" in text and "Validation Loss" in text \
        and "Test Loss" in text and "Updates" in text

    assert main(["report", str(state_dir), "--json"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["columns"] == ["model", "training_loss", "validation_loss",
                              "test_loss", "updates", "repairs"]
    assert {r["model"] for r in obj["rows"]} == {"Global Model", "demo-team"}


def test_replay_command(comp, tmp_path, capsys):
    state_dir, service, client, factory = comp
    token = cli_add_team(state_dir, factory, "demo-team", capsys)
    client.post("/submissions", content=(DEMO / "sample_bundle.json").read_bytes(),
                headers={"Authorization": f"Bearer {token}"})
    service.process_pending()
    transcript = service.export_transcript()
    tfile = tmp_path / "transcript.json"
    tfile.write_text(json.dumps(transcript))

    assert main(["replay", str(tfile), str(state_dir)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verified"] is True
    assert out["state_hash"] == transcript["final_state_hash"]

    transcript["final_state_hash"] = "0" * 64
    tfile.write_text(json.dumps(transcript))
    assert main(["replay", str(tfile), str(state_dir)]) == 1
    assert "replay failed" in capsys.readouterr().err


def test_serve_over_real_socket(comp):
    state_dir, service, client, factory = comp
    import uvicorn

    app = create_app(service, start_worker=False)
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.time() + 10
        while not server.started:
            if time.time() > deadline:
                pytest.fail("server did not start")
            time.sleep(0.02)
        port = server.servers[0].sockets[0].getsockname()[1]
        r = httpx.get(f"http://127.0.0.1:{port}/leaderboard", timeout=5)
        assert r.status_code == 200
        assert "entries" in r.json()
    finally:
        server.should_exit = True
        thread.join(timeout=10)
