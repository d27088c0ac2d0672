"""Command-line entry points.

Organizer commands (init, serve, add-team, report, replay) manage a state
directory and a running server; competitor commands (submit, status,
leaderboard, fetch-train-predictions) are thin wrappers over the HTTP API,
configured through a profile file. Every command prints human-readable text
by default and JSON with --json; HTTP failures map to distinct exit codes.

Exit codes: 0 ok, 1 error, 2 usage, 3 invalid bundle (422), 4 auth (401),
5 forbidden (403), 6 not found (404), 7 conflict (409), 8 too large (413),
9 rate limited (429), 10 connection failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .competition import CompetitionConfig, replay_transcript
from .errors import BountyError
from .hypotheses import fit_constant, fit_tree, hypothesis_from_json
from .service import (
    BASE_FILE,
    CONFIG_FILE,
    SOURCE_FILE,
    CompetitionService,
)
from .tabular import Schema, load_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BY_STATUS = {422: 3, 401: 4, 403: 5, 404: 6, 409: 7, 413: 8, 429: 9}
EXIT_CONNECT = 10


def default_profile_path() -> Path:
    env = os.environ.get("BOUNTYBOARD_PROFILE")
    if env:
        return Path(env)
    return Path.home() / ".config" / "bountyboard" / "profile.json"


def load_profile(path: Path | None) -> dict:
    p = path or default_profile_path()
    if not p.exists():
        return {}
    return json.loads(p.read_text())


def fail(message: str, code: int = EXIT_ERROR) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# organizer commands
# ---------------------------------------------------------------------------

def load_competition_setup(config_path: Path):
    """Read a competition config file plus the schema/data/base it points to."""
    doc = json.loads(config_path.read_text())
    here = config_path.parent
    schema = Schema.from_json((here / doc["schema_path"]).read_text())
    config = CompetitionConfig(
        alpha=float(doc["alpha"]),
        schema=schema,
        seed=int(doc["seed"]),
        repair_epsilon=float(doc.get("repair_epsilon", 0.0)),
        daily_submission_limit=int(doc.get("daily_submission_limit", 50)),
        reward_mode=doc.get("reward_mode", "flat"),
        reward_rate=float(doc.get("reward_rate", 0.0)),
        local_base=doc.get("local_base", "constant"),
        split_weights=tuple(doc.get("split_weights", (0.70, 0.15, 0.15))),
        started_at=datetime.fromisoformat(doc["started_at"]) if "started_at" in doc
        else datetime.now(timezone.utc),
        queue_depth_limit=int(doc.get("queue_depth_limit", 1024)),
    )
    source = load_csv(schema, (here / doc["data_path"]).read_bytes())
    base_spec = doc.get("base", "constant")
    if base_spec == "constant":
        base = None  # CompetitionState.build trains the train-mean constant
    elif isinstance(base_spec, dict) and "hypothesis_path" in base_spec:
        base = hypothesis_from_json(
            json.loads((here / base_spec["hypothesis_path"]).read_text()))
    elif isinstance(base_spec, dict) and "tree" in base_spec:
        tree = base_spec["tree"]
        parts_probe = (int(tree.get("max_depth", 3)), int(tree.get("min_leaf", 20)))
        base = ("tree", parts_probe)
    else:
        raise BountyError(f"unsupported base spec: {base_spec!r}")
    return config, source, base


def cmd_init(args) -> int:
    config_path = Path(args.config)
    out = Path(args.out)
    if out.exists():
        return fail(f"state dir already exists: {out}")
    try:
        config, source, base = load_competition_setup(config_path)
    except (OSError, KeyError, ValueError, BountyError) as e:
        return fail(f"bad competition setup: {e}")
    if isinstance(base, tuple):  # trained tree base
        from .tabular import split as split_fn

        parts = split_fn(source, config.split_weights, config.seed)
        base = fit_tree(parts.train, max_depth=base[1][0], min_leaf=base[1][1])
    service = CompetitionService.create(config, source, base, state_dir=out)
    service.close()
    info = {
        "state_dir": str(out),
        "rows": source.n_rows,
        "organizer_token_file": str(out / "organizer_token"),
        "train_csv": str(out / "train.csv"),
    }
    print(json.dumps(info, indent=None if args.json else 2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    service = CompetitionService.open(args.state_dir)
    app = create_app(service, static_dir=args.dashboard)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_report(args) -> int:
    service = CompetitionService.open(args.state_dir)
    try:
        if args.test_data:
            test = load_csv(service.state.config.schema,
                            Path(args.test_data).read_bytes())
        else:
            test = service.state.splits.test
        report = service.state.final_report(test)
    finally:
        service.close()
    if args.json:
        print(json.dumps(report.to_json_obj(), sort_keys=True))
    else:
        print(report.to_text())
    return EXIT_OK


def cmd_replay(args) -> int:
    transcript = json.loads(Path(args.transcript).read_text())
    state_dir = Path(args.state_dir)
    config = CompetitionConfig.from_json_obj(
        json.loads((state_dir / CONFIG_FILE).read_text()))
    source = load_csv(config.schema, (state_dir / SOURCE_FILE).read_bytes())
    try:
        state = replay_transcript(transcript, source, verify=True)
    except BountyError as e:
        return fail(f"replay failed: {e}")
    print(json.dumps({"verified": True, "state_hash": state.state_hash(),
                      "submissions": len(state.log)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# competitor commands
# ---------------------------------------------------------------------------

def make_client(args, profile) -> tuple[httpx.Client, str]:
    server = getattr(args, "server", None) or profile.get("server")
    if not server:
        raise BountyError("no server configured; run 'profile set' or pass --server")
    factory = getattr(args, "_client_factory", None)
    client = factory(server) if factory else httpx.Client(base_url=server, timeout=30)
    token = getattr(args, "token", None) or profile.get("token", "")
    return client, token


def http_exit(response: httpx.Response) -> int:
    detail = None
    try:
        detail = response.json()
    except Exception:
        pass
    print(json.dumps({"status": response.status_code, "detail": detail}),
          file=sys.stderr)
    return EXIT_BY_STATUS.get(response.status_code, EXIT_ERROR)


def cmd_profile_set(args) -> int:
    path = Path(args.profile) if args.profile else default_profile_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    profile = {"server": args.server, "token": args.token, "team": args.team}
    path.write_text(json.dumps(profile, indent=2, sort_keys=True))
    os.chmod(path, 0o600)
    print(json.dumps({"profile": str(path), "server": args.server,
                      "team": args.team}))  # token deliberately not echoed
    return EXIT_OK


def cmd_submit(args) -> int:
    profile = load_profile(Path(args.profile) if args.profile else None)
    try:
        client, token = make_client(args, profile)
    except BountyError as e:
        return fail(str(e))
    body = Path(args.bundle).read_bytes()
    try:
        r = client.post("/submissions", content=body,
                        headers={"Authorization": f"Bearer {token}"})
    except httpx.TransportError as e:
        return fail(f"connection failed: {e}", EXIT_CONNECT)
    if r.status_code != 202:
        return http_exit(r)
    receipt = r.json()
    if args.json:
        print(json.dumps(receipt, sort_keys=True))
    else:
        print(f"submission {receipt['id']} {receipt['status']}")
    return EXIT_OK


def _format_verdict(name: str, verdict: dict | None) -> list[str]:
    if verdict is None:
        return [f"{name}: pending"]
    lines = [f"{name}: {verdict['decision']}"
             + (f" ({verdict['reason']})" if verdict.get("reason") else "")]
    m = verdict.get("measured") or {}

    def num(x):
        return "-" if x is None else f"{x:.6f}"

    lines.append(f"  w={num(m.get('weight'))}  L(f,g)={num(m.get('loss_current'))}"
                 f"  L(h,g)={num(m.get('loss_candidate'))}"
                 f"  w*delta={num(m.get('weighted_improvement'))}")
    lines.append(f"  overall: before={num(m.get('overall_before'))}"
                 f" after={num(m.get('overall_after'))}")
    if verdict.get("decision") == "accepted":
        lines.append(f"  version={verdict.get('version')}"
                     f" repairs={len(verdict.get('repairs_triggered', []))}"
                     f" points={verdict.get('points_awarded'):.6f}")
    return lines


def cmd_status(args) -> int:
    profile = load_profile(Path(args.profile) if args.profile else None)
    try:
        client, token = make_client(args, profile)
    except BountyError as e:
        return fail(str(e))
    try:
        r = client.get(f"/submissions/{args.id}",
                       headers={"Authorization": f"Bearer {token}"})
    except httpx.TransportError as e:
        return fail(f"connection failed: {e}", EXIT_CONNECT)
    if r.status_code != 200:
        return http_exit(r)
    receipt = r.json()
    if args.json:
        print(json.dumps(receipt, sort_keys=True))
        return EXIT_OK
    print(f"submission {receipt['id']} [{receipt['team']}] {receipt['status']}")
    if receipt["status"] == "evaluated":
        for line in _format_verdict("global", receipt["verdict_global"]):
            print(line)
        for line in _format_verdict("local", receipt["verdict_local"]):
            print(line)
    elif receipt.get("reason"):
        print(f"reason: {receipt['reason']}")
    return EXIT_OK


def cmd_leaderboard(args) -> int:
    profile = load_profile(Path(args.profile) if args.profile else None)
    try:
        client, _ = make_client(args, profile)
    except BountyError as e:
        return fail(str(e))
    try:
        r = client.get("/leaderboard")
    except httpx.TransportError as e:
        return fail(f"connection failed: {e}", EXIT_CONNECT)
    if r.status_code != 200:
        return http_exit(r)
    entries = r.json()["entries"]
    if args.json:
        print(json.dumps(entries, sort_keys=True))
        return EXIT_OK
    print(f"{'rank':>4}  {'model':<24}{'val loss':>16}{'updates':>9}{'points':>12}")
    for rank, e in enumerate(entries, start=1):
        print(f"{rank:>4}  {e['display_name']:<24}{e['validation_loss']:>16.2f}"
              f"{e['accepted_updates']:>9}{e['points']:>12.2f}")
    return EXIT_OK


def cmd_fetch_train_predictions(args) -> int:
    profile = load_profile(Path(args.profile) if args.profile else None)
    try:
        client, _ = make_client(args, profile)
    except BountyError as e:
        return fail(str(e))
    try:
        r = client.get(f"/model/global/{args.version}/train-predictions")
    except httpx.TransportError as e:
        return fail(f"connection failed: {e}", EXIT_CONNECT)
    if r.status_code != 200:
        return http_exit(r)
    if args.output:
        Path(args.output).write_text(r.text)
        print(json.dumps({"written": args.output,
                          "rows": r.text.count("\n") - 1}))
    else:
        sys.stdout.write(r.text)
    return EXIT_OK


def cmd_add_team(args) -> int:
    profile = load_profile(Path(args.profile) if args.profile else None)
    try:
        client, _ = make_client(args, profile)
    except BountyError as e:
        return fail(str(e))
    token = args.organizer_token
    if args.organizer_token_file:
        token = Path(args.organizer_token_file).read_text().strip()
    if not token:
        return fail("need --organizer-token or --organizer-token-file")
    try:
        r = client.post("/admin/teams", json={"name": args.name},
                        headers={"Authorization": f"Bearer {token}"})
    except httpx.TransportError as e:
        return fail(f"connection failed: {e}", EXIT_CONNECT)
    if r.status_code != 201:
        return http_exit(r)
    print(json.dumps(r.json(), sort_keys=True))  # the one-time credential
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bountyboard",
        description="Diversified-ensembling competition platform.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, server=True):
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--profile", help="profile file path")
        if server:
            p.add_argument("--server", help="server URL (overrides profile)")

    p = sub.add_parser("init", help="create a competition state directory")
    p.add_argument("--config", required=True, help="competition config JSON")
    p.add_argument("--out", required=True, help="state directory to create")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("serve", help="run the competition server")
    p.add_argument("state_dir")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8330)
    p.add_argument("--dashboard", help="directory of built dashboard assets to serve at /")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("add-team", help="register a team (organizer)")
    p.add_argument("name")
    p.add_argument("--organizer-token")
    p.add_argument("--organizer-token-file")
    common(p)
    p.set_defaults(fn=cmd_add_team)

    p = sub.add_parser("report", help="final train/validation/test loss table")
    p.add_argument("state_dir")
    p.add_argument("--test-data", help="CSV to use instead of the held test split")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("replay", help="verify a transcript against a state dir")
    p.add_argument("transcript")
    p.add_argument("state_dir")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("profile", help="manage the competitor profile")
    psub = p.add_subparsers(dest="profile_command", required=True)
    ps = psub.add_parser("set")
    ps.add_argument("--server", required=True)
    ps.add_argument("--token", required=True)
    ps.add_argument("--team", required=True)
    ps.add_argument("--profile", help="profile file path")
    ps.set_defaults(fn=cmd_profile_set)

    p = sub.add_parser("submit", help="submit a bundle file")
    p.add_argument("bundle")
    p.add_argument("--token", help="bearer token (overrides profile)")
    common(p)
    p.set_defaults(fn=cmd_submit)

    p = sub.add_parser("status", help="show a submission receipt")
    p.add_argument("id", type=int)
    p.add_argument("--token")
    common(p)
    p.set_defaults(fn=cmd_status)

    p = sub.add_parser("leaderboard", help="show the live leaderboard")
    common(p)
    p.set_defaults(fn=cmd_leaderboard)

    p = sub.add_parser("fetch-train-predictions",
                       help="download published training predictions")
    p.add_argument("version", type=int)
    p.add_argument("-o", "--output")
    common(p)
    p.set_defaults(fn=cmd_fetch_train_predictions)

    return parser


def main(argv=None, client_factory=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if client_factory is not None:
        args._client_factory = client_factory
    try:
        return args.fn(args)
    except BountyError as e:
        return fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
