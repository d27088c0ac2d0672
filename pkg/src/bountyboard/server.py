"""HTTP front end for a CompetitionService.

JSON over HTTP/1.1 with bearer-token auth. Submissions are precheck-validated
synchronously and evaluated in admission order by the service worker; reads
are served from consistent snapshots. The validation and test splits are
never exposed: no route serves their rows, labels, or predictions.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

import anyio
from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse

from .errors import (
    AuthError,
    BundleParseError,
    BundleTooLarge,
    BundleValidationError,
    CompetitionFrozen,
    DuplicateTeam,
    QueueFull,
    RateLimited,
    UnknownTeam,
    UnknownVersion,
)
from .service import CompetitionService

MAX_EVENT_POLL_SECONDS = 30.0


def _bearer(authorization: str | None) -> str:
    if not authorization or not authorization.startswith("Bearer "):
        raise AuthError("missing bearer token")
    return authorization[len("Bearer "):].strip()


def _error(status: int, code: str, detail=None, headers=None) -> JSONResponse:
    body = {"error": code}
    if detail is not None:
        body["detail"] = detail
    return JSONResponse(body, status_code=status, headers=headers or {})


def create_app(service: CompetitionService, start_worker: bool = True,
               static_dir: str | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if start_worker:
            service.start()
        yield
        if start_worker:
            service.stop()

    app = FastAPI(
        title="bountyboard",
        version="1",
        description="Diversified-ensembling competition host: submit (group, "
                    "hypothesis) bundles, follow the leaderboard and event "
                    "feed, fetch published training predictions.",
        lifespan=lifespan,
    )
    app.state.service = service

    @app.exception_handler(AuthError)
    async def _auth_error(request: Request, exc: AuthError):
        return _error(401, "unauthorized", str(exc))

    @app.exception_handler(RateLimited)
    async def _rate_limited(request: Request, exc: RateLimited):
        return _error(429, "rate-limited", {"reset_at": exc.reset_at.isoformat()},
                      headers={"Retry-After": "3600"})

    @app.exception_handler(CompetitionFrozen)
    async def _frozen(request: Request, exc: CompetitionFrozen):
        return _error(409, "competition-frozen")

    @app.exception_handler(BundleTooLarge)
    async def _too_large(request: Request, exc: BundleTooLarge):
        return _error(413, "bundle-too-large", {"size": exc.size, "limit": exc.limit})

    @app.exception_handler(BundleParseError)
    async def _parse_error(request: Request, exc: BundleParseError):
        return _error(422, "invalid-bundle",
                      [{"code": "parse-error", "message": str(exc),
                        "where": exc.location}])

    @app.exception_handler(BundleValidationError)
    async def _validation_error(request: Request, exc: BundleValidationError):
        return _error(422, "invalid-bundle",
                      [issue.to_json_obj() for issue in exc.issues])

    @app.exception_handler(QueueFull)
    async def _queue_full(request: Request, exc: QueueFull):
        return _error(503, "queue-full", str(exc))

    # -- submission protocol ------------------------------------------------

    @app.post("/submissions", status_code=202)
    async def post_submission(request: Request,
                              authorization: str | None = Header(default=None)):
        token = _bearer(authorization)
        body = await request.body()
        receipt = await anyio.to_thread.run_sync(service.submit, token, body)
        return receipt.to_json_obj()

    @app.get("/submissions/{sid}")
    async def get_submission(sid: int,
                             authorization: str | None = Header(default=None)):
        token = _bearer(authorization)
        is_organizer = False
        requester = None
        try:
            service.check_organizer(token)
            is_organizer = True
        except AuthError:
            requester = service.authenticate(token)
        try:
            receipt = service.get_receipt(sid, requester, is_organizer)
        except KeyError:
            return _error(404, "unknown-submission")
        except PermissionError:
            return _error(403, "forbidden")
        return receipt.to_json_obj()

    # -- public reads ---------------------------------------------------------

    @app.get("/leaderboard")
    async def get_leaderboard():
        return {"entries": service.leaderboard()}

    @app.get("/competition")
    async def get_competition():
        return service.competition_info()

    @app.get("/model/global/structure")
    async def get_structure():
        return service.global_structure()

    @app.get("/model/global/{version}/train-predictions")
    async def get_train_predictions(version: int):
        try:
            csv_text = await anyio.to_thread.run_sync(
                service.train_predictions_csv, version)
        except UnknownVersion:
            return _error(404, "unknown-version")
        return Response(csv_text, media_type="text/csv")

    @app.get("/events")
    async def get_events(since: int = 0, timeout: float = 0.0):
        timeout = max(0.0, min(timeout, MAX_EVENT_POLL_SECONDS))
        events = await anyio.to_thread.run_sync(service.events_since, since, timeout)
        return {"events": events}

    # -- organizer admin --------------------------------------------------------

    @app.post("/admin/teams", status_code=201)
    async def add_team(payload: dict,
                       authorization: str | None = Header(default=None)):
        service.check_organizer(_bearer(authorization))
        name = payload.get("name")
        try:
            team, token = service.add_team(name)
        except DuplicateTeam:
            return _error(409, "duplicate-team")
        except ValueError as e:
            return _error(422, "bad-team-name", str(e))
        return {"team": team, "token": token}

    @app.delete("/admin/teams/{team}")
    async def remove_team(team: str,
                          authorization: str | None = Header(default=None)):
        service.check_organizer(_bearer(authorization))
        try:
            service.revoke_team(team)
        except UnknownTeam:
            return _error(404, "unknown-team")
        return {"team": team, "revoked": True}

    @app.get("/admin/state")
    async def admin_state(authorization: str | None = Header(default=None)):
        service.check_organizer(_bearer(authorization))
        return service.admin_state()

    @app.post("/admin/freeze")
    async def freeze(authorization: str | None = Header(default=None)):
        service.check_organizer(_bearer(authorization))
        service.freeze()
        return {"frozen": True}

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        # dashboard assets; mounted last so API routes keep precedence
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="dashboard")

    return app
