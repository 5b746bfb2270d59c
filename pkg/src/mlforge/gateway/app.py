"""FastAPI application exposing the control plane under /v1.

All responses are JSON with deterministic key order; errors use
``{"code": ..., "message": ...}`` bodies. Mutating endpoints honor a
client-supplied ``Idempotency-Key`` header by replaying the first response.
"""

from __future__ import annotations

import base64
import binascii
import json
from pathlib import Path

from fastapi import FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response, StreamingResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from starlette.staticfiles import StaticFiles

from mlforge import errors
from mlforge.control import FEED_END, ControlPlane
from mlforge.gateway import schemas
from mlforge.metrics.store import Closed, Overflow
from mlforge.sessions.model import Session

DEFAULT_USER = "anonymous"


def _decode_files(files: dict[str, str]) -> dict[str, bytes]:
    try:
        return {path: base64.b64decode(content, validate=True) for path, content in files.items()}
    except (binascii.Error, ValueError):
        raise errors.InvalidBody("files must be base64-encoded") from None


def _dataset_view(ds) -> dict:
    return {
        "name": ds.name,
        "version": ds.version,
        "ref": ds.ref,
        "files": len(ds.manifest),
        "size_bytes": ds.size_bytes,
        "created_at": ds.created_at,
        "board": (
            None
            if ds.board_config is None
            else {"metric": ds.board_config[0], "direction": ds.board_config[1]}
        ),
    }


def _session_view(session: Session, with_history: bool = True) -> dict:
    return session.to_view(with_history=with_history)


def _point_view(point) -> dict:
    return {
        "step": point.step,
        "name": point.name,
        "value": point.value,
        "at": point.at,
    }


def _sse_frame(event: dict) -> bytes:
    return b"data: " + json.dumps(event, separators=(",", ":"), ensure_ascii=False).encode() + b"\n\n"


def create_app(plane: ControlPlane, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="mlforge", docs_url=None, redoc_url=None, openapi_url=None)
    idempotency_cache: dict[tuple[str, str], tuple[int, bytes, str]] = {}

    # -- error shaping ------------------------------------------------------

    @app.exception_handler(errors.MlforgeError)
    async def mlforge_error(request: Request, exc: errors.MlforgeError):
        return JSONResponse(
            status_code=exc.http_status, content={"code": exc.code, "message": str(exc)}
        )

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"code": "invalid_body", "message": str(exc.errors()[:1])}
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, exc: StarletteHTTPException):
        code = "not_found" if exc.status_code == 404 else "http_error"
        return JSONResponse(
            status_code=exc.status_code, content={"code": code, "message": str(exc.detail)}
        )

    # -- cross-cutting middleware ----------------------------------------------

    @app.middleware("http")
    async def gate_and_replay(request: Request, call_next):
        if request.url.path.startswith("/v1") and not plane.master_available:
            return JSONResponse(
                status_code=503,
                content={"code": "master_unavailable", "message": "leader election in progress"},
            )
        key = request.headers.get("Idempotency-Key")
        cache_key = (request.url.path, key) if key else None
        if request.method == "POST" and cache_key in idempotency_cache:
            status, body, media_type = idempotency_cache[cache_key]
            return Response(content=body, status_code=status, media_type=media_type)
        response = await call_next(request)
        if request.method == "POST" and cache_key is not None and response.status_code < 500:
            chunks = [chunk async for chunk in response.body_iterator]
            body = b"".join(chunks)
            media_type = response.headers.get("content-type", "application/json")
            idempotency_cache[cache_key] = (response.status_code, body, media_type)
            return Response(
                content=body, status_code=response.status_code, media_type=media_type
            )
        return response

    # -- datasets ----------------------------------------------------------------

    @app.post("/v1/datasets", status_code=201)
    def push_dataset(body: schemas.DatasetPushRequest):
        board = None if body.board is None else (body.board.metric, body.board.direction)
        ds = plane.storage.push_dataset(body.name, _decode_files(body.files), board_config=board)
        return _dataset_view(ds)

    @app.get("/v1/datasets")
    def list_datasets(name: str | None = None):
        return {"datasets": [_dataset_view(ds) for ds in plane.storage.list_datasets(name)]}

    @app.get("/v1/datasets/{name}/{version}/board")
    def dataset_board(
        name: str,
        version: int,
        top: int | None = Query(default=None),
        per_user_best: bool = Query(default=False),
    ):
        ds = plane.storage.get_dataset(name, version)
        metric, direction = ds.board_config if ds.board_config else (None, None)
        if metric is None:
            raise errors.NoBoardConfig(f"dataset {ds.ref} has no board configured")
        entries = plane.leaderboard.board(name, version, top_k=top, per_user_best=per_user_best)
        return {
            "dataset": ds.ref,
            "metric": metric,
            "direction": direction,
            "entries": [{"rank": i + 1} | e.to_view() for i, e in enumerate(entries)],
        }

    # -- sessions -----------------------------------------------------------------

    @app.post("/v1/sessions", status_code=201)
    def create_session(
        body: schemas.SessionCreateRequest,
        x_mlforge_user: str = Header(default=DEFAULT_USER),
    ):
        resources = None
        if body.resources is not None:
            resources = (body.resources.gpus, body.resources.cpus, body.resources.mem_mb)
        session = plane.sessions.create_session(
            x_mlforge_user,
            body.dataset,
            code_files=_decode_files(body.code_files),
            entrypoint=body.entrypoint,
            hyperparams=dict(body.hyperparams),
            priority=body.priority,
            resources=resources,
        )
        return _session_view(session)

    @app.get("/v1/sessions")
    def list_sessions(
        user: str | None = None, dataset: str | None = None, state: str | None = None
    ):
        sessions = plane.sessions.list_sessions(user=user, dataset=dataset, state=state)
        return {"sessions": [_session_view(s, with_history=False) for s in sessions]}

    def _sid(user: str, dataset: str, number: int) -> str:
        return f"{user}/{dataset}/{number}"

    @app.get("/v1/sessions/{user}/{dataset}/{number}")
    def get_session(user: str, dataset: str, number: int):
        return _session_view(plane.sessions.get(_sid(user, dataset, number)))

    @app.post("/v1/sessions/{user}/{dataset}/{number}/tune")
    def tune_session(user: str, dataset: str, number: int, body: schemas.TuneRequest):
        session = plane.sessions.pause_and_tune(_sid(user, dataset, number), dict(body.hyperparams))
        return _session_view(session)

    @app.post("/v1/sessions/{user}/{dataset}/{number}/stop")
    def stop_session(user: str, dataset: str, number: int):
        return _session_view(plane.sessions.stop(_sid(user, dataset, number)))

    @app.post("/v1/sessions/{user}/{dataset}/{number}/fork", status_code=201)
    def fork_session(
        user: str,
        dataset: str,
        number: int,
        body: schemas.ForkRequest,
        x_mlforge_user: str = Header(default=None),
    ):
        session = plane.sessions.fork_session(
            _sid(user, dataset, number),
            checkpoint_selector=body.checkpoint,
            new_hyperparams=dict(body.hyperparams),
            user=body.user or x_mlforge_user,
        )
        return _session_view(session)

    @app.post("/v1/sessions/{user}/{dataset}/{number}/reproduce", status_code=201)
    def reproduce_session(user: str, dataset: str, number: int):
        return _session_view(plane.sessions.reproduce(_sid(user, dataset, number)))

    @app.post("/v1/sessions/{user}/{dataset}/{number}/infer")
    def infer_session(user: str, dataset: str, number: int, body: schemas.InferRequest):
        try:
            input_bytes = base64.b64decode(body.input_b64, validate=True)
        except (binascii.Error, ValueError):
            raise errors.InvalidBody("input_b64 must be base64") from None
        return plane.infer(_sid(user, dataset, number), body.checkpoint, input_bytes)

    @app.get("/v1/sessions/{user}/{dataset}/{number}/logs")
    def session_logs(
        user: str,
        dataset: str,
        number: int,
        name: str | None = None,
        from_step: int | None = None,
        to_step: int | None = None,
        tail: int | None = None,
    ):
        sid = _sid(user, dataset, number)
        plane.sessions.get(sid)
        points = plane.metrics.query(sid, name=name, from_step=from_step, to_step=to_step, tail=tail)
        return {"session_id": sid, "points": [_point_view(p) for p in points]}

    @app.get("/v1/sessions/{user}/{dataset}/{number}/plot.csv")
    def session_plot(
        user: str,
        dataset: str,
        number: int,
        metric: str = "loss",
        extra: list[str] = Query(default=[]),
    ):
        sid = _sid(user, dataset, number)
        plane.sessions.get(sid)
        for other in extra:
            plane.sessions.get(other)
        csv_bytes = plane.metrics.export_series([sid, *extra], metric)
        return Response(content=csv_bytes, media_type="text/csv; charset=utf-8")

    @app.get("/v1/sessions/{user}/{dataset}/{number}/events")
    def session_events(user: str, dataset: str, number: int):
        sid = _sid(user, dataset, number)
        replay, sub = plane.subscribe_events(sid)

        def stream():
            for event in replay:
                yield _sse_frame(event)
            if sub is None:
                return
            try:
                while True:
                    item = sub.get(timeout=plane.config.sse_heartbeat)
                    if item is None:
                        yield b": hb\n\n"
                        continue
                    if item is FEED_END or isinstance(item, Closed):
                        return
                    if isinstance(item, Overflow):
                        yield _sse_frame({"type": "overflow", "session_id": sid})
                        return
                    yield _sse_frame(item)
            finally:
                plane._feed(sid).detach(sub)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    # -- sweeps and cluster ---------------------------------------------------------

    @app.post("/v1/sweeps", status_code=201)
    def create_sweep(
        body: schemas.SweepRequest, x_mlforge_user: str = Header(default=DEFAULT_USER)
    ):
        random_spec = None
        if body.random is not None:
            random_spec = {
                "ranges": {k: tuple(v) for k, v in body.random.ranges.items()},
                "n": body.random.n,
                "seed": body.random.seed,
            }
        sweep_id, sessions = plane.sessions.run_sweep(
            x_mlforge_user,
            body.dataset,
            code_files=_decode_files(body.code_files),
            entrypoint=body.entrypoint,
            grid=body.grid,
            random_spec=random_spec,
            priority=body.priority,
            base_hyperparams=dict(body.base_hyperparams),
        )
        return {
            "sweep_id": sweep_id,
            "sessions": [_session_view(s, with_history=False) for s in sessions],
        }

    @app.get("/v1/cluster")
    def cluster():
        return plane.cluster_view()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
