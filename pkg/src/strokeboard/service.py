"""HTTP API over storyboard sessions with NDJSON progress streaming.

Endpoints live under /v1; optimization runs execute on worker threads so the
server stays responsive to reads. With a state directory configured, every
session persists as {state_dir}/{session_id}.json across restarts.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import session as sess
from .backends import BackendSpecError, build_guidance
from .optimize import OptimizeAbort, OptimizeConfig, TraceEvent, optimize_sketch
from .protocol import BackendError, ProtocolError, RetriableBackendError

__all__ = ["ApiError", "ApiException", "create_app"]

_ERROR_STATUS = {
    "bad_request": 400,
    "not_found": 404,
    "busy": 409,
    "protocol_error": 502,
    "backend_unavailable": 503,
    "internal": 500,
}


@dataclass(frozen=True)
class ApiError:
    code: str
    message: str
    http_status: int

    def __post_init__(self):
        if self.code not in _ERROR_STATUS:
            raise ValueError(f"unknown error code {self.code!r}")


class ApiException(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.error = ApiError(code=code, message=message, http_status=_ERROR_STATUS[code])


def _error_response(exc: ApiException) -> JSONResponse:
    e = exc.error
    return JSONResponse(
        status_code=e.http_status,
        content={"error": {"code": e.code, "message": e.message}},
    )


class _RunHandle:
    """Event buffer for one frame run, sharable across stream consumers."""

    def __init__(self):
        self.events: list[TraceEvent] = []
        self.terminator: dict | None = None
        self.cancel = threading.Event()
        self.cond = threading.Condition()
        self.thread: threading.Thread | None = None

    def push(self, event: TraceEvent) -> None:
        with self.cond:
            self.events.append(event)
            self.cond.notify_all()

    def finish(self, terminator: dict) -> None:
        with self.cond:
            self.terminator = terminator
            self.cond.notify_all()

    def stream(self, after: int):
        """Yield NDJSON lines for events with iter > after, then the terminator."""
        idx = 0
        while True:
            with self.cond:
                while idx >= len(self.events) and self.terminator is None:
                    self.cond.wait(timeout=1.0)
                events = self.events[idx:]
                idx = len(self.events)
                term = self.terminator if idx >= len(self.events) else None
            for ev in events:
                if ev.iter > after:
                    yield ev.to_json() + "\n"
            if term is not None:
                yield json.dumps(term, separators=(",", ":")) + "\n"
                return


class _Runtime:
    def __init__(self, session: sess.Session):
        self.session = session
        self.lock = threading.RLock()
        self.runs: dict[int, _RunHandle] = {}


class _Store:
    def __init__(self, state_dir: str | None):
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self._runtimes: dict[str, _Runtime] = {}
        self._lock = threading.Lock()

    def create(self, seed_base: int) -> _Runtime:
        s = sess.new_session(seed_base=seed_base)
        rt = _Runtime(s)
        with self._lock:
            self._runtimes[s.id] = rt
        self.persist(rt)
        return rt

    def get(self, session_id: str) -> _Runtime:
        with self._lock:
            rt = self._runtimes.get(session_id)
        if rt is not None:
            return rt
        if self.state_dir:
            path = self.state_dir / f"{session_id}.json"
            if path.exists():
                loaded = sess.load_session(path.read_text(encoding="utf-8"))
                rt = _Runtime(loaded)
                with self._lock:
                    rt = self._runtimes.setdefault(session_id, rt)
                return rt
        raise ApiException("not_found", f"session {session_id!r} does not exist")

    def persist(self, rt: _Runtime) -> None:
        if self.state_dir:
            path = self.state_dir / f"{rt.session.id}.json"
            path.write_text(sess.save_session(rt.session), encoding="utf-8")


_CONFIG_OVERRIDE_KEYS = {
    "iterations",
    "lr",
    "seed",
    "snapshot_every",
    "prune_every",
    "prune_warmup",
    "prune_min_length",
    "prune_min_bbox_area",
    "guidance_spec",
    "omega",
    "t_range",
    "weight_fn",
}


def _apply_overrides(cfg: OptimizeConfig, overrides: dict) -> OptimizeConfig:
    unknown = set(overrides) - _CONFIG_OVERRIDE_KEYS
    if unknown:
        raise ApiException("bad_request", f"unknown config overrides: {sorted(unknown)}")
    guidance_fields = {}
    for key in ("omega", "weight_fn"):
        if key in overrides:
            guidance_fields[key] = overrides[key]
    if "t_range" in overrides:
        guidance_fields["t_range"] = tuple(overrides["t_range"])
    cfg_fields = {
        k: v
        for k, v in overrides.items()
        if k not in ("omega", "t_range", "weight_fn")
    }
    try:
        if guidance_fields:
            cfg = replace(cfg, guidance=replace(cfg.guidance, **guidance_fields))
        if cfg_fields:
            cfg = replace(cfg, **cfg_fields)
    except (TypeError, ValueError) as e:
        raise ApiException("bad_request", f"invalid config override: {e}") from e
    return cfg


def _frame_doc(frame: sess.StoryboardFrame) -> dict:
    return sess._frame_to_doc(frame)


def create_app(state_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="strokeboard", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = _Store(state_dir)
    app.state.store = store

    @app.exception_handler(ApiException)
    async def _api_exc(request: Request, exc: ApiException):
        return _error_response(exc)

    def _session_or_404(session_id: str) -> _Runtime:
        return store.get(session_id)

    def _frame_or_404(rt: _Runtime, k: int) -> sess.StoryboardFrame:
        if not 0 <= k < len(rt.session.frames):
            raise ApiException("not_found", f"frame {k} does not exist")
        return rt.session.frames[k]

    @app.get("/v1/healthz")
    async def healthz():
        return {"ok": True}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(body: dict | None = None):
        seed_base = int((body or {}).get("seed_base", 0))
        rt = store.create(seed_base)
        return {"id": rt.session.id}

    @app.get("/v1/sessions/{session_id}")
    async def get_session(session_id: str):
        rt = _session_or_404(session_id)
        with rt.lock:
            return json.loads(sess.save_session(rt.session))

    @app.post("/v1/sessions/{session_id}/frames", status_code=201)
    async def post_frame(session_id: str, body: dict):
        rt = _session_or_404(session_id)
        if "template" not in body:
            raise ApiException("bad_request", "frame body needs a template")
        overrides = body.get("config", {})
        if not isinstance(overrides, dict):
            raise ApiException("bad_request", "config must be an object")
        with rt.lock:
            cfg = _apply_overrides(OptimizeConfig(), overrides)
            try:
                frame = sess.add_frame(
                    rt.session,
                    template=body["template"],
                    inherit=bool(body.get("inherit", False)),
                    config=cfg,
                    n_strokes=int(body.get("n_strokes", 16)),
                    segments=int(body.get("segments", 5)),
                    stroke_width=float(body.get("stroke_width", 3.0)),
                    canvas_w=int(body.get("canvas_w", 600)),
                    canvas_h=int(body.get("canvas_h", 600)),
                )
            except sess.BusyError as e:
                raise ApiException("busy", str(e)) from e
            except (sess.PromptError, sess.FrameStateError, ValueError) as e:
                raise ApiException("bad_request", str(e)) from e
            store.persist(rt)
            return _frame_doc(frame)

    @app.post("/v1/sessions/{session_id}/frames/{k}/edits")
    async def post_edits(session_id: str, k: int, body: dict):
        rt = _session_or_404(session_id)
        ops = body.get("ops")
        if not isinstance(ops, list):
            raise ApiException("bad_request", "edit body needs an ops list")
        with rt.lock:
            frame = _frame_or_404(rt, k)
            try:
                parsed = [
                    sess.EditOp(kind=o.get("kind"), payload=o.get("payload", {}))
                    for o in ops
                ]
                for op in parsed:
                    sess.apply_edit(rt.session, frame, op)
            except sess.FrameStateError as e:
                raise ApiException("busy", str(e)) from e
            except (sess.SessionError, ValueError, KeyError) as e:
                raise ApiException("bad_request", f"invalid edit: {e}") from e
            store.persist(rt)
            return _frame_doc(frame)

    @app.post("/v1/sessions/{session_id}/frames/{k}/undo")
    async def post_undo(session_id: str, k: int):
        rt = _session_or_404(session_id)
        with rt.lock:
            frame = _frame_or_404(rt, k)
            try:
                sess.undo_edit(rt.session, frame)
            except sess.FrameStateError as e:
                raise ApiException("busy", str(e)) from e
            except sess.SessionError as e:
                raise ApiException("bad_request", str(e)) from e
            store.persist(rt)
            return _frame_doc(frame)

    def _execute_run(rt: _Runtime, k: int, handle: _RunHandle):
        session = rt.session
        frame = session.frames[k]
        try:
            cfg = frame.config
            if cfg.guidance_spec:
                live_guidance = build_guidance(
                    cfg.guidance_spec,
                    cfg.guidance,
                    prompt=frame.resolved_prompt,
                    out_size=cfg.augment.out_size,
                )
            else:
                live_guidance = replace(
                    cfg.guidance, prompt=frame.resolved_prompt, backend="zero"
                )
            run_cfg = replace(cfg, guidance=live_guidance)

            def engine(initial, trainable, _cfg, on_event=None, cancel=None):
                return optimize_sketch(
                    initial, trainable, run_cfg, on_event=on_event, cancel=cancel
                )

            frame = sess.execute_frame(
                session, k, engine=engine, on_event=handle.push, cancel=handle.cancel
            )
            with rt.lock:
                store.persist(rt)
            handle.finish(
                {"event": "cancelled" if frame.status == "cancelled" else "done"}
            )
        except OptimizeAbort as e:
            with rt.lock:
                store.persist(rt)
            handle.finish({"event": "error", "message": str(e)})
        except Exception as e:  # defensive: never leave a frame stuck running
            with rt.lock:
                if frame.status == "running":
                    frame.status = "draft"
                    frame.error = str(e)
                store.persist(rt)
            handle.finish({"event": "error", "message": str(e)})

    @app.post("/v1/sessions/{session_id}/frames/{k}/run", status_code=202)
    async def post_run(session_id: str, k: int, body: dict | None = None):
        rt = _session_or_404(session_id)
        overrides = body or {}
        with rt.lock:
            frame = _frame_or_404(rt, k)
            try:
                frame.config = _apply_overrides(frame.config, overrides)
                sess.claim_frame(rt.session, k)
            except sess.BusyError as e:
                raise ApiException("busy", str(e)) from e
            except sess.FrameStateError as e:
                raise ApiException("busy", str(e)) from e
            except sess.SessionError as e:
                raise ApiException("bad_request", str(e)) from e
            handle = _RunHandle()
            rt.runs[k] = handle
            store.persist(rt)
            thread = threading.Thread(
                target=_execute_run, args=(rt, k, handle), daemon=True
            )
            handle.thread = thread
            thread.start()
        return {"status": "running", "frame": k}

    @app.post("/v1/sessions/{session_id}/frames/{k}/cancel")
    async def post_cancel(session_id: str, k: int):
        rt = _session_or_404(session_id)
        with rt.lock:
            frame = _frame_or_404(rt, k)
            handle = rt.runs.get(k)
        if handle is None:
            raise ApiException("bad_request", f"frame {k} has no active or finished run")
        handle.cancel.set()
        return {"status": frame.status}

    @app.get("/v1/sessions/{session_id}/frames/{k}/events")
    async def get_events(session_id: str, k: int, after: int = 0):
        rt = _session_or_404(session_id)
        with rt.lock:
            _frame_or_404(rt, k)
            handle = rt.runs.get(k)
        if handle is None:
            raise ApiException("not_found", f"frame {k} has no run to stream")
        return StreamingResponse(handle.stream(after), media_type="application/x-ndjson")

    @app.get("/v1/sessions/{session_id}/storyboard.svg")
    async def get_storyboard(session_id: str):
        rt = _session_or_404(session_id)
        with rt.lock:
            try:
                svg = sess.export_storyboard(rt.session)
            except sess.SessionError as e:
                raise ApiException("bad_request", str(e)) from e
        return Response(content=svg, media_type="image/svg+xml")

    return app
