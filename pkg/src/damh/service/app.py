"""FastAPI application exposing the commands and push-based filter sessions.

Run with ``uvicorn damh.service.app:app`` or ``damh serve``.
"""

from __future__ import annotations

import math
import threading
import uuid

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .. import __version__
from ..config import from_mapping
from ..errors import DamhError
from ..io import parse_surrogate
from ..window import SlidingWindowFilter
from . import handlers
from .schemas import (
    ArtifactResponse,
    EventOut,
    EventsResponse,
    Observation,
    RunRequest,
    StreamCreate,
    StreamCreated,
)

app = FastAPI(title="damh", version=__version__)

_streams = {}
_streams_lock = threading.Lock()


def error_body(exc):
    return {
        "error": str(exc),
        "kind": type(exc).__name__,
        "exit_code": exc.exit_code,
        "step": getattr(exc, "step", None),
    }


@app.exception_handler(DamhError)
def _damh_error(request: Request, exc: DamhError):
    status = 422 if exc.exit_code in (2, 3) else 500
    return JSONResponse(status_code=status, content=error_body(exc))


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _artifacts(a):
    return ArtifactResponse(files=a.files, report=_json_safe(a.report), exit_code=a.exit_code)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/simulate", response_model=ArtifactResponse)
def simulate(req: RunRequest):
    return _artifacts(handlers.simulate(from_mapping(req.config)))


@app.post("/learn", response_model=ArtifactResponse)
def learn(req: RunRequest):
    return _artifacts(handlers.learn(from_mapping(req.config), req.series_csv))


@app.post("/sweep", response_model=ArtifactResponse)
def sweep(req: RunRequest):
    return _artifacts(handlers.sweep(from_mapping(req.config), req.series_csv, req.surrogate))


@app.post("/oracle", response_model=ArtifactResponse)
def oracle(req: RunRequest):
    return _artifacts(handlers.oracle(from_mapping(req.config)))


@app.post("/diagnose", response_model=ArtifactResponse)
def diagnose(req: RunRequest):
    return _artifacts(handlers.diagnose(from_mapping(req.config), req.chain_csv))


@app.post("/filter")
def filter_(req: RunRequest):
    """Stream the filter CSV; rows are sent as soon as they are produced.

    Configuration and input errors are reported before streaming starts.
    A failure mid-stream ends the body with a ``# error:`` comment line.
    """
    cfg = from_mapping(req.config)
    lines = handlers.filter_lines(cfg, req.series_csv, req.surrogate)
    first = next(lines)  # validates inputs before the response starts

    def body():
        yield first
        try:
            yield from lines
        except DamhError as exc:
            yield f"# error: {type(exc).__name__} exit_code={exc.exit_code} {exc}\n"

    return StreamingResponse(body(), media_type="text/csv")


# ---------------------------------------------------------------------------
# Push-based sessions


def _event_out(ev):
    out = {"kind": ev.kind, "step": ev.step, "timestamp": getattr(ev, "timestamp", None)}
    if ev.kind == "estimate":
        out.update(mean=ev.estimate.mean.tolist(), var=ev.estimate.var.tolist(),
                   alpha1=_finite(ev.alpha1), alpha2=_finite(ev.alpha2))
        if ev.forecast is not None:
            out.update(forecast_mean=ev.forecast.mean.tolist(),
                       forecast_var=ev.forecast.var.tolist())
    elif ev.kind == "halted":
        out["gap"] = ev.gap
    elif ev.kind == "refreshed":
        out["alpha2"] = _finite(ev.alpha2)
    elif ev.kind == "phase1":
        out["mean"] = ev.m.tolist()
        out["var"] = ev.C.tolist()
    return EventOut(**out)


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _get_stream(stream_id):
    with _streams_lock:
        return _streams.get(stream_id)


@app.post("/streams", response_model=StreamCreated)
def create_stream(req: StreamCreate):
    cfg = from_mapping(req.config)
    model = cfg.build_model()
    sur = theta = None
    if req.surrogate:
        sur, fields = parse_surrogate(req.surrogate)
        if "theta_last" in fields:
            theta = [float(x) for x in fields["theta_last"].split(",")]
    filt = SlidingWindowFilter(model, cfg.window_config(), cfg.priors(), sur, theta,
                               tuple(req.columns))
    sid = uuid.uuid4().hex
    with _streams_lock:
        _streams[sid] = (filt, threading.Lock())
    return StreamCreated(stream_id=sid)


def _missing(stream_id):
    return JSONResponse(status_code=404, content={
        "error": f"unknown stream {stream_id}", "kind": "NotFound", "exit_code": 2, "step": None})


@app.post("/streams/{stream_id}/observations", response_model=EventsResponse)
def push_observation(stream_id: str, obs: Observation):
    entry = _get_stream(stream_id)
    if entry is None:
        return _missing(stream_id)
    filt, lock = entry
    with lock:
        if filt.halted:
            return JSONResponse(status_code=409, content={
                "error": "stream is halted; POST /streams/{id}/resume first",
                "kind": "Halted", "exit_code": 0, "step": filt.step})
        events = filt.push(obs.t, obs.value)
        return EventsResponse(events=[_event_out(e) for e in events], halted=filt.halted)


@app.post("/streams/{stream_id}/resume", response_model=EventsResponse)
def resume_stream(stream_id: str):
    entry = _get_stream(stream_id)
    if entry is None:
        return _missing(stream_id)
    filt, lock = entry
    with lock:
        filt.resume()
        return EventsResponse(events=[], halted=False)


@app.delete("/streams/{stream_id}")
def delete_stream(stream_id: str):
    with _streams_lock:
        found = _streams.pop(stream_id, None) is not None
    if not found:
        return _missing(stream_id)
    return {"deleted": stream_id}
