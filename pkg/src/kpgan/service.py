"""HTTP inference service: sampling, rendering, and edits over named sessions.

One checkpoint per process; model parameters are immutable once loaded, so
concurrent requests are safe. Edits on a single session are serialized by a
per-session lock and are all-or-nothing: a failing op leaves the stored state
untouched. Keypoints are reported in continuous pixel coordinates via
px = ((coord + 1) / 2) * R, the inverse of the grid mapping used everywhere
else. Every request is logged as one JSON line.
"""

from __future__ import annotations

import base64
import json
import sys
import threading
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response

from .data import tensor_to_png_bytes
from .editing import (
    SceneState,
    apply_edit_ops,
    scene_from_json,
    scene_to_json,
    swap_background,
    swap_embeddings,
)
from .keypoint_generator import sample_latents
from .model import KeypointGanModel


class Session:
    def __init__(self, session_id: str, state: SceneState, ckpt_id: str, now: float):
        self.id = session_id
        self.state = state
        self.ckpt_id = ckpt_id
        self.created_at = now
        self.last_used = now
        self.lock = threading.Lock()


class SessionStore:
    def __init__(self, persist_dir=None, ttl_seconds: float | None = None, clock=time.time):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self.ttl_seconds = ttl_seconds
        self.clock = clock
        self.persist_dir = Path(persist_dir) if persist_dir else None
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            for path in self.persist_dir.glob("*.json"):
                doc = json.loads(path.read_text())
                session = Session(
                    doc["id"], scene_from_json(doc["scene_state"]), doc["ckpt_id"], self.clock()
                )
                session.created_at = doc.get("created_at", session.created_at)
                session.last_used = doc.get("last_used", session.last_used)
                self._sessions[session.id] = session

    def _expire(self):
        if self.ttl_seconds is None:
            return
        now = self.clock()
        for sid in list(self._sessions):
            if now - self._sessions[sid].last_used > self.ttl_seconds:
                self.delete(sid)

    def create(self, state: SceneState, ckpt_id: str) -> Session:
        session = Session(uuid.uuid4().hex, state, ckpt_id, self.clock())
        with self._lock:
            self._expire()
            self._sessions[session.id] = session
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._expire()
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        session.last_used = self.clock()
        return session

    def delete(self, session_id: str) -> bool:
        session = self._sessions.pop(session_id, None)
        if session and self.persist_dir:
            (self.persist_dir / f"{session_id}.json").unlink(missing_ok=True)
        return session is not None

    def persist(self, session: Session):
        if not self.persist_dir:
            return
        doc = {
            "id": session.id,
            "ckpt_id": session.ckpt_id,
            "created_at": session.created_at,
            "last_used": session.last_used,
            "scene_state": scene_to_json(session.state),
        }
        (self.persist_dir / f"{session.id}.json").write_text(json.dumps(doc))


def keypoints_px(state: SceneState, resolution: int) -> list[list[float]]:
    return [
        [(x + 1.0) / 2.0 * resolution, (y + 1.0) / 2.0 * resolution]
        for x, y in state.coords.tolist()
    ]


def create_app(
    model: KeypointGanModel | None,
    ckpt_id: str = "unloaded",
    persist_dir=None,
    ttl_seconds: float | None = None,
    access_log=sys.stdout,
    clock=time.time,
    static_dir=None,
) -> FastAPI:
    app = FastAPI(title="kpgan edit service")
    store = SessionStore(persist_dir, ttl_seconds, clock=clock)
    app.state.store = store
    render_lock = threading.Lock()

    if model is not None:
        model.eval()

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        start = time.time()
        response = await call_next(request)
        if access_log is not None:
            line = {
                "time": start,
                "method": request.method,
                "path": request.url.path,
                "status": response.status_code,
                "duration_ms": round((time.time() - start) * 1000, 3),
            }
            print(json.dumps(line), file=access_log, flush=True)
        return response

    def require_model() -> KeypointGanModel:
        if model is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return model

    def render_png(state: SceneState) -> bytes:
        m = require_model()
        import torch

        with render_lock, torch.no_grad():
            sample = m.render_scene(state)
        return tensor_to_png_bytes(sample.image[0])

    def session_payload(session: Session, png: bytes | None = None) -> dict:
        doc = {"session_id": session.id, "scene_state": scene_to_json(session.state)}
        if png is not None:
            doc["image_png_b64"] = base64.b64encode(png).decode("ascii")
            doc["keypoints_px"] = keypoints_px(
                session.state, require_model().config.final_resolution
            )
        return doc

    def get_session_or_404(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    @app.post("/v1/sample")
    def sample(body: dict | None = None):
        m = require_model()
        body = body or {}
        seed = body.get("seed")
        latents = sample_latents(1, m.config.noise_dim, seed=seed)
        state = m.scene_from_latents(latents)
        session = store.create(state, ckpt_id)
        return session_payload(session, render_png(state))

    @app.post("/v1/session/{session_id}/edit")
    def edit(session_id: str, body: dict):
        require_model()
        session = get_session_or_404(session_id)
        ops = body.get("ops")
        if not isinstance(ops, list):
            raise HTTPException(status_code=422, detail="body must carry an 'ops' list")
        with session.lock:
            try:
                new_state = apply_edit_ops(session.state, ops)
                png = render_png(new_state)
            except (ValueError, IndexError, KeyError, TypeError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            session.state = new_state
            store.persist(session)
        doc = session_payload(session)
        doc["image_png_b64"] = base64.b64encode(png).decode("ascii")
        doc["keypoints_px"] = keypoints_px(session.state, require_model().config.final_resolution)
        return doc

    @app.post("/v1/session/{session_id}/swap")
    def swap(session_id: str, body: dict):
        require_model()
        session = get_session_or_404(session_id)
        source_id = body.get("source_session")
        if not source_id:
            raise HTTPException(status_code=422, detail="source_session is required")
        source = get_session_or_404(source_id)
        indices = body.get("indices") or []
        background = bool(body.get("background", False))
        with session.lock:
            try:
                new_state = session.state
                if indices:
                    new_state = swap_embeddings(new_state, source.state, indices)
                if background:
                    new_state = swap_background(new_state, source.state)
                png = render_png(new_state)
            except (ValueError, IndexError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            session.state = new_state
            store.persist(session)
        doc = session_payload(session)
        doc["image_png_b64"] = base64.b64encode(png).decode("ascii")
        doc["keypoints_px"] = keypoints_px(session.state, require_model().config.final_resolution)
        return doc

    @app.get("/v1/session/{session_id}")
    def get_session(session_id: str):
        session = get_session_or_404(session_id)
        return {"scene_state": scene_to_json(session.state)}

    @app.get("/v1/session/{session_id}/image.png")
    def get_image(session_id: str):
        session = get_session_or_404(session_id)
        with session.lock:
            png = render_png(session.state)
        return Response(content=png, media_type="image/png")

    @app.delete("/v1/session/{session_id}", status_code=204)
    def delete_session(session_id: str):
        if not store.delete(session_id):
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return Response(status_code=204)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app


def serve(
    ckpt_path,
    port: int = 8000,
    persist_dir=None,
    ttl_seconds: float | None = None,
    host: str = "127.0.0.1",
    static_dir=None,
):
    import uvicorn

    from .trainer import load_model

    model, manifest = load_model(ckpt_path)
    app = create_app(
        model,
        ckpt_id=manifest.get("config_hash", "unknown"),
        persist_dir=persist_dir,
        ttl_seconds=ttl_seconds,
        static_dir=static_dir,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")
