"""HTTP editing service.

Sessions hold an original and a current scene; deform/refine run as
background jobs guarded by a per-session mutation lock (a second mutation
while one runs gets 409).  The current scene is swapped in atomically when a
job finishes, so readers always see a consistent scene.  Drag requests are
validated synchronously before the job is queued, so schema problems and
conflicting constraints come back as 422 immediately.
"""

from __future__ import annotations

import io
import struct
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from PIL import Image
from pydantic import BaseModel

from . import __version__
from .errors import (
    ArapGSError,
    ConfigError,
    ConstraintConflictError,
    DataError,
    EmptySelectionError,
    FormatError,
    SchemaError,
)
from .pipeline import DeformConfig, deform, validate_drag
from .refinement import RefinementConfig, default_enhancer, refine
from .renderer import pick_point, render_u8, sh_to_rgb
from .splat_io import (
    Camera,
    GaussianScene,
    camera_to_json,
    cameras_from_json,
    dragspec_from_json,
    read_cameras,
    read_ply,
    scene_from_ply_bytes,
    scene_to_ply_bytes,
)

MAX_POINTCLOUD_POINTS = 200_000

VALIDATION_ERRORS = (
    SchemaError,
    FormatError,
    DataError,
    ConfigError,
    EmptySelectionError,
    ConstraintConflictError,
)


@dataclass
class Session:
    original: GaussianScene
    scene: GaussianScene
    cameras: list[Camera] = dc_field(default_factory=list)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)


@dataclass
class Job:
    kind: str
    session_id: str
    status: str = "running"  # running | done | error
    error: str | None = None
    result: dict | None = None


class PickRequest(BaseModel):
    camera: int
    x: int
    y: int


def _deform_config(obj: dict | None) -> DeformConfig:
    cfg = DeformConfig()
    if not obj:
        return cfg
    allowed = {"n_sub", "graph_k", "interp_k", "max_iters", "weight_mode",
               "seed", "tau"}
    bad = set(obj) - allowed
    if bad:
        raise ConfigError(f"unknown deform options: {sorted(bad)}")
    for key, val in obj.items():
        setattr(cfg, key, val)
    return cfg


def _refine_config(obj: dict | None) -> RefinementConfig:
    cfg = RefinementConfig()
    if not obj:
        return cfg
    allowed = {"iterations", "lr", "update_period", "views_per_update",
               "displacement_threshold", "mask_dilation", "near"}
    bad = set(obj) - allowed
    if bad:
        raise ConfigError(f"unknown refine options: {sorted(bad)}")
    for key, val in obj.items():
        setattr(cfg, key, val)
    return cfg


def create_app(
    scene_path: str | Path | None = None,
    cameras_path: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="arapgs", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    sessions: dict[str, Session] = {}
    jobs: dict[str, Job] = {}

    def new_session(scene: GaussianScene, cameras: list[Camera]) -> str:
        sid = uuid.uuid4().hex
        sessions[sid] = Session(original=scene, scene=scene.copy(), cameras=cameras)
        return sid

    if scene_path is not None:
        cams = read_cameras(cameras_path) if cameras_path else []
        sid = new_session(read_ply(scene_path), cams)
        app.state.default_session = sid

    def get_session(sid: str) -> Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(404, f"no session {sid}")
        return sess

    def session_info(sid: str, sess: Session) -> dict:
        return {
            "session_id": sid,
            "count": sess.scene.count,
            "bbox_diagonal": sess.scene.bbox_diagonal(),
            "n_cameras": len(sess.cameras),
            "busy": sess.lock.locked(),
        }

    def run_job(job_id: str, sess: Session, fn) -> None:
        job = jobs[job_id]

        def body():
            try:
                job.result = fn()
                job.status = "done"
            except Exception as exc:  # surfaced via the job endpoint
                job.status = "error"
                job.error = str(exc)
            finally:
                sess.lock.release()

        threading.Thread(target=body, daemon=True).start()

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/api/sessions")
    async def create_session(
        scene: UploadFile = File(...),
        cameras: UploadFile | None = File(None),
    ) -> dict:
        raw = await scene.read()
        try:
            parsed = scene_from_ply_bytes(raw, scene.filename or "<upload>")
            cams: list[Camera] = []
            if cameras is not None:
                import json as _json

                cams = cameras_from_json(_json.loads(await cameras.read()))
        except VALIDATION_ERRORS as exc:
            raise HTTPException(422, str(exc)) from exc
        sid = new_session(parsed, cams)
        return session_info(sid, sessions[sid])

    @app.get("/api/sessions/{sid}")
    def get_info(sid: str) -> dict:
        return session_info(sid, get_session(sid))

    @app.delete("/api/sessions/{sid}")
    def delete_session(sid: str) -> dict:
        sess = get_session(sid)
        if not sess.lock.acquire(blocking=False):
            raise HTTPException(409, "session has a job running")
        try:
            del sessions[sid]
        finally:
            sess.lock.release()
        return {"deleted": sid}

    @app.get("/api/sessions/{sid}/cameras")
    def get_cameras(sid: str) -> dict:
        sess = get_session(sid)
        return {"cameras": [camera_to_json(c) for c in sess.cameras]}

    @app.put("/api/sessions/{sid}/cameras")
    def put_cameras(sid: str, doc: dict = Body(...)) -> dict:
        sess = get_session(sid)
        try:
            sess.cameras = cameras_from_json(doc)
        except SchemaError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"n_cameras": len(sess.cameras)}

    @app.get("/api/sessions/{sid}/pointcloud")
    def pointcloud(sid: str, max_points: int = MAX_POINTCLOUD_POINTS) -> Response:
        """Binary preview: u32 count, then count*3 float32 positions and
        count*3 uint8 colors, all little-endian."""
        sess = get_session(sid)
        scene = sess.scene
        limit = min(max(1, max_points), MAX_POINTCLOUD_POINTS)
        if scene.count > limit:
            sel = np.unique(
                np.round(np.linspace(0, scene.count - 1, limit)).astype(np.int64)
            )
        else:
            sel = np.arange(scene.count)
        pos = np.ascontiguousarray(scene.centers[sel], dtype="<f4")
        col = (sh_to_rgb(scene.sh_dc[sel]) * 255.0).round().astype(np.uint8)
        payload = struct.pack("<I", sel.size) + pos.tobytes() + col.tobytes()
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/api/sessions/{sid}/scene.ply")
    def scene_ply(sid: str) -> Response:
        sess = get_session(sid)
        return Response(
            content=scene_to_ply_bytes(sess.scene),
            media_type="application/octet-stream",
            headers={"Content-Disposition": "attachment; filename=scene.ply"},
        )

    @app.get("/api/sessions/{sid}/render")
    def render_view(
        sid: str, camera: int = 0, background: str = "0,0,0", original: bool = False
    ) -> Response:
        sess = get_session(sid)
        if not 0 <= camera < len(sess.cameras):
            raise HTTPException(404, f"no camera {camera}")
        try:
            bg = [float(v) for v in background.split(",")]
            if len(bg) != 3:
                raise ValueError
        except ValueError:
            raise HTTPException(422, "background must be 'r,g,b' floats") from None
        scene = sess.original if original else sess.scene
        img = render_u8(scene, sess.cameras[camera], background=bg)
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/sessions/{sid}/pick")
    def pick(sid: str, req: PickRequest) -> dict:
        sess = get_session(sid)
        if not 0 <= req.camera < len(sess.cameras):
            raise HTTPException(404, f"no camera {req.camera}")
        point = pick_point(sess.scene, sess.cameras[req.camera], req.x, req.y)
        return {"point": None if point is None else point.tolist()}

    @app.post("/api/sessions/{sid}/deform")
    def start_deform(sid: str, body: dict = Body(...)) -> dict:
        sess = get_session(sid)
        if not sess.lock.acquire(blocking=False):
            raise HTTPException(409, "session has a job running")
        try:
            drag = dragspec_from_json(body.get("drag"))
            cfg = _deform_config(body.get("config"))
            validate_drag(sess.original, drag, cfg)
        except VALIDATION_ERRORS as exc:
            sess.lock.release()
            raise HTTPException(422, str(exc)) from exc
        except Exception:
            sess.lock.release()
            raise

        job_id = uuid.uuid4().hex
        jobs[job_id] = Job(kind="deform", session_id=sid)

        def work() -> dict:
            out = deform(sess.original, drag, cfg)
            sess.scene = out.scene  # atomic swap
            return {
                "iterations": out.result.iterations,
                "converged": out.result.converged,
                "final_energy": float(out.result.energy_trace[-1]),
                "constraints": len(out.graph.constraints),
            }

        run_job(job_id, sess, work)
        return {"job_id": job_id}

    @app.post("/api/sessions/{sid}/refine")
    def start_refine(sid: str, body: dict = Body(default={})) -> dict:
        sess = get_session(sid)
        if not sess.cameras:
            raise HTTPException(422, "session has no cameras; upload cameras first")
        if not sess.lock.acquire(blocking=False):
            raise HTTPException(409, "session has a job running")
        try:
            cfg = _refine_config(body.get("config"))
        except VALIDATION_ERRORS as exc:
            sess.lock.release()
            raise HTTPException(422, str(exc)) from exc
        except Exception:
            sess.lock.release()
            raise

        job_id = uuid.uuid4().hex
        jobs[job_id] = Job(kind="refine", session_id=sid)

        def work() -> dict:
            result = refine(
                sess.original, sess.scene, sess.cameras, default_enhancer(), cfg
            )
            sess.scene = result.scene  # atomic swap
            return {
                "iterations": int(result.loss_history.size),
                "optimized_gaussians": int(result.selected.size),
                "final_loss": float(result.loss_history[-1])
                if result.loss_history.size else None,
            }

        run_job(job_id, sess, work)
        return {"job_id": job_id}

    @app.post("/api/sessions/{sid}/revert")
    def revert(sid: str) -> dict:
        sess = get_session(sid)
        if not sess.lock.acquire(blocking=False):
            raise HTTPException(409, "session has a job running")
        try:
            sess.scene = sess.original.copy()
        finally:
            sess.lock.release()
        return {"reverted": True}

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str) -> dict:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"no job {job_id}")
        return {
            "job_id": job_id,
            "kind": job.kind,
            "session_id": job.session_id,
            "status": job.status,
            "error": job.error,
            "result": job.result,
        }

    return app
