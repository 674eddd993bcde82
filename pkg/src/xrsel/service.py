"""HTTP+JSON facade over the selection engine for the browser frontend.

Sessions are independent and stateless per request apart from the loaded
cloud/field and the current selection; within a session, selection requests
are serialized (a second concurrent one gets 429).  Density fields are
cached by cloud content hash and estimation parameters, since estimation is
by far the slowest step and the frontend re-selects frequently.
"""

from __future__ import annotations

import hashlib
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from . import selection as selmod
from .field import DensityField, FieldError, MbeParams, PointCloud, compute_bounds, \
    estimate_density_mbe, load_cloud
from .geometry import GeometryError, HeadPose, Ray, SurfaceGeometry, compute_surface_camera, \
    default_far, normalize, scene_from_dict
from .selection import EmptyRegionError, SelectionError, SelectionResult, mesh_to_obj, subtract
from .synth import SynthError
from .traces import TraceError, parse_trace, segment_trace

DEFAULT_SERVICE_GRID = 64
DEFAULT_IDLE_TIMEOUT = 3600.0

TECHNIQUES = ("brush", "brush-wyp", "brush-lasso", "cloud-lasso")


@dataclass
class Session:
    id: str
    cloud: PointCloud
    field: DensityField
    surface: SurfaceGeometry
    head: HeadPose
    far: float
    eps: float = 0.005
    current: SelectionResult | None = None
    last_used: float = dc_field(default_factory=time.monotonic)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)


class _Engine:
    """Shared service state: sessions and the field cache."""

    def __init__(self, idle_timeout: float = DEFAULT_IDLE_TIMEOUT):
        self.sessions: dict[str, Session] = {}
        self.field_cache: dict[str, DensityField] = {}
        self.idle_timeout = idle_timeout
        self._lock = threading.Lock()

    def sweep(self) -> None:
        now = time.monotonic()
        with self._lock:
            dead = [sid for sid, s in self.sessions.items()
                    if now - s.last_used > self.idle_timeout]
            for sid in dead:
                del self.sessions[sid]

    def get(self, sid: str) -> Session | None:
        self.sweep()
        s = self.sessions.get(sid)
        if s is not None:
            s.last_used = time.monotonic()
        return s


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _field_key(cloud_bytes: bytes, grid: int, params: MbeParams, padding: float) -> str:
    h = hashlib.sha256()
    h.update(cloud_bytes)
    h.update(json.dumps({
        "grid": grid,
        "h0": params.pilot_bandwidth,
        "alpha": params.alpha,
        "padding": padding,
    }, sort_keys=True).encode())
    return h.hexdigest()


def _selection_payload(result: SelectionResult, session_id: str) -> dict:
    doc = result.to_json_dict()
    doc["mesh_url"] = f"/api/session/{session_id}/mesh"
    doc["mesh_triangles"] = len(result.mesh)
    return doc


def create_app(idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> FastAPI:
    app = FastAPI(title="xrsel service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    engine = _Engine(idle_timeout=idle_timeout)
    app.state.engine = engine

    @app.post("/api/session")
    async def create_session(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        try:
            surface, head, far = scene_from_dict(body.get("scene", {}))
        except (GeometryError, TypeError, ValueError) as e:
            return _error(400, f"invalid scene config: {e}")
        if "cloud_csv" in body:
            cloud_bytes = body["cloud_csv"].encode()
            source = io.StringIO(body["cloud_csv"])
            try:
                cloud = _cloud_from_csv_text(source)
            except FieldError as e:
                return _error(422, f"cannot parse cloud: {e}")
        elif "cloud_path" in body:
            try:
                with open(body["cloud_path"], "rb") as f:
                    cloud_bytes = f.read()
                cloud = load_cloud(body["cloud_path"])
            except (OSError, FieldError) as e:
                return _error(422, f"cannot load cloud: {e}")
        else:
            return _error(400, "provide cloud_csv or cloud_path")

        grid_res = int(body.get("grid", DEFAULT_SERVICE_GRID))
        padding = float(body.get("padding", 0.05))
        try:
            params = MbeParams(pilot_bandwidth=body.get("h0"), alpha=float(body.get("alpha", 0.5)))
        except FieldError as e:
            return _error(400, f"invalid estimator parameters: {e}")
        key = _field_key(cloud_bytes, grid_res, params, padding)
        cached = key in engine.field_cache
        if cached:
            dens = engine.field_cache[key]
        else:
            try:
                grid = compute_bounds(cloud, padding_fraction=padding,
                                      resolution=(grid_res, grid_res, grid_res))
                dens = estimate_density_mbe(cloud, grid, params)
            except FieldError as e:
                return _error(422, f"degenerate cloud: {e}")
            engine.field_cache[key] = dens
        if far is None:
            near = surface.signed_distance(head.position)
            if near <= 0:
                return _error(400, "head must be above the surface plane")
            far = default_far(near, dens.grid.diagonal)
        sid = uuid.uuid4().hex
        engine.sessions[sid] = Session(id=sid, cloud=cloud, field=dens,
                                       surface=surface, head=head, far=far,
                                       eps=float(body.get("eps", 0.005)))
        return JSONResponse({
            "session": sid,
            "num_points": len(cloud),
            "field_cached": cached,
            "grid": list(dens.grid.shape),
            "grid_min": [float(c) for c in dens.grid.vmin],
            "grid_max": [float(c) for c in dens.grid.vmax],
            "density_max": dens.max_value,
        })

    @app.post("/api/session/{sid}/select")
    async def select(sid: str, request: Request):
        s = engine.get(sid)
        if s is None:
            return _error(404, f"unknown session {sid}")
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _error(400, "request body is not valid JSON")
        technique = body.get("technique", "brush-lasso")
        if technique not in TECHNIQUES:
            return _error(400, f"technique must be one of {TECHNIQUES}")
        mode = body.get("mode", "set")
        if mode not in ("set", "subtract"):
            return _error(400, "mode must be 'set' or 'subtract'")
        radius = body.get("radius")
        if not s.lock.acquire(blocking=False):
            return _error(429, "a selection is already in flight for this session")
        try:
            try:
                trace = parse_trace(body.get("trace", {}))
                seg = segment_trace(trace, s.surface, eps=s.eps)
            except TraceError as e:
                return _error(400, f"malformed trace: {e}")
            setup = compute_surface_camera(s.head, s.surface, s.far)
            try:
                if technique == "brush":
                    result = selmod.brush_select(seg.positions, s.field, radius, s.cloud)
                elif technique == "brush-wyp":
                    result = selmod.brush_wyp(seg, s.field, s.head, radius, s.cloud)
                elif technique == "brush-lasso":
                    result = selmod.brush_lasso(seg, s.field, s.head, s.surface, setup,
                                                radius, s.cloud)
                else:
                    lasso = selmod.lasso_from_surface_samples(seg.surface_samples, s.surface)
                    result = selmod.cloud_lasso(lasso, s.field, setup, s.cloud)
            except EmptyRegionError as e:
                return _error(409, str(e))
            except SelectionError as e:
                return _error(400, str(e))
            if mode == "subtract":
                if s.current is None:
                    return _error(409, "no current selection to subtract from")
                s.current = subtract(s.current, result)
            else:
                s.current = result
            return JSONResponse(_selection_payload(s.current, sid))
        finally:
            s.lock.release()

    @app.get("/api/session/{sid}/mesh")
    def mesh(sid: str):
        s = engine.get(sid)
        if s is None:
            return _error(404, f"unknown session {sid}")
        if s.current is None:
            return _error(404, "no selection in this session")
        obj = mesh_to_obj(s.current.mesh)
        etag = hashlib.sha256(obj.encode()).hexdigest()
        return PlainTextResponse(obj, headers={"ETag": etag})

    @app.get("/api/session/{sid}/camera")
    def camera(sid: str, head: str = Query(...)):
        s = engine.get(sid)
        if s is None:
            return _error(404, f"unknown session {sid}")
        try:
            hx, hy, hz = (float(v) for v in head.split(","))
        except ValueError:
            return _error(400, "head must be 'x,y,z'")
        try:
            pose = HeadPose(position=(hx, hy, hz))
            setup = compute_surface_camera(pose, s.surface, s.far)
        except GeometryError as e:
            return _error(422, str(e))
        return JSONResponse(setup.to_dict())

    @app.get("/api/session/{sid}/snap")
    def snap(sid: str, origin: str = Query(...), direction: str = Query(...)):
        s = engine.get(sid)
        if s is None:
            return _error(404, f"unknown session {sid}")
        try:
            o = np.array([float(v) for v in origin.split(",")])
            d = np.array([float(v) for v in direction.split(",")])
            ray = Ray(o, normalize(d))
        except (ValueError, GeometryError):
            return _error(400, "origin and direction must be 'x,y,z'")
        poi = selmod.ray_max_density(ray, s.field)
        if poi is None:
            return JSONResponse({"point": None})
        return JSONResponse({"point": [float(c) for c in poi]})

    @app.get("/api/session/{sid}/points")
    def points(sid: str):
        s = engine.get(sid)
        if s is None:
            return _error(404, f"unknown session {sid}")
        return JSONResponse({"positions": [[float(c) for c in p] for p in s.cloud.positions]})

    return app


def _cloud_from_csv_text(stream: io.StringIO) -> PointCloud:
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as f:
        f.write(stream.getvalue())
        path = f.name
    try:
        return load_cloud(path)
    finally:
        import os
        os.unlink(path)
