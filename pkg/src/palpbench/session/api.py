"""HTTP control surface plus one WebSocket event stream.

Control is plain request/response JSON; the stream channel multiplexes
StreamEvents as JSON text frames. The operator UI talks to exactly this
surface and nothing else.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from ..calibration import CalibrationError
from ..scan import (
    RoiPolygon,
    ScanError,
    ScanPlan,
    polyline_plan,
    raster_plan,
    spoke_plan,
)
from .service import EVENT_KINDS, SessionService, SessionError, StateError
from .store import StoreError


class RasterRequest(BaseModel):
    origin: tuple[float, float]
    nx: int
    ny: int
    step: float


class SpokesRequest(BaseModel):
    roi_vertices_px: list[tuple[float, float]]
    n_spokes: int = 8
    step: float = 1.0
    max_radius: float = 10.0


class PolylineRequest(BaseModel):
    vertices_px: list[tuple[float, float]]
    spacing: float = 1.0


class CreateSessionRequest(BaseModel):
    id: str
    plan: dict


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="palpbench", version="0.1.0")
    runners: dict[str, threading.Thread] = {}

    def stage_limits():
        return service.sim.config.travel_x, service.sim.config.travel_y

    def depth_lookup(u, v):
        k = service.sim.camera.intrinsics
        ui, vi = int(round(u)), int(round(v))
        if not (0 <= vi < k.height and 0 <= ui < k.width):
            return None
        with service.rig_lock:
            d = float(service.sim.sample_depth(ui, vi))
        return d if d > 0 else None

    def require_calibration():
        if service.calibration is None:
            raise HTTPException(409, "no calibration loaded")
        return service.calibration

    @app.get("/health")
    def health():
        return {"status": "ok", "clock_ns": service.sim.clock_ns}

    @app.get("/calibration")
    def calibration():
        T = require_calibration()
        k = service.sim.camera.intrinsics
        inv = T.inverse()
        return {
            "camera_to_stage": T.to_dict(),
            "stage_to_camera": inv.to_dict(),
            "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                           "width": k.width, "height": k.height},
        }

    @app.post("/plans/raster")
    def plan_raster(req: RasterRequest):
        lx, ly = stage_limits()
        try:
            plan = raster_plan(req.origin, req.nx, req.ny, req.step, lx, ly)
        except ScanError as e:
            raise HTTPException(422, str(e)) from None
        return plan.to_dict()

    @app.post("/plans/spokes")
    def plan_spokes(req: SpokesRequest):
        T = require_calibration()
        lx, ly = stage_limits()
        try:
            roi = RoiPolygon(np.array(req.roi_vertices_px))
            plan = spoke_plan(
                roi, T, depth_lookup, service.sim.camera.intrinsics,
                n_spokes=req.n_spokes, step=req.step, max_radius=req.max_radius,
                limits_x=lx, limits_y=ly,
            )
        except (ScanError, CalibrationError) as e:
            raise HTTPException(422, str(e)) from None
        return plan.to_dict()

    @app.post("/plans/polyline")
    def plan_polyline(req: PolylineRequest):
        T = require_calibration()
        lx, ly = stage_limits()
        try:
            plan = polyline_plan(
                np.array(req.vertices_px), T, depth_lookup,
                service.sim.camera.intrinsics, spacing=req.spacing,
                limits_x=lx, limits_y=ly,
            )
        except (ScanError, CalibrationError) as e:
            raise HTTPException(422, str(e)) from None
        return plan.to_dict()

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            plan = ScanPlan.from_dict(req.plan)
            store = service.create_session(req.id, plan)
        except (ScanError, SessionError, StoreError) as e:
            raise HTTPException(409, str(e)) from None
        return session_doc(store)

    def get_store(session_id):
        try:
            return service.open_session(session_id)
        except StoreError as e:
            raise HTTPException(404, str(e)) from None

    def session_doc(store):
        return {
            "id": store.session_id,
            "state": store.state,
            "completed": store.completed_count(),
            "total": len(store.plan()),
            "config_hash": store.manifest.get("config_hash", ""),
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_doc(get_store(session_id))

    @app.post("/sessions/{session_id}/run")
    def run_session(session_id: str):
        store = get_store(session_id)
        if session_id in runners and runners[session_id].is_alive():
            raise HTTPException(409, "session is already running")
        try:
            if store.state not in ("IDLE", "PAUSED", "FAULT"):
                raise StateError(f"cannot run a session in state {store.state}")
        except StateError as e:
            raise HTTPException(409, str(e)) from None
        thread = threading.Thread(
            target=service.run_plan, args=(store,), daemon=True, name=f"run-{session_id}"
        )
        runners[session_id] = thread
        thread.start()
        return {"id": session_id, "state": "RUNNING"}

    @app.post("/sessions/{session_id}/pause")
    def pause_session(session_id: str):
        get_store(session_id)
        service.pause()
        runner = runners.get(session_id)
        if runner:
            runner.join(timeout=30.0)
        return session_doc(get_store(session_id))

    @app.post("/sessions/{session_id}/stop")
    def stop_session(session_id: str):
        get_store(session_id)
        service.stop()
        runner = runners.get(session_id)
        if runner:
            runner.join(timeout=30.0)
        return session_doc(get_store(session_id))

    @app.get("/sessions/{session_id}/map")
    def session_map(session_id: str):
        store = get_store(session_id)
        path = store.path / "map_samples.json"
        if not path.exists():
            raise HTTPException(404, "no probability map yet")
        import json

        return json.loads(path.read_text())

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        await ws.accept()
        kinds_text = ws.query_params.get("kinds", "")
        kinds = tuple(k for k in kinds_text.split(",") if k) or EVENT_KINDS
        try:
            store = service.open_session(session_id)
        except StoreError:
            await ws.close(code=4404)
            return
        sub = service.subscribe(store, kinds=kinds)
        import asyncio

        try:
            while True:
                event = sub.get()
                if event is None:
                    await asyncio.sleep(0.01)
                    # surface client disconnects while idle
                    if ws.client_state.name != "CONNECTED":
                        break
                    continue
                await ws.send_text(event.to_json())
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            sub.close()

    return app
