import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from palpbench.calibration import run_calibration, save_calibration
from palpbench.materials import table_material, uniform_phantom
from palpbench.rig import RigConfig, RigSimulator
from palpbench.session import SessionService, WorkbenchConfig
from palpbench.session.api import create_app


@pytest.fixture
def calibrated_service(tmp_path):
    phantom = uniform_phantom(table_material("tpu"), nx=30, ny=30, cell_size=2.0, origin=(70.0, 70.0))
    sim = RigSimulator(phantom, RigConfig(seed=0).with_ideal_sensors())
    result, _ = run_calibration(sim)
    calib_path = tmp_path / "calibration.json"
    save_calibration(result, calib_path)
    sim.home()
    config = WorkbenchConfig(calibration_path=str(calib_path))
    service = SessionService(sim, tmp_path / "data", config)
    return service


@pytest.fixture
def client(calibrated_service):
    return TestClient(create_app(calibrated_service))


class TestControlEndpoints:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_calibration_doc(self, client):
        r = client.get("/calibration")
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["camera_to_stage"]["rotation_row_major"]) == 9
        assert doc["intrinsics"]["width"] == 640

    def test_raster_plan_endpoint(self, client):
        r = client.post(
            "/plans/raster", json={"origin": [80.0, 80.0], "nx": 3, "ny": 2, "step": 1.0}
        )
        assert r.status_code == 200
        plan = r.json()
        assert plan["pattern"] == "RASTER"
        assert len(plan["points_mm"]) == 6

    def test_spokes_plan_round_trip(self, client):
        ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        roi = [[320 + 30 * np.cos(a), 240 + 30 * np.sin(a)] for a in ang]
        r = client.post(
            "/plans/spokes",
            json={"roi_vertices_px": roi, "n_spokes": 6, "step": 1.0, "max_radius": 4.0},
        )
        assert r.status_code == 200
        plan = r.json()
        assert plan["pattern"] == "SPOKES"
        assert len(plan["points_mm"]) == 1 + 6 * 4
        assert plan["provenance"]["n_spokes"] == 6

    def test_polyline_plan_endpoint(self, client):
        r = client.post(
            "/plans/polyline",
            json={"vertices_px": [[300.0, 240.0], [340.0, 240.0]], "spacing": 2.0},
        )
        assert r.status_code == 200
        pts = np.array(r.json()["points_mm"])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        # uniform spacing, with the endpoint always included as a final sample
        assert np.allclose(seg[:-1], 2.0, atol=1e-6)
        assert 0.0 < seg[-1] <= 2.0 + 1e-9

    def test_degenerate_roi_rejected(self, client):
        r = client.post(
            "/plans/spokes", json={"roi_vertices_px": [[0, 0], [1, 1]], "n_spokes": 4}
        )
        assert r.status_code == 422

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/ghost").status_code == 404

    def test_create_run_poll_done(self, client):
        plan = client.post(
            "/plans/raster", json={"origin": [75.0, 75.0], "nx": 2, "ny": 2, "step": 1.0}
        ).json()
        r = client.post("/sessions", json={"id": "api-run", "plan": plan})
        assert r.status_code == 201
        assert r.json()["state"] == "IDLE"

        r = client.post("/sessions/api-run/run")
        assert r.status_code == 200
        for _ in range(200):
            doc = client.get("/sessions/api-run").json()
            if doc["state"] in ("DONE", "FAULT"):
                break
            time.sleep(0.05)
        assert doc["state"] == "DONE"
        assert doc["completed"] == 4

    def test_duplicate_session_conflict(self, client):
        plan = client.post(
            "/plans/raster", json={"origin": [75.0, 75.0], "nx": 1, "ny": 1, "step": 1.0}
        ).json()
        assert client.post("/sessions", json={"id": "dup", "plan": plan}).status_code == 201
        assert client.post("/sessions", json={"id": "dup", "plan": plan}).status_code == 409


class TestStream:
    def test_websocket_snapshot_then_events(self, client):
        plan = client.post(
            "/plans/raster", json={"origin": [75.0, 75.0], "nx": 2, "ny": 1, "step": 1.0}
        ).json()
        client.post("/sessions", json={"id": "ws-run", "plan": plan})
        with client.websocket_connect(
            "/sessions/ws-run/stream?kinds=STATE,POINT_RESULT"
        ) as ws:
            first = json.loads(ws.receive_text())
            assert first["kind"] == "STATE"
            assert first["payload"]["snapshot"] is True
            client.post("/sessions/ws-run/run")
            kinds_seen = []
            indices = []
            for _ in range(20):
                msg = json.loads(ws.receive_text())
                kinds_seen.append(msg["kind"])
                if msg["kind"] == "POINT_RESULT":
                    indices.append(msg["payload"]["index"])
                if msg["kind"] == "STATE" and msg["payload"].get("state") == "DONE":
                    break
            assert indices == [0, 1]
            assert "STATE" in kinds_seen

    def test_websocket_unknown_session_closes(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/sessions/ghost/stream") as ws:
                ws.receive_text()
