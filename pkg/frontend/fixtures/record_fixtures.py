"""Record API fixtures for the operator-ui contract tests.

Runs the backend in-process (noiseless sensors so the calibration is exact
and overlay oracles are deterministic) and captures:

  calibration.json    GET /calibration response
  roi_spoke_plan.json POST /plans/spokes request + response + expected
                      overlay pixels from the ground-truth camera
  polyline_plan.json  POST /plans/polyline likewise
  golden_clip.json    one palpation's left-mic PCM slice + the backend
                      spectrogram of that slice (dB, 4 decimals)
  event_log.jsonl     streamed events of a small classified raster session

Regenerate with:  python3 frontend/fixtures/record_fixtures.py
"""

import base64
import json
import time
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from palpbench.calibration import run_calibration, save_calibration
from palpbench.features import extract_features, feature_names, spectrogram
from palpbench.learn import Dataset, save_model, stratified_split, svm_train
from palpbench.materials import Phantom, table_material
from palpbench.rig import RigConfig, RigSimulator
from palpbench.session import SessionService, WorkbenchConfig
from palpbench.session.api import create_app

HERE = Path(__file__).parent
SURFACE_HEIGHT_MM = 12.0


def build_sim(seed=0):
    mats = [table_material("tpu"), table_material("pla5")]
    grid = np.zeros((16, 16), dtype=np.int64)
    grid[:, 8:] = 1
    phantom = Phantom(grid=grid, cell_size=1.0, materials=mats, origin=(88.0, 88.0), name="fixture")
    return RigSimulator(phantom, RigConfig(seed=seed).with_ideal_sensors())


def train_model(tmp, seed=0):
    rows, labels = [], []
    for ci, x0 in enumerate((88.5, 96.5)):
        sim = build_sim(seed=seed + ci)
        for iy in range(4):
            for ix in range(4):
                sim.move_to(x0 + ix, 89.0 + iy)
                rows.append(extract_features(sim.palpate(2.0, 45.0)).values)
                labels.append(ci)
    ds = Dataset(vectors=np.array(rows), labels=np.array(labels),
                 class_names=("tpu", "pla5"), feature_names=feature_names(),
                 sensor_mask=("force", "mic_left", "mic_right"))
    train, _ = stratified_split(ds, seed=seed)
    model = svm_train(train.vectors, train.labels, ds.class_names, seed=seed)
    path = tmp / "fixture-model.json"
    save_model(model, path, standardization=train.standardization,
               sensor_mask=ds.sensor_mask, dataset_hash=ds.content_hash())
    return path


def main():
    tmp = HERE / "_scratch"
    tmp.mkdir(exist_ok=True)

    calib_sim = build_sim(seed=3)
    fit, _ = run_calibration(calib_sim)
    calib_path = tmp / "fixture-calibration.json"
    save_calibration(fit, calib_path)

    model_path = train_model(tmp, seed=5)

    sim = build_sim(seed=9)
    service = SessionService(
        sim, tmp / "data" / str(int(time.time() * 1000)),
        WorkbenchConfig(calibration_path=str(calib_path), model_path=str(model_path)),
    )
    client = TestClient(create_app(service))

    calibration = client.get("/calibration").json()
    (HERE / "calibration.json").write_text(json.dumps(calibration, indent=1) + "\n")

    def overlay_pixels(points_mm):
        out = []
        for x, y in points_mm:
            u, v, _ = sim.camera.project_stage_point((x, y, SURFACE_HEIGHT_MM))
            out.append([u, v])
        return out

    # ROI -> spoke plan. The polygon is what the client submits after its
    # 2 px stroke decimation, so it must be stable under that simplification:
    # an octagon's vertices sit ~7 px off their neighbor chords.
    center_u, center_v, z = sim.camera.project_stage_point((96.0, 96.0, SURFACE_HEIGHT_MM))
    px_per_mm = sim.camera.intrinsics.fx / z
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    roi = [
        [center_u + 6.0 * px_per_mm * float(np.cos(a)),
         center_v + 6.0 * px_per_mm * float(np.sin(a))]
        for a in ang
    ]
    spoke_request = {"roi_vertices_px": roi, "n_spokes": 8, "step": 1.0, "max_radius": 5.0}
    spoke_plan = client.post("/plans/spokes", json=spoke_request).json()
    (HERE / "roi_spoke_plan.json").write_text(json.dumps({
        "request": spoke_request,
        "response": spoke_plan,
        "overlay_px": overlay_pixels(spoke_plan["points_mm"]),
        "surface_height_mm": SURFACE_HEIGHT_MM,
    }, indent=1) + "\n")

    # polyline plan
    poly_request = {
        "vertices_px": [[center_u - 30.0, center_v], [center_u, center_v],
                        [center_u, center_v + 25.0]],
        "spacing": 1.0,
    }
    poly_plan = client.post("/plans/polyline", json=poly_request).json()
    (HERE / "polyline_plan.json").write_text(json.dumps({
        "request": poly_request,
        "response": poly_plan,
        "overlay_px": overlay_pixels(poly_plan["points_mm"]),
        "surface_height_mm": SURFACE_HEIGHT_MM,
    }, indent=1) + "\n")

    # golden clip: slice around contact of one palpation, backend spectrogram
    clip_sim = build_sim(seed=11)
    clip_sim.move_to(92.0, 92.0)
    record = clip_sim.palpate(2.0, 45.0)
    contact = int((clip_sim.config.pre_roll_s
                   + clip_sim.config.approach_clearance / clip_sim.config.z_speed)
                  * record.sample_rate)
    clip = np.ascontiguousarray(record.audio_left[contact - 2048 : contact + 13387])
    spec = spectrogram(clip, 1024, 512, record.sample_rate)
    (HERE / "golden_clip.json").write_text(json.dumps({
        "pcm16_b64": base64.b64encode(clip.astype("<i2").tobytes()).decode(),
        "sample_rate": record.sample_rate,
        "frame_length": 1024,
        "hop": 512,
        "spectrogram_db": [[round(float(v), 4) for v in row] for row in spec.magnitudes_db],
    }, indent=None) + "\n")

    # event log of a small classified raster
    plan = client.post("/plans/raster",
                       json={"origin": [89.0, 89.0], "nx": 2, "ny": 2, "step": 1.5}).json()
    client.post("/sessions", json={"id": "fixture-run", "plan": plan})
    events = []
    with client.websocket_connect(
        "/sessions/fixture-run/stream?kinds=STATE,FORCE_POINT,POINT_RESULT"
    ) as ws:
        client.post("/sessions/fixture-run/run")
        while True:
            msg = json.loads(ws.receive_text())
            events.append(msg)
            if msg["kind"] == "STATE" and msg["payload"].get("state") in ("DONE", "FAULT"):
                break
    with open(HERE / "event_log.jsonl", "w") as f:
        for event in events:
            f.write(json.dumps(event) + "\n")

    print(f"recorded {len(events)} events, spoke plan {len(spoke_plan['points_mm'])} points, "
          f"polyline {len(poly_plan['points_mm'])} points, "
          f"clip {len(clip)} samples / {len(spec.magnitudes_db)} frames")


if __name__ == "__main__":
    main()
