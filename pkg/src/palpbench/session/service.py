"""End-to-end experiment orchestration.

The service owns one rig (simulator behind the wire protocol) and a store
root. A session run walks its plan point by point: MOV, PALP with live force
streaming, audio pickup, feature extraction, classification, persistence,
and event fan-out to subscribers. Pause/stop take effect between points;
every completed point is checkpointed, so a killed process resumes cleanly.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from ..calibration import load_calibration
from ..features import MfccConfig, extract_features, feature_names
from ..learn import load_model
from ..materials import format_phantom
from ..protocol import DeviceFault, loopback
from ..rig import PalpationRecord, RigSimulator
from ..scan import ScanPlan, build_probability_map
from .store import SessionStore

EVENT_KINDS = ("FRAME", "FORCE_POINT", "AUDIO_CHUNK", "POINT_RESULT", "STATE")

VALID_TRANSITIONS = {
    "IDLE": {"RUNNING"},
    "RUNNING": {"PAUSED", "DONE", "FAULT"},
    "PAUSED": {"RUNNING"},
    "DONE": set(),
    "FAULT": {"RUNNING"},  # resume after the cause is cleared
}


class SessionError(Exception):
    pass


class StateError(SessionError):
    pass


@dataclass(frozen=True)
class StreamEvent:
    kind: str
    seq: int  # per-kind, strictly increasing
    t_ns: int
    payload: dict

    def to_json(self):
        return json.dumps(
            {"kind": self.kind, "seq": self.seq, "t_ns": self.t_ns, "payload": self.payload}
        )


class Subscription:
    """Per-subscriber queues: FRAME is bounded (drop + gap marker), rest unbounded."""

    def __init__(self, kinds, frame_buffer=8):
        self.kinds = tuple(kinds)
        self._critical = queue.Queue()
        self._frames = queue.Queue(maxsize=frame_buffer)
        self._frame_gap = False
        self.closed = False

    def offer(self, event: StreamEvent):
        if event.kind not in self.kinds or self.closed:
            return
        if event.kind == "FRAME":
            try:
                self._frames.put_nowait(event)
            except queue.Full:
                self._frame_gap = True
            return
        self._critical.put(event)

    def get(self, timeout=None):
        """Next event in arrival order; critical kinds take priority."""
        try:
            return self._critical.get_nowait()
        except queue.Empty:
            pass
        if self._frame_gap:
            self._frame_gap = False
            return StreamEvent(kind="FRAME", seq=-1, t_ns=0, payload={"gap": True})
        try:
            return self._frames.get_nowait()
        except queue.Empty:
            pass
        if timeout is None:
            return None
        try:
            return self._critical.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self):
        out = []
        while True:
            ev = self.get()
            if ev is None:
                return out
            out.append(ev)

    def close(self):
        self.closed = True


class EventHub:
    """Per-kind sequence numbers and strictly monotonic timestamps."""

    def __init__(self, clock=None):
        self._seq = {k: 0 for k in EVENT_KINDS}
        self._last_t = 0
        self._subs = []
        self._clock = clock or (lambda: 0)
        self._lock = threading.Lock()
        self.log = []

    def subscribe(self, kinds=EVENT_KINDS, frame_buffer=8):
        sub = Subscription(kinds, frame_buffer)
        with self._lock:
            self._subs.append(sub)
        return sub

    def emit(self, kind, payload):
        with self._lock:
            self._seq[kind] += 1
            t = max(self._last_t + 1, int(self._clock()))
            self._last_t = t
            event = StreamEvent(kind=kind, seq=self._seq[kind], t_ns=t, payload=payload)
            self.log.append(event)
            for sub in self._subs:
                sub.offer(event)
        return event


@dataclass
class WorkbenchConfig:
    """Everything a service run needs, resolvable to a stable hash."""

    phantom_path: str = ""
    calibration_path: str = ""
    model_path: str = ""
    rig_seed: int = 0
    palpation_depth_mm: float = 2.0
    force_limit_n: float = 45.0
    sensor_mask: tuple = ("force", "mic_left", "mic_right")
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    point_delay_s: float = 0.0  # wall-clock pacing between points (0 = flat out)

    def content_hash(self, phantom=None):
        h = hashlib.sha256()
        if phantom is not None:
            h.update(format_phantom(phantom).encode())
        h.update(
            json.dumps(
                {
                    "seed": self.rig_seed,
                    "depth": self.palpation_depth_mm,
                    "limit": self.force_limit_n,
                    "mask": list(self.sensor_mask),
                    "mfcc": [
                        self.mfcc.sample_rate,
                        self.mfcc.frame_length,
                        self.mfcc.hop,
                        self.mfcc.n_mel,
                        self.mfcc.n_coeff,
                        self.mfcc.pre_emphasis,
                        self.mfcc.fmin,
                        self.mfcc.fmax_hz,
                    ],
                },
                sort_keys=True,
            ).encode()
        )
        return h.hexdigest()


class SessionService:
    """Owns the rig; serializes all commands through one driver."""

    def __init__(self, sim: RigSimulator, root, config: WorkbenchConfig = None):
        self.sim = sim
        self.root = root
        self.config = config or WorkbenchConfig()
        self.driver, self.emulator, self.transport = loopback(sim)
        self.hub = EventHub(clock=lambda: sim.clock_ns)
        self.model = None
        self.standardization = None
        self.model_mask = self.config.sensor_mask
        self.class_names = ()
        if self.config.model_path:
            self.model, self.standardization, mask, _ = load_model(self.config.model_path)
            if mask:
                self.model_mask = mask
            self.class_names = tuple(self.model.class_names)
        self.calibration = None
        if self.config.calibration_path:
            self.calibration = load_calibration(self.config.calibration_path)
        self._pause = threading.Event()
        self._stop = threading.Event()
        self._crash_after = None  # test hook: simulate a hard crash mid-run
        self.on_point = None  # optional callback(index), runs after each checkpoint
        # one rig owner at a time: the run loop holds this per point; anything
        # else touching the simulator (depth probes, ad-hoc frames) takes it too
        self.rig_lock = threading.RLock()

    # -- lifecycle -----------------------------------------------------------

    def create_session(self, session_id, plan: ScanPlan) -> SessionStore:
        for ref_name in ("model_path", "calibration_path"):
            ref = getattr(self.config, ref_name)
            if ref and not _exists(ref):
                raise SessionError(f"missing reference: {ref_name} -> {ref}")
        store = SessionStore.create(
            self.root,
            session_id,
            plan,
            config_hash=self.config.content_hash(self.sim.phantom),
            references={
                "model": self.config.model_path,
                "calibration": self.config.calibration_path,
            },
        )
        self.hub.emit("STATE", {"session": session_id, "state": "IDLE", "completed": 0})
        return store

    def open_session(self, session_id) -> SessionStore:
        return SessionStore.open(self.root, session_id)

    def pause(self):
        self._pause.set()

    def resume_flag_clear(self):
        self._pause.clear()

    def stop(self):
        self._stop.set()

    def _transition(self, store: SessionStore, new_state, detail=None):
        old = store.state
        if new_state != old and new_state not in VALID_TRANSITIONS[old]:
            raise StateError(f"illegal session transition {old} -> {new_state}")
        store.set_state(new_state, detail)
        self.hub.emit(
            "STATE",
            {
                "session": store.session_id,
                "state": new_state,
                "completed": store.completed_count(),
                "total": len(store.plan()),
                **({"detail": detail} if detail else {}),
            },
        )

    # -- the run loop ---------------------------------------------------------

    def recover(self, store: SessionStore) -> SessionStore:
        """Coerce a session orphaned by a crash (stuck RUNNING) to PAUSED."""
        if store.state == "RUNNING":
            store.set_state("PAUSED", detail="recovered after crash")
        return store

    def run_plan(self, store: SessionStore, emit_frames=True) -> SessionStore:
        """Execute the remaining plan points; blocks until DONE/PAUSED/FAULT."""
        plan = store.plan()
        if store.state not in ("IDLE", "PAUSED", "FAULT"):
            raise StateError(f"cannot run a session in state {store.state}")
        self._pause.clear()
        self._stop.clear()
        self.driver.stop()  # STOP is honored from any device mode
        self._transition(store, "RUNNING")
        start = store.completed_count()
        for index in range(start, len(plan)):
            if self._pause.is_set() or self._stop.is_set():
                self._transition(store, "PAUSED")
                return store
            x, y = plan.points[index]
            try:
                with self.rig_lock:
                    record = self._probe_point(index, x, y)
            except DeviceFault as e:
                self._transition(store, "FAULT", detail=f"point {index}: {e}")
                return store
            extra, payload = self._analyze(index, record)
            store.append_record(index, record, extra=extra)
            self.hub.emit("POINT_RESULT", payload)
            if emit_frames:
                with self.rig_lock:
                    self._emit_frame(index)
            if self.on_point:
                self.on_point(index)
            if self._crash_after is not None and index + 1 >= self._crash_after:
                import os

                os._exit(42)  # hard crash, no cleanup: exercised by recovery tests
            if self.config.point_delay_s > 0:
                import time

                time.sleep(self.config.point_delay_s)
        self._finalize(store)
        return store

    def _probe_point(self, index, x, y) -> PalpationRecord:
        self.driver.move_to(float(x), float(y))

        def on_sample(d, f):
            self.hub.emit(
                "FORCE_POINT", {"index": index, "displacement_mm": d, "force_n": f}
            )

        resp = self.driver.palpate(
            self.config.palpation_depth_mm, self.config.force_limit_n, on_sample=on_sample
        )
        captured = self.sim.drain_audio()
        if not captured:
            raise SessionError("audio capture produced no clip for this palpation")
        sim_record = captured[-1]
        # the canonical force series is what was streamed over the wire;
        # audio comes from the capture side channel (the audio interface path)
        wire_series = np.array(resp.samples, dtype=float)
        record = PalpationRecord(
            pose=sim_record.pose,
            force_series=wire_series,
            audio_left=sim_record.audio_left,
            audio_right=sim_record.audio_right,
            sample_rate=sim_record.sample_rate,
            t_start_ns=sim_record.t_start_ns,
            t_end_ns=sim_record.t_end_ns,
            material_name=sim_record.material_name,
        )
        self._emit_audio(index, record)
        return record

    def _emit_audio(self, index, record, chunk=16384):
        for mic, pcm in (("L", record.audio_left), ("R", record.audio_right)):
            for off in range(0, len(pcm), chunk):
                part = np.asarray(pcm[off : off + chunk], dtype="<i2")
                self.hub.emit(
                    "AUDIO_CHUNK",
                    {
                        "index": index,
                        "mic": mic,
                        "offset": off,
                        "sample_rate": record.sample_rate,
                        "pcm16_b64": base64.b64encode(part.tobytes()).decode("ascii"),
                    },
                )

    def _emit_frame(self, index):
        frame = self.sim.render_frame()
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(frame.rgb, mode="RGB").save(buf, format="PNG")
        self.hub.emit(
            "FRAME",
            {
                "index": index,
                "png_b64": base64.b64encode(buf.getvalue()).decode("ascii"),
                "t_ns": frame.timestamp_ns,
            },
        )

    def _analyze(self, index, record):
        """Feature extraction + classification; returns (manifest extra, event payload)."""
        vec = extract_features(record, self.config.mfcc, mask=self.config.sensor_mask)
        extra = {"features": [repr(float(v)) for v in vec.values]}
        payload = {
            "index": index,
            "x_mm": record.pose.x,
            "y_mm": record.pose.y,
            "material_truth": record.material_name,
        }
        if self.model is not None:
            probs = self._classify(vec)
            extra["probs"] = [repr(float(p)) for p in probs]
            payload["probs"] = [float(p) for p in probs]
            payload["predicted"] = int(np.argmax(probs))
            payload["class_names"] = list(self.class_names)
        return extra, payload

    def _classify(self, vec):
        x = vec.values
        if self.model_mask != tuple(self.config.sensor_mask):
            sub = [vec.names.index(n) for n in feature_names(self.model_mask)]
            x = x[sub]
        if self.standardization is not None:
            x = self.standardization.apply(x)
        return self.model.predict_proba(np.atleast_2d(x))[0]

    def _finalize(self, store: SessionStore):
        self._write_tables(store)
        if self.model is not None:
            self._write_map(store)
        self._transition(store, "DONE")

    def _write_tables(self, store: SessionStore):
        names = feature_names(self.config.sensor_mask, self.config.mfcc.n_coeff)
        rows = []
        pred_rows = []
        for meta in store.manifest["records"]:
            values = np.array([float(v) for v in meta["features"]])
            rows.append((meta["index"], meta["x_mm"], meta["y_mm"], meta["material"], values))
            if "probs" in meta:
                probs = np.array([float(p) for p in meta["probs"]])
                pred_rows.append((meta["index"], probs, int(np.argmax(probs))))
        store.write_features(rows, names, self.config.sensor_mask)
        if pred_rows:
            store.write_predictions(pred_rows, self.class_names)

    def _write_map(self, store: SessionStore):
        plan = store.plan()
        pts, probs = [], []
        for meta in store.manifest["records"]:
            if "probs" not in meta:
                return
            pts.append((meta["x_mm"], meta["y_mm"]))
            probs.append([float(p) for p in meta["probs"]])
        pmap = build_probability_map(
            np.array(pts), np.array(probs), plan.pattern, self.class_names,
            provenance=plan.provenance,
        )
        pmap.save_png(store.path / "map.png")
        pmap.save_sidecar(store.path / "map.json")
        with open(store.path / "map_samples.json", "w", encoding="utf-8") as f:
            json.dump(pmap.to_dict(), f)
            f.write("\n")

    # -- replay ---------------------------------------------------------------

    def replay(self, store: SessionStore):
        """Recompute features and predictions from persisted records only.

        Returns (features_bytes, predictions_bytes) produced from disk; with
        the same model file these are byte-identical to the live run's.
        """
        names = feature_names(self.config.sensor_mask, self.config.mfcc.n_coeff)
        rows, pred_rows = [], []
        for index, meta, record in store.iter_records():
            vec = extract_features(record, self.config.mfcc, mask=self.config.sensor_mask)
            rows.append((index, meta["x_mm"], meta["y_mm"], meta["material"], vec.values))
            if self.model is not None:
                probs = self._classify(vec)
                pred_rows.append((index, probs, int(np.argmax(probs))))
        store.write_features(rows, names, self.config.sensor_mask)
        if pred_rows:
            store.write_predictions(pred_rows, self.class_names)
        return store.read_features_bytes(), store.read_predictions_bytes()

    # -- streaming ---------------------------------------------------------

    def subscribe(self, store: SessionStore, kinds=EVENT_KINDS, frame_buffer=8):
        """Late subscribers get a state snapshot first, then live events."""
        sub = self.hub.subscribe(kinds, frame_buffer)
        snapshot = {
            "session": store.session_id,
            "state": store.state,
            "completed": store.completed_count(),
            "total": len(store.plan()),
            "snapshot": True,
        }
        if "STATE" in kinds:
            sub.offer(
                StreamEvent(kind="STATE", seq=0, t_ns=0, payload=snapshot)
            )
        return sub


def _exists(path):
    from pathlib import Path

    return Path(path).exists()
