"""On-disk session layout and integrity checking.

A session directory holds::

    manifest.json        # versioned; state, plan, per-record index + hashes
    records/000.csv      # displacement_mm,force_n
    records/000_L.wav    # 16-bit PCM, left contact microphone
    records/000_R.wav
    features.csv         # one row per palpation
    predictions.csv      # per-point class probabilities (when classified)
    map.png / map.json   # probability map render + georeference

The manifest is rewritten atomically after every completed point, so a crash
between points loses nothing: resume picks up at the first index missing
from the manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..rig import PalpationRecord, StagePose
from ..scan import ScanPlan

MANIFEST_FORMAT_VERSION = 1


class StoreError(Exception):
    pass


class IntegrityError(StoreError):
    """Persisted bytes disagree with the manifest's recorded hashes."""


class UnsupportedVersionError(StoreError):
    pass


def data_root(override=None):
    """Session storage root; PALPBENCH_DATA_ROOT overrides the default."""
    if override:
        return Path(override)
    return Path(os.environ.get("PALPBENCH_DATA_ROOT", "./palpbench-data"))


def _sha256(path: Path):
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _fmt(x):
    return repr(float(x))


def write_force_csv(path: Path, series):
    lines = ["displacement_mm,force_n"]
    lines.extend(f"{_fmt(d)},{_fmt(f)}" for d, f in series)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def read_force_csv(path: Path):
    lines = path.read_text(encoding="ascii").strip().splitlines()
    if not lines or lines[0] != "displacement_mm,force_n":
        raise StoreError(f"bad force series header in {path.name}")
    rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
    return np.array(rows, dtype=float).reshape(-1, 2)


def write_wav(path: Path, pcm: np.ndarray, sample_rate):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(np.asarray(pcm, dtype="<i2").tobytes())


def read_wav(path: Path):
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise StoreError(f"{path.name}: expected mono 16-bit PCM")
        sample_rate = w.getframerate()
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2"), float(sample_rate)


@dataclass
class SessionStore:
    """One session directory; all mutation goes through this object."""

    path: Path
    manifest: dict = field(default_factory=dict)

    @classmethod
    def create(cls, root, session_id, plan: ScanPlan, config_hash="", references=None):
        root = Path(root)
        path = root / session_id
        if path.exists():
            raise StoreError(f"session {session_id!r} already exists at {path}")
        (path / "records").mkdir(parents=True)
        store = cls(path=path)
        store.manifest = {
            "format": MANIFEST_FORMAT_VERSION,
            "id": session_id,
            "state": "IDLE",
            "config_hash": config_hash,
            "references": references or {},
            "plan": plan.to_dict(),
            "records": [],
        }
        store.flush()
        return store

    @classmethod
    def open(cls, root, session_id):
        path = Path(root) / session_id
        manifest_path = path / "manifest.json"
        if not manifest_path.exists():
            raise StoreError(f"no session {session_id!r} under {root}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        version = manifest.get("format")
        if version != MANIFEST_FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"unsupported manifest version {version!r} (supported: {MANIFEST_FORMAT_VERSION})"
            )
        return cls(path=path, manifest=manifest)

    # -- manifest ----------------------------------------------------------

    def flush(self):
        """Atomic manifest rewrite (write-then-rename)."""
        tmp = self.path / "manifest.json.tmp"
        tmp.write_text(json.dumps(self.manifest, indent=1) + "\n", encoding="utf-8")
        tmp.replace(self.path / "manifest.json")

    @property
    def session_id(self):
        return self.manifest["id"]

    @property
    def state(self):
        return self.manifest["state"]

    def set_state(self, state, detail=None):
        self.manifest["state"] = state
        if detail is not None:
            self.manifest["state_detail"] = detail
        self.flush()

    def plan(self) -> ScanPlan:
        return ScanPlan.from_dict(self.manifest["plan"])

    def completed_count(self):
        return len(self.manifest["records"])

    # -- records -----------------------------------------------------------

    def record_paths(self, index):
        base = self.path / "records"
        return (
            base / f"{index:03d}.csv",
            base / f"{index:03d}_L.wav",
            base / f"{index:03d}_R.wav",
        )

    def append_record(self, index, record: PalpationRecord, material="", extra=None):
        """Persist one palpation: record files first, then one manifest flush.

        `extra` (e.g. extracted features, class probabilities) rides in the
        same manifest entry so a crash can never leave a half-checkpointed
        point behind.
        """
        if index != self.completed_count():
            raise StoreError(
                f"record index {index} out of order (next is {self.completed_count()})"
            )
        csv_path, wl_path, wr_path = self.record_paths(index)
        write_force_csv(csv_path, record.force_series)
        write_wav(wl_path, record.audio_left, record.sample_rate)
        write_wav(wr_path, record.audio_right, record.sample_rate)
        meta = {
            "index": index,
            "x_mm": record.pose.x,
            "y_mm": record.pose.y,
            "material": material or record.material_name,
            "sample_rate": record.sample_rate,
            "t_start_ns": record.t_start_ns,
            "t_end_ns": record.t_end_ns,
            "sha256": {
                "csv": _sha256(csv_path),
                "wav_l": _sha256(wl_path),
                "wav_r": _sha256(wr_path),
            },
        }
        if extra:
            meta.update(extra)
        self.manifest["records"].append(meta)
        self.flush()

    def load_record(self, index) -> PalpationRecord:
        """Re-read one persisted record, verifying its hashes."""
        if index >= self.completed_count():
            raise StoreError(f"record {index} not in manifest")
        meta = self.manifest["records"][index]
        csv_path, wl_path, wr_path = self.record_paths(index)
        for key, p in (("csv", csv_path), ("wav_l", wl_path), ("wav_r", wr_path)):
            if not p.exists():
                raise IntegrityError(f"{p.name} missing from session directory")
            actual = _sha256(p)
            if actual != meta["sha256"][key]:
                raise IntegrityError(
                    f"hash mismatch for {p.name}: manifest {meta['sha256'][key][:12]}..., "
                    f"file {actual[:12]}..."
                )
        series = read_force_csv(csv_path)
        audio_l, sr = read_wav(wl_path)
        audio_r, _ = read_wav(wr_path)
        return PalpationRecord(
            pose=StagePose(meta["x_mm"], meta["y_mm"], 0.0),
            force_series=series,
            audio_left=audio_l,
            audio_right=audio_r,
            sample_rate=sr,
            t_start_ns=meta["t_start_ns"],
            t_end_ns=meta["t_end_ns"],
            material_name=meta.get("material", ""),
        )

    def iter_records(self):
        for i in range(self.completed_count()):
            yield i, self.manifest["records"][i], self.load_record(i)

    # -- feature / prediction tables ----------------------------------------

    def write_features(self, rows, feature_names, sensor_mask):
        """rows: list of (index, x, y, material, values array)."""
        header = "point_index,x_mm,y_mm,material," + ",".join(feature_names) + ",sensor_mask"
        mask_text = "+".join(sensor_mask)
        lines = [header]
        for index, x, y, material, values in rows:
            vals = ",".join(_fmt(v) for v in values)
            lines.append(f"{index},{_fmt(x)},{_fmt(y)},{material},{vals},{mask_text}")
        (self.path / "features.csv").write_text("\n".join(lines) + "\n", encoding="ascii")

    def read_features_bytes(self):
        p = self.path / "features.csv"
        return p.read_bytes() if p.exists() else b""

    def write_predictions(self, rows, class_names):
        """rows: list of (index, probs array, predicted index)."""
        header = "point_index," + ",".join(f"p_{c}" for c in class_names) + ",predicted"
        lines = [header]
        for index, probs, predicted in rows:
            lines.append(
                f"{index}," + ",".join(_fmt(p) for p in probs) + f",{class_names[predicted]}"
            )
        (self.path / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="ascii")

    def read_predictions_bytes(self):
        p = self.path / "predictions.csv"
        return p.read_bytes() if p.exists() else b""
