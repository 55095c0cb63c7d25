"""Eye-to-hand calibration between the camera and stage frames.

The rig projects its concentric laser onto the scene at a grid of stage
positions and several Z levels; each bright spot is segmented, deprojected
through the camera intrinsics, and paired with the known stage coordinates.
A scaled rigid (similarity) transform is then fit by SVD so that

    p_stage = s * R @ p_camera + t
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .rig import Intrinsics, RigSimulator

CALIBRATION_FORMAT_VERSION = 1


class CalibrationError(Exception):
    pass


class BlobError(CalibrationError):
    """No usable laser blob in the frame (missing or ambiguous)."""


class DegenerateFitError(CalibrationError):
    """Correspondences are rank-deficient (collinear or coincident)."""


@dataclass
class SimilarityTransform:
    """Scaled rigid camera->stage map: p_stage = s * R @ p_camera + t."""

    s: float
    R: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        if self.s <= 0:
            raise CalibrationError(f"scale must be positive, got {self.s}")
        if not np.allclose(self.R.T @ self.R, np.eye(3), atol=1e-9):
            raise CalibrationError("R is not orthonormal")
        if not np.isclose(np.linalg.det(self.R), 1.0, atol=1e-9):
            raise CalibrationError("R is not a proper rotation (det != +1)")

    def apply(self, p_camera):
        """Map camera-frame point(s) to the stage frame."""
        p = np.asarray(p_camera, dtype=float)
        return self.s * (p @ self.R.T) + self.t

    def inverse(self):
        r_inv = self.R.T
        return SimilarityTransform(
            s=1.0 / self.s, R=r_inv, t=-(r_inv @ self.t) / self.s
        )

    @classmethod
    def identity(cls):
        return cls(s=1.0, R=np.eye(3), t=np.zeros(3))

    def to_dict(self):
        return {
            "scale": self.s,
            "rotation_row_major": self.R.reshape(-1).tolist(),
            "translation_mm": self.t.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            s=float(d["scale"]),
            R=np.array(d["rotation_row_major"], dtype=float).reshape(3, 3),
            t=np.array(d["translation_mm"], dtype=float),
        )


@dataclass
class CorrespondenceSet:
    """Paired camera/stage points collected at several Z levels."""

    camera_points: np.ndarray  # (n, 3) mm
    stage_points: np.ndarray  # (n, 3) mm
    z_levels: tuple = ()

    def __len__(self):
        return len(self.camera_points)


@dataclass
class FitResult:
    transform: SimilarityTransform
    residuals: np.ndarray  # per-pair Euclidean mm
    residual_mean: float
    residual_sd: float


def segment_laser_centroid(frame, green_threshold=60, dominance=1.3):
    """Sub-pixel centroid of the largest green-dominant blob in an RGB frame.

    Pixels are green-dominant when G exceeds ``green_threshold`` and G is at
    least ``dominance`` times both R and B. The centroid is weighted by green
    intensity. Raises BlobError when no blob exists or the two largest are
    the same size (ambiguous).
    """
    rgb = frame.rgb if hasattr(frame, "rgb") else np.asarray(frame)
    r = rgb[..., 0].astype(float)
    g = rgb[..., 1].astype(float)
    b = rgb[..., 2].astype(float)
    mask = (g > green_threshold) & (g >= dominance * r) & (g >= dominance * b)
    if not mask.any():
        raise BlobError("no green-dominant blob above threshold")
    labels, n = ndimage.label(mask)
    sizes = ndimage.sum_labels(np.ones_like(g), labels, index=np.arange(1, n + 1))
    order = np.argsort(sizes)[::-1]
    if n > 1 and sizes[order[0]] == sizes[order[1]]:
        raise BlobError(f"ambiguous: {n} blobs with equal largest size {int(sizes[order[0]])}")
    blob = labels == (order[0] + 1)
    weights = g * blob
    total = weights.sum()
    vv, uu = np.mgrid[0 : rgb.shape[0], 0 : rgb.shape[1]]
    u = float((weights * uu).sum() / total)
    v = float((weights * vv).sum() / total)
    return u, v


def deproject(pixel, depth_mm, intrinsics: Intrinsics):
    """Pixel + z-depth -> camera-frame 3D point (mm)."""
    if depth_mm <= 0:
        raise CalibrationError(f"depth must be positive, got {depth_mm}")
    u, v = pixel
    k = intrinsics
    return np.array(
        [(u - k.cx) * depth_mm / k.fx, (v - k.cy) * depth_mm / k.fy, depth_mm]
    )


def project(p_camera, intrinsics: Intrinsics):
    """Camera-frame point -> (u, v); inverse of deproject at its depth."""
    x, y, z = p_camera
    if z <= 0:
        raise CalibrationError("point is behind the camera")
    return intrinsics.cx + intrinsics.fx * x / z, intrinsics.cy + intrinsics.fy * y / z


def fit_similarity(correspondences: CorrespondenceSet) -> FitResult:
    """Least-squares similarity fit (Umeyama) from camera to stage points.

    Centroids are removed, the cross-covariance is decomposed by SVD, and a
    det-correction diagonal guarantees a proper rotation even when noise
    would prefer a reflection. Scale comes from the variance ratio.
    """
    a = np.asarray(correspondences.camera_points, dtype=float)
    b = np.asarray(correspondences.stage_points, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise CalibrationError("correspondences must be matching (n, 3) arrays")
    n = len(a)
    if n < 3:
        raise DegenerateFitError(f"need at least 3 pairs, got {n}")

    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    da = a - mu_a
    db = b - mu_b

    # collinear/coincident source points leave the rotation under-determined
    if np.linalg.matrix_rank(da, tol=1e-9 * max(1.0, np.abs(da).max())) < 2:
        raise DegenerateFitError("camera points are collinear or coincident")

    cov = db.T @ da / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    if sign == 0:
        sign = 1.0
    corr = np.ones(3)
    corr[-1] = sign
    rotation = u @ np.diag(corr) @ vt

    var_a = (da**2).sum() / n
    if var_a <= 0:
        raise DegenerateFitError("zero variance in camera points")
    scale = float((d * corr).sum() / var_a)
    if scale <= 0:
        raise DegenerateFitError(f"non-positive fitted scale {scale}")
    translation = mu_b - scale * rotation @ mu_a

    transform = SimilarityTransform(s=scale, R=rotation, t=translation)
    residuals = np.linalg.norm(transform.apply(a) - b, axis=1)
    return FitResult(
        transform=transform,
        residuals=residuals,
        residual_mean=float(residuals.mean()),
        residual_sd=float(residuals.std(ddof=1)) if n > 1 else 0.0,
    )


def run_calibration(
    sim: RigSimulator,
    grid=(3, 3),
    z_levels=(0.0, 15.0, 30.0),
    margin_mm=40.0,
    depth_source="frame",
) -> tuple[FitResult, CorrespondenceSet]:
    """Drive the rig over a grid at each Z level and fit the transform.

    At every pose the laser spot center is read from the projector and its
    depth from the camera (which carries the configured +/-1 mm fluctuation
    when noise is enabled), then deprojected through the intrinsics and
    paired with the commanded stage coordinates. depth_source selects the
    full rendered depth map ("frame") or the single-pixel probe ("probe",
    identical geometry, much cheaper for repeated studies).
    """
    nx, ny = grid
    if nx * ny * len(z_levels) < 3:
        raise CalibrationError("grid x levels must provide at least 3 points")
    if depth_source not in ("frame", "probe"):
        raise CalibrationError(f"unknown depth_source {depth_source!r}")
    xs = np.linspace(margin_mm, sim.config.travel_x[1] - margin_mm, nx)
    ys = np.linspace(margin_mm, sim.config.travel_y[1] - margin_mm, ny)
    intrinsics = sim.camera.intrinsics
    cam_pts = []
    stage_pts = []
    try:
        for z in z_levels:
            sim.move_z(z)
            for y in ys:
                for x in xs:
                    sim.move_to(x, y)
                    dot = sim.project_laser()
                    u_px = int(round(dot.u))
                    v_px = int(round(dot.v))
                    if depth_source == "frame":
                        depth = float(sim.render_frame().depth[v_px, u_px])
                    else:
                        depth = float(sim.sample_depth(u_px, v_px))
                    cam_pts.append(deproject((dot.u, dot.v), depth, intrinsics))
                    stage_pts.append([x, y, z])
    finally:
        sim.laser_off()
    corr = CorrespondenceSet(
        camera_points=np.array(cam_pts),
        stage_points=np.array(stage_pts),
        z_levels=tuple(z_levels),
    )
    return fit_similarity(corr), corr


def save_calibration(result: FitResult, path, source=None):
    """Persist a fit as a versioned JSON document."""
    doc = {
        "format": CALIBRATION_FORMAT_VERSION,
        **result.transform.to_dict(),
        "residual_mean_mm": result.residual_mean,
        "residual_sd_mm": result.residual_sd,
        "n_points": int(len(result.residuals)),
        "created_unix_ns": time.time_ns(),
        "source": source or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_calibration(path) -> SimilarityTransform:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    version = doc.get("format")
    if version != CALIBRATION_FORMAT_VERSION:
        raise CalibrationError(f"unsupported calibration format {version!r}")
    return SimilarityTransform.from_dict(doc)
