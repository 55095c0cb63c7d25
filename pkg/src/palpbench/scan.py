"""Probe-point planning and probability-map interpolation.

Three plan shapes: serpentine rasters, radial spokes grown from an ROI
centroid, and arc-length-resampled polylines. Classified samples become a
per-class probability raster: spoke samples interpolate bilinearly on the
polar (radius, angle) lattice with angular wraparound; raster/polyline
samples use inverse-distance weighting with an influence-radius cutoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .calibration import SimilarityTransform, deproject


class ScanError(ValueError):
    pass


class Pattern(str, Enum):
    RASTER = "RASTER"
    SPOKES = "SPOKES"
    POLYLINE = "POLYLINE"


@dataclass
class ScanPlan:
    points: np.ndarray  # (n, 2) stage-frame mm, probe order
    pattern: Pattern
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.points) == 0:
            raise ScanError("plan has no points")
        dupes = np.all(np.isclose(np.diff(self.points, axis=0), 0.0, atol=1e-12), axis=1)
        if dupes.any():
            raise ScanError(f"duplicate consecutive points at index {int(np.argmax(dupes))}")

    def __len__(self):
        return len(self.points)

    def total_travel(self):
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def to_dict(self):
        return {
            "pattern": self.pattern.value,
            "points_mm": self.points.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            points=np.array(d["points_mm"], dtype=float),
            pattern=Pattern(d["pattern"]),
            provenance=d.get("provenance", {}),
        )


@dataclass
class RoiPolygon:
    """Simple pixel-frame polygon marking the region to investigate."""

    vertices: np.ndarray  # (n, 2) pixels

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(self.vertices) < 3:
            raise ScanError(f"polygon needs at least 3 vertices, got {len(self.vertices)}")
        if self._self_intersects():
            raise ScanError("polygon is self-intersecting")
        if abs(self.signed_area()) < 1e-9:
            raise ScanError("polygon has zero area")

    def signed_area(self):
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def centroid(self):
        """Area centroid of the polygon (pixels)."""
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = 0.5 * cross.sum()
        cx = float(((x + xn) * cross).sum() / (6.0 * area))
        cy = float(((y + yn) * cross).sum() / (6.0 * area))
        return cx, cy

    def _self_intersects(self):
        v = self.vertices
        n = len(v)
        segs = [(v[i], v[(i + 1) % n]) for i in range(n)]

        def intersects(p1, p2, p3, p4):
            d = (p2[0] - p1[0]) * (p4[1] - p3[1]) - (p2[1] - p1[1]) * (p4[0] - p3[0])
            if abs(d) < 1e-12:
                return False
            t = ((p3[0] - p1[0]) * (p4[1] - p3[1]) - (p3[1] - p1[1]) * (p4[0] - p3[0])) / d
            u = ((p3[0] - p1[0]) * (p2[1] - p1[1]) - (p3[1] - p1[1]) * (p2[0] - p1[0])) / d
            return 1e-9 < t < 1 - 1e-9 and 1e-9 < u < 1 - 1e-9

        for i in range(n):
            for j in range(i + 1, n):
                if j in (i, (i + 1) % n, (i - 1) % n) or (i == 0 and j == n - 1):
                    continue
                if intersects(*segs[i], *segs[j]):
                    return True
        return False

    def contains(self, x, y):
        v = self.vertices
        n = len(v)
        inside = False
        j = n - 1
        for i in range(n):
            xi, yi = v[i]
            xj, yj = v[j]
            if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
                inside = not inside
            j = i
        return inside

    def boundary_radius(self, cx, cy, direction):
        """Distance from (cx, cy) along `direction` to the polygon edge."""
        dx, dy = direction
        best = None
        v = self.vertices
        n = len(v)
        for i in range(n):
            x1, y1 = v[i]
            x2, y2 = v[(i + 1) % n]
            d = dx * (y1 - y2) - dy * (x1 - x2)
            if abs(d) < 1e-12:
                continue
            t = ((x1 - cx) * (y1 - y2) - (y1 - cy) * (x1 - x2)) / d
            s = (dx * (y1 - cy) - dy * (x1 - cx)) / d
            if t > 1e-9 and -1e-9 <= s <= 1 + 1e-9:
                best = t if best is None else min(best, t)
        return best


def _check_limits(points, limits_x=(0.0, 200.0), limits_y=(0.0, 200.0)):
    for idx, (x, y) in enumerate(points):
        if not (limits_x[0] <= x <= limits_x[1] and limits_y[0] <= y <= limits_y[1]):
            raise ScanError(
                f"plan point {idx} at ({x:.3f}, {y:.3f}) outside stage travel"
            )


def raster_plan(origin, nx, ny, step, limits_x=(0.0, 200.0), limits_y=(0.0, 200.0)) -> ScanPlan:
    """Serpentine raster: rows alternate direction to minimize travel."""
    if nx < 1 or ny < 1 or step <= 0:
        raise ScanError("raster needs nx, ny >= 1 and step > 0")
    x0, y0 = origin
    points = []
    for row in range(ny):
        cols = range(nx) if row % 2 == 0 else range(nx - 1, -1, -1)
        points.extend((x0 + c * step, y0 + row * step) for c in cols)
    _check_limits(points, limits_x, limits_y)
    return ScanPlan(
        points=np.array(points),
        pattern=Pattern.RASTER,
        provenance={"origin_mm": list(origin), "nx": nx, "ny": ny, "step_mm": step},
    )


def _pixel_to_stage(pixel, transform: SimilarityTransform, depth_lookup, intrinsics):
    depth = depth_lookup(*pixel)
    if depth is None or depth <= 0:
        raise ScanError(f"invalid depth at pixel ({pixel[0]:.1f}, {pixel[1]:.1f})")
    return transform.apply(deproject(pixel, depth, intrinsics))


def spoke_plan(
    roi: RoiPolygon,
    transform: SimilarityTransform,
    depth_lookup,
    intrinsics,
    n_spokes=8,
    step=1.0,
    max_radius=10.0,
    limits_x=(0.0, 200.0),
    limits_y=(0.0, 200.0),
) -> ScanPlan:
    """Rays of probe points growing from the ROI centroid.

    The pixel-frame centroid and spoke directions are deprojected and mapped
    into the stage frame; points advance in stage-frame millimeters and stop
    at max_radius or one step past the ROI boundary, whichever comes first.
    Ordering is spoke by spoke, outward.
    """
    if n_spokes < 1 or step <= 0 or max_radius <= 0:
        raise ScanError("need n_spokes >= 1, step > 0, max_radius > 0")
    cx, cy = roi.centroid()
    center_stage = _pixel_to_stage((cx, cy), transform, depth_lookup, intrinsics)

    angles = 2.0 * np.pi * np.arange(n_spokes) / n_spokes
    points = [center_stage[:2]]
    spoke_index = [(-1, 0)]  # (spoke, ring) per point; centroid is (-1, 0)
    for s_idx, theta in enumerate(angles):
        direction_px = (np.cos(theta), np.sin(theta))
        # map a unit pixel step along this spoke into the stage frame
        probe_px = (cx + np.cos(theta), cy + np.sin(theta))
        probe_stage = _pixel_to_stage(probe_px, transform, depth_lookup, intrinsics)
        d_stage = probe_stage[:2] - center_stage[:2]
        norm = np.linalg.norm(d_stage)
        if norm < 1e-12:
            raise ScanError("spoke direction collapsed under the calibration")
        d_stage = d_stage / norm
        # ROI boundary distance along this spoke, converted to stage mm
        r_boundary_px = roi.boundary_radius(cx, cy, direction_px)
        mm_per_px = norm  # stage mm traveled per pixel step along the spoke
        r_stop = max_radius
        if r_boundary_px is not None:
            r_stop = min(max_radius, r_boundary_px * mm_per_px + step)
        ring = 1
        while ring * step <= r_stop + 1e-9:
            points.append(center_stage[:2] + ring * step * d_stage)
            spoke_index.append((s_idx, ring))
            ring += 1
    _check_limits(points, limits_x, limits_y)
    return ScanPlan(
        points=np.array(points),
        pattern=Pattern.SPOKES,
        provenance={
            "roi_vertices_px": roi.vertices.tolist(),
            "centroid_px": [cx, cy],
            "n_spokes": n_spokes,
            "step_mm": step,
            "max_radius_mm": max_radius,
            "center_stage_mm": center_stage[:2].tolist(),
            "spoke_ring": spoke_index,
        },
    )


def polyline_plan(
    vertices_px,
    transform: SimilarityTransform,
    depth_lookup,
    intrinsics,
    spacing=1.0,
    limits_x=(0.0, 200.0),
    limits_y=(0.0, 200.0),
) -> ScanPlan:
    """Uniform arc-length resampling of a user polyline, endpoints included."""
    vertices_px = np.asarray(vertices_px, dtype=float).reshape(-1, 2)
    if len(vertices_px) < 2:
        raise ScanError("polyline needs at least 2 vertices")
    if spacing <= 0:
        raise ScanError("spacing must be positive")
    stage = np.array(
        [_pixel_to_stage(p, transform, depth_lookup, intrinsics)[:2] for p in vertices_px]
    )
    seg = np.linalg.norm(np.diff(stage, axis=0), axis=1)
    total = float(seg.sum())
    if total < 1e-9:
        raise ScanError("polyline has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = list(np.arange(0.0, total, spacing))
    if total - targets[-1] > 1e-9:
        targets.append(total)  # endpoint always included
    points = []
    for s in targets:
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(seg) - 1)
        f = (s - cum[i]) / seg[i] if seg[i] > 0 else 0.0
        points.append(stage[i] + f * (stage[i + 1] - stage[i]))
    _check_limits(points, limits_x, limits_y)
    return ScanPlan(
        points=np.array(points),
        pattern=Pattern.POLYLINE,
        provenance={
            "vertices_px": vertices_px.tolist(),
            "spacing_mm": spacing,
            "arc_length_mm": total,
        },
    )


@dataclass
class ProbabilityMap:
    """Per-class probability field over the scanned region.

    raster is (H, W, C) in [0, 1]; alpha marks where the field is defined.
    Geometry: x = x0 + (col + 0.5) * cell, y = y0 + (row + 0.5) * cell.
    """

    sample_points: np.ndarray  # (n, 2) stage mm
    sample_probs: np.ndarray  # (n, C)
    class_names: tuple
    raster: np.ndarray  # (H, W, C)
    alpha: np.ndarray  # (H, W) bool
    origin: tuple  # (x0, y0) mm of the raster's lower-left corner
    cell_size: float
    pattern: Pattern

    def value_at(self, x, y):
        col = int((x - self.origin[0]) / self.cell_size)
        row = int((y - self.origin[1]) / self.cell_size)
        if not (0 <= row < self.raster.shape[0] and 0 <= col < self.raster.shape[1]):
            return None
        if not self.alpha[row, col]:
            return None
        return self.raster[row, col]

    def to_dict(self):
        return {
            "class_names": list(self.class_names),
            "pattern": self.pattern.value,
            "origin_mm": list(self.origin),
            "cell_size_mm": self.cell_size,
            "shape": list(self.raster.shape),
            "samples": [
                {"x_mm": float(p[0]), "y_mm": float(p[1]), "probs": q.tolist()}
                for p, q in zip(self.sample_points, self.sample_probs)
            ],
        }

    def save_png(self, path, class_colors=None):
        """RGBA heat overlay: hue by argmax class, opacity by confidence."""
        from PIL import Image

        h, w, c = self.raster.shape
        if class_colors is None:
            base = np.array(
                [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48],
                 [145, 30, 180], [70, 240, 240]][:c]
            )
        else:
            base = np.asarray(class_colors)[:c]
        rgba = np.zeros((h, w, 4), dtype=np.uint8)
        if self.alpha.any():
            winner = self.raster.argmax(axis=2)
            confidence = self.raster.max(axis=2)
            rgba[..., :3] = base[winner]
            rgba[..., 3] = np.where(self.alpha, (confidence * 255).astype(np.uint8), 0)
        Image.fromarray(rgba[::-1], mode="RGBA").save(path)  # row 0 at bottom

    def save_sidecar(self, path):
        doc = {
            "origin_mm": list(self.origin),
            "cell_size_mm": self.cell_size,
            "width": int(self.raster.shape[1]),
            "height": int(self.raster.shape[0]),
            "class_names": list(self.class_names),
            "pattern": self.pattern.value,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")


def _normalize_rows(probs):
    probs = np.asarray(probs, dtype=float)
    totals = probs.sum(axis=-1, keepdims=True)
    return np.where(totals > 0, probs / np.where(totals > 0, totals, 1.0), probs)


def build_probability_map(
    sample_points,
    sample_probs,
    pattern: Pattern,
    class_names,
    provenance=None,
    cell_size=None,
    margin=None,
) -> ProbabilityMap:
    """Interpolate classified samples into a displayable raster.

    SPOKES: bilinear interpolation in (radius, angle) with angular wraparound,
    rasterized over the sampled disk. RASTER/POLYLINE: inverse-distance
    weighting (power 2) inside an influence radius of twice the sample
    spacing; cells beyond any influence stay transparent. Both schemes are
    convex combinations, so interpolated values never leave the sample range.
    """
    points = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    probs = _normalize_rows(np.asarray(sample_probs, dtype=float))
    if len(points) == 0:
        raise ScanError("no samples to interpolate")
    if len(points) != len(probs):
        raise ScanError("sample points and probabilities disagree in length")
    provenance = provenance or {}

    if len(points) > 1:
        diffs = points[:, None, :] - points[None, :, :]
        dist = np.sqrt((diffs**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        spacing = float(np.median(dist.min(axis=1)))
    else:
        spacing = 1.0
    cell = cell_size if cell_size is not None else spacing / 2.0
    pad = margin if margin is not None else 2.0 * spacing

    x0, y0 = points.min(axis=0) - pad
    x1, y1 = points.max(axis=0) + pad
    w = max(int(np.ceil((x1 - x0) / cell)), 1)
    h = max(int(np.ceil((y1 - y0) / cell)), 1)
    gx = x0 + (np.arange(w) + 0.5) * cell
    gy = y0 + (np.arange(h) + 0.5) * cell
    gxx, gyy = np.meshgrid(gx, gy)

    if pattern == Pattern.SPOKES and provenance.get("spoke_ring"):
        raster, alpha = _interp_polar(points, probs, provenance, gxx, gyy)
    else:
        raster, alpha = _interp_idw(points, probs, gxx, gyy, influence=2.0 * spacing)

    raster = _normalize_rows(raster)
    raster[~alpha] = 0.0
    return ProbabilityMap(
        sample_points=points,
        sample_probs=probs,
        class_names=tuple(class_names),
        raster=raster,
        alpha=alpha,
        origin=(float(x0), float(y0)),
        cell_size=float(cell),
        pattern=pattern,
    )


def _interp_idw(points, probs, gxx, gyy, influence, power=2.0, eps=1e-9):
    h, w = gxx.shape
    n, c = probs.shape
    raster = np.zeros((h, w, c))
    alpha = np.zeros((h, w), dtype=bool)
    d = np.sqrt(
        (gxx[..., None] - points[:, 0]) ** 2 + (gyy[..., None] - points[:, 1]) ** 2
    )  # (h, w, n)
    within = d <= influence
    weights = np.where(within, 1.0 / np.maximum(d, eps) ** power, 0.0)
    totals = weights.sum(axis=-1)
    alpha = totals > 0
    # exact hits take the sample value outright
    hit = d < eps
    hit_any = hit.any(axis=-1)
    with np.errstate(invalid="ignore"):
        raster = np.einsum("hwn,nc->hwc", weights, probs) / np.maximum(totals, 1e-300)[..., None]
    if hit_any.any():
        first_hit = hit.argmax(axis=-1)
        raster[hit_any] = probs[first_hit[hit_any]]
    raster[~alpha] = 0.0
    return raster, alpha


def _interp_polar(points, probs, provenance, gxx, gyy):
    """Bilinear interpolation on the (ring, spoke-angle) lattice."""
    center = np.asarray(provenance.get("center_stage_mm", points[0]), dtype=float)
    step = float(provenance["step_mm"])
    spoke_ring = provenance["spoke_ring"]
    n_spokes = int(provenance["n_spokes"])

    # table[ring][spoke] -> class probabilities; ring 0 is the centroid
    max_ring = max(r for _, r in spoke_ring)
    table = np.full((max_ring + 1, n_spokes, probs.shape[1]), np.nan)
    for (s_idx, ring), prob in zip(spoke_ring, probs):
        if ring == 0:
            table[0, :, :] = prob  # centroid value shared by every spoke
        else:
            table[ring, s_idx % n_spokes, :] = prob
    # spoke angles in the stage frame, from the actual sampled points
    angles = np.full(n_spokes, np.nan)
    for (s_idx, ring), p in zip(spoke_ring, points):
        if ring == 1:
            d = p - center
            angles[s_idx % n_spokes] = np.arctan2(d[1], d[0])
    if np.isnan(angles).any():
        raise ScanError("spoke plan lacks ring-1 samples for some spokes")
    order = np.argsort(angles)
    angles_sorted = angles[order]

    dx = gxx - center[0]
    dy = gyy - center[1]
    rr = np.hypot(dx, dy)
    tt = np.arctan2(dy, dx)

    h, w = gxx.shape
    c = probs.shape[1]
    raster = np.zeros((h, w, c))
    # per-spoke maximum sampled ring bounds the defined disk
    ring_count = np.zeros(n_spokes, dtype=int)
    for (s_idx, ring) in spoke_ring:
        if ring > 0:
            ring_count[s_idx % n_spokes] = max(ring_count[s_idx % n_spokes], ring)

    # angular bracket (wraparound) for every pixel
    idx_hi = np.searchsorted(angles_sorted, tt) % n_spokes
    idx_lo = (idx_hi - 1) % n_spokes
    a_lo = angles_sorted[idx_lo]
    a_hi = angles_sorted[idx_hi]
    span = (a_hi - a_lo) % (2.0 * np.pi)
    span = np.where(span < 1e-12, 2.0 * np.pi, span)
    frac_t = ((tt - a_lo) % (2.0 * np.pi)) / span

    spoke_lo = order[idx_lo]
    spoke_hi = order[idx_hi]

    ring_f = rr / step
    ring_lo = np.floor(ring_f).astype(int)
    frac_r = ring_f - ring_lo

    max_ring_pair = np.minimum(ring_count[spoke_lo], ring_count[spoke_hi])
    defined = ring_f <= max_ring_pair + 1e-9
    ring_lo_c = np.clip(ring_lo, 0, max_ring)
    ring_hi_c = np.clip(ring_lo + 1, 0, max_ring)

    v00 = table[ring_lo_c, spoke_lo]
    v01 = table[ring_lo_c, spoke_hi]
    v10 = table[ring_hi_c, spoke_lo]
    v11 = table[ring_hi_c, spoke_hi]
    fr = frac_r[..., None]
    ft = frac_t[..., None]
    interp = (
        v00 * (1 - fr) * (1 - ft)
        + v01 * (1 - fr) * ft
        + v10 * fr * (1 - ft)
        + v11 * fr * ft
    )
    # at the outermost ring the upper neighbor may be missing; clamp to lower
    missing_hi = np.isnan(v10).any(axis=-1) | np.isnan(v11).any(axis=-1)
    fallback = v00 * (1 - ft) + v01 * ft
    interp = np.where(missing_hi[..., None], fallback, interp)
    defined &= ~np.isnan(interp).any(axis=-1)
    raster[defined] = interp[defined]
    return raster, defined
