"""Virtual palpation test bench.

Emulates the 2-DOF stage pair, the lead-screw Z end effector with its force
sensor, two contact microphones, the RGB-D camera, and the concentric laser
probe. Everything runs against a virtual clock (simulation time advances with
commanded motion, never wall time), so identical seeds and command sequences
produce bit-identical records and frames.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .materials import Phantom

NS_PER_S = 1_000_000_000


class RigError(Exception):
    """Base class for simulator command failures."""


class TravelLimitError(RigError):
    """Commanded target outside the stage travel; carries a clamped suggestion."""

    def __init__(self, axis, value, lo, hi):
        self.axis = axis
        self.value = value
        self.clamped = min(max(value, lo), hi)
        super().__init__(
            f"{axis} target {value:.3f} mm outside travel [{lo:.3f}, {hi:.3f}] mm "
            f"(nearest reachable: {self.clamped:.3f})"
        )


class NoPhantomError(RigError):
    """Palpation attempted with no phantom cell under the tool."""


class ProjectionError(RigError):
    """Laser/tool projection falls outside the camera frame."""


@dataclass(frozen=True)
class StagePose:
    x: float
    y: float
    z: float


@dataclass
class PalpationRecord:
    """One probed point: pose, force-displacement series, and both mic clips."""

    pose: StagePose
    force_series: np.ndarray  # (n, 2) columns displacement mm, force N
    audio_left: np.ndarray  # int16 PCM
    audio_right: np.ndarray  # int16 PCM
    sample_rate: float
    t_start_ns: int
    t_end_ns: int
    material_name: str = ""

    @property
    def peak_force(self):
        return float(self.force_series[:, 1].max(initial=0.0))


@dataclass
class CameraFrame:
    rgb: np.ndarray  # (480, 640, 3) uint8
    depth: np.ndarray  # (480, 640) float64 mm, 0 = invalid
    intrinsics: "Intrinsics"
    timestamp_ns: int


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480

    def validate(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class SensorModel:
    """Corruption applied to the ideal sensors; every stage can be disabled."""

    force_noise_sd: float = 0.02  # N, Gaussian, 0 disables
    force_full_scale: float = 50.0  # N; also the ADC span
    adc_bits: int | None = 10  # None disables quantization
    lowpass_hz: float | None = 42.2  # None disables the analog filter model
    audio_noise_floor: float = 0.002  # full-scale fraction, 0 disables
    depth_noise_mm: float = 1.0  # uniform +/- bound on depth pixels, 0 disables

    @classmethod
    def ideal(cls, force_full_scale=50.0):
        """All corruption off: exact force model, clean audio, exact depth."""
        return cls(
            force_noise_sd=0.0,
            force_full_scale=force_full_scale,
            adc_bits=None,
            lowpass_hz=None,
            audio_noise_floor=0.0,
            depth_noise_mm=0.0,
        )


@dataclass(frozen=True)
class CameraConfig:
    """Statically mounted RGB-D camera, nadir view over the stage."""

    intrinsics: Intrinsics = Intrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0)
    position: tuple = (100.0, 100.0, 400.0)  # stage-frame mm
    yaw_deg: float = 25.0  # in-plane rotation about the optical axis
    scale: float = 1.0  # depth-unit scale of the camera->stage transform


@dataclass(frozen=True)
class RigConfig:
    travel_x: tuple = (0.0, 200.0)
    travel_y: tuple = (0.0, 200.0)
    travel_z: tuple = (0.0, 30.0)
    xy_speed: float = 25.0  # mm/s
    z_speed: float = 2.0  # mm/s, lead-screw descent speed
    displacement_step: float = 0.02  # mm between force samples
    approach_clearance: float = 1.0  # mm hover height before descent
    sample_rate: float = 44100.0
    pre_roll_s: float = 0.2
    post_roll_s: float = 0.2
    mic_positions: tuple = ((-20.0, 100.0), (220.0, 100.0))  # stage (x, y) mm
    mic_atten_ref_mm: float = 150.0
    audio_speed_ref: float = 2.0  # mm/s giving unit excitation gain
    audio_gain: float = 0.35
    hysteresis: float = 0.9  # unloading force multiplier
    sensors: SensorModel = SensorModel()
    camera: CameraConfig = CameraConfig()
    seed: int = 0

    def with_ideal_sensors(self):
        return replace(self, sensors=SensorModel.ideal(self.sensors.force_full_scale))


def _yaw_nadir_rotation(yaw_deg):
    """Rotation taking camera axes to stage axes for a straight-down camera.

    Camera convention: +x right, +y down, +z forward (into the scene). The
    camera looks along stage -z; yaw spins it about the optical axis.
    """
    c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
    rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    flip = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    return rz @ flip


class CameraModel:
    """Ground-truth pinhole camera fixed in the stage frame."""

    def __init__(self, config: CameraConfig):
        self.config = config
        self.intrinsics = config.intrinsics
        self.intrinsics.validate()
        self.rotation = _yaw_nadir_rotation(config.yaw_deg)  # camera -> stage
        self.translation = np.asarray(config.position, dtype=float)
        self.scale = float(config.scale)

    def ground_truth(self):
        """(s, R, t) of the camera->stage similarity transform."""
        return self.scale, self.rotation.copy(), self.translation.copy()

    def stage_to_camera(self, p_stage):
        p = np.asarray(p_stage, dtype=float)
        return (self.rotation.T @ (p - self.translation)) / self.scale

    def camera_to_stage(self, p_camera):
        p = np.asarray(p_camera, dtype=float)
        return self.scale * (self.rotation @ p) + self.translation

    def project_stage_point(self, p_stage):
        """Stage point -> (u, v, z_depth). Raises if behind or outside frame."""
        x, y, z = self.stage_to_camera(p_stage)
        if z <= 0:
            raise ProjectionError(f"point {tuple(p_stage)} is behind the camera")
        k = self.intrinsics
        u = k.cx + k.fx * x / z
        v = k.cy + k.fy * y / z
        if not (0.0 <= u < k.width and 0.0 <= v < k.height):
            raise ProjectionError(
                f"point {tuple(p_stage)} projects to ({u:.1f}, {v:.1f}), outside "
                f"the {k.width}x{k.height} frame"
            )
        return u, v, z

    def pixel_rays_stage(self):
        """Per-pixel ray origins/directions in the stage frame, vectorized."""
        k = self.intrinsics
        us = np.arange(k.width, dtype=float)
        vs = np.arange(k.height, dtype=float)
        uu, vv = np.meshgrid(us, vs)
        d_cam = np.stack(
            [(uu - k.cx) / k.fx, (vv - k.cy) / k.fy, np.ones_like(uu)], axis=-1
        )
        d_stage = d_cam @ self.rotation.T  # row-vector convention
        return self.translation, d_stage


@dataclass
class LaserDot:
    u: float
    v: float
    depth_mm: float


def _quantize(force, full_scale, bits):
    codes = (1 << bits) - 1
    q = np.clip(np.round(np.asarray(force) / full_scale * codes), 0, codes)
    return q * full_scale / codes


def _lowpass(samples, cutoff_hz, dt_s, state=None):
    """Single-pole IIR mimicking the instrumentation amplifier's RC stage.

    Returns (filtered, final_state) so a later segment can continue causally.
    """
    from scipy.signal import lfilter

    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        return samples, state
    alpha = 1.0 - np.exp(-2.0 * np.pi * cutoff_hz * dt_s)
    b, a = [alpha], [1.0, -(1.0 - alpha)]
    zi = np.array([(1.0 - alpha) * samples[0]]) if state is None else state
    out, zf = lfilter(b, a, samples, zi=zi)
    return out, zf


class RigSimulator:
    """Single mutable rig; commands are applied strictly in call order."""

    _K_CELL = 1
    _K_PALP = 2
    _K_FRAME = 3

    def __init__(self, phantom: Phantom, config: RigConfig = RigConfig()):
        phantom.validate(sample_rate=config.sample_rate)
        self.phantom = phantom
        self.config = config
        self.camera = CameraModel(config.camera)
        self.pose = StagePose(0.0, 0.0, 0.0)
        self.clock_ns = 0
        self.laser_on = False
        self._palp_count = 0
        self._frame_count = 0
        self._cell_stiffness = {}
        self._audio_capture = []

    # -- deterministic RNG streams ----------------------------------------

    def _rng(self, kind, *key):
        words = [self.config.seed & 0xFFFFFFFF, kind]
        for k in key:
            words.append(int(k) & 0xFFFFFFFF)
        return np.random.default_rng(np.random.SeedSequence(words))

    def cell_stiffness(self, iy, ix):
        """Stiffness of one phantom cell, drawn once and cached.

        The draw is keyed by (seed, cell), not by probe order, so repeated
        probing of one point is consistent, like a physical sample.
        """
        key = (int(iy), int(ix))
        if key not in self._cell_stiffness:
            mat = self.phantom.materials[self.phantom.grid[key]]
            rng = self._rng(self._K_CELL, iy, ix)
            k = mat.stiffness_mean + mat.stiffness_sd * rng.standard_normal()
            self._cell_stiffness[key] = max(k, 1e-6)
        return self._cell_stiffness[key]

    # -- motion ------------------------------------------------------------

    def _advance(self, seconds):
        self.clock_ns += int(round(seconds * NS_PER_S))

    def move_to(self, x, y):
        """Move the XY stages; advances the virtual clock by travel time."""
        for axis, value, lims in (("x", x, self.config.travel_x), ("y", y, self.config.travel_y)):
            if not (lims[0] <= value <= lims[1]):
                raise TravelLimitError(axis, value, *lims)
        dist = float(np.hypot(x - self.pose.x, y - self.pose.y))
        self._advance(dist / self.config.xy_speed)
        self.pose = replace(self.pose, x=float(x), y=float(y))
        return self.pose

    def move_z(self, z):
        """Jog the lead-screw Z carriage (not exposed over the wire protocol)."""
        lims = self.config.travel_z
        if not (lims[0] <= z <= lims[1]):
            raise TravelLimitError("z", z, *lims)
        self._advance(abs(z - self.pose.z) / self.config.z_speed)
        self.pose = replace(self.pose, z=float(z))
        return self.pose

    def home(self):
        self.move_to(0.0, 0.0)
        return self.move_z(0.0)

    # -- palpation ---------------------------------------------------------

    def palpate(self, max_depth, force_limit):
        """Descend into the phantom, recording force vs displacement and audio.

        Loading follows F(d) = k * max(0, d - d_contact) with k drawn per cell;
        unloading is scaled by the hysteresis factor. Descent stops at
        max_depth or at the (measured) force limit, whichever comes first.
        Audio covers the contact with pre/post roll on both microphones.
        """
        cfg = self.config
        if force_limit <= 0:
            raise RigError(f"force_limit must be positive, got {force_limit}")
        if max_depth < 0 or max_depth > cfg.travel_z[1]:
            raise RigError(
                f"max_depth {max_depth} mm outside [0, {cfg.travel_z[1]}] mm Z travel"
            )
        cell = self.phantom.cell_index(self.pose.x, self.pose.y)
        if cell is None:
            raise NoPhantomError(
                f"no phantom under tool at ({self.pose.x:.3f}, {self.pose.y:.3f})"
            )
        mat = self.phantom.materials[self.phantom.grid[cell]]
        k = self.cell_stiffness(*cell)
        rng = self._rng(self._K_PALP, self._palp_count)
        self._palp_count += 1

        ds = cfg.displacement_step
        dt = ds / cfg.z_speed
        sensors = cfg.sensors

        def measure(true_forces, noise, state):
            meas = true_forces + noise if noise is not None else true_forces
            if sensors.lowpass_hz is not None:
                meas, state = _lowpass(meas, sensors.lowpass_hz, dt, state)
            if sensors.adc_bits is not None:
                meas = _quantize(meas, sensors.force_full_scale, sensors.adc_bits)
            return np.maximum(meas, 0.0), state

        # loading ramp; the stop decision sees exactly the recorded samples
        n_steps = int(round(max_depth / ds))
        d_load = ds * np.arange(0, n_steps + 1)
        f_load = k * np.maximum(0.0, d_load - mat.contact_offset)
        noise_load = (
            sensors.force_noise_sd * rng.standard_normal(len(d_load))
            if sensors.force_noise_sd > 0
            else None
        )
        meas_load, _ = measure(f_load, noise_load, None)
        over = np.nonzero(meas_load >= force_limit)[0]
        stop = int(over[0]) if len(over) else len(d_load) - 1
        stop = max(stop, 0)
        d_load = d_load[: stop + 1]
        f_load = f_load[: stop + 1]
        noise_load = noise_load[: stop + 1] if noise_load is not None else None
        meas_load, filt_state = measure(f_load, noise_load, None)

        # unloading back to zero with hysteresis, continuing the filter state
        d_unload = d_load[::-1][1:]
        f_unload = cfg.hysteresis * k * np.maximum(0.0, d_unload - mat.contact_offset)
        noise_unload = (
            sensors.force_noise_sd * rng.standard_normal(len(d_unload))
            if sensors.force_noise_sd > 0
            else None
        )
        meas_unload, _ = measure(f_unload, noise_unload, filt_state)

        series = np.column_stack(
            [np.concatenate([d_load, d_unload]), np.concatenate([meas_load, meas_unload])]
        )

        reached_depth = float(d_load[-1])
        approach_t = cfg.approach_clearance / cfg.z_speed
        indent_t = reached_depth / cfg.z_speed
        duration = 2.0 * (approach_t + indent_t)

        t_start = self.clock_ns
        audio_l, audio_r = self._synthesize_audio(
            mat, rng, contact_time_s=approach_t, indent_s=indent_t, duration_s=duration
        )
        self._advance(duration)
        t_end = self.clock_ns

        record = PalpationRecord(
            pose=self.pose,
            force_series=series,
            audio_left=audio_l,
            audio_right=audio_r,
            sample_rate=cfg.sample_rate,
            t_start_ns=t_start,
            t_end_ns=t_end,
            material_name=mat.name,
        )
        self._audio_capture.append(record)
        return record

    def _synthesize_audio(self, mat, rng, contact_time_s, indent_s, duration_s):
        """Damped-sinusoid contact transient + noise floor, per microphone."""
        cfg = self.config
        sr = cfg.sample_rate
        n = int(round((cfg.pre_roll_s + duration_s + cfg.post_roll_s) * sr))
        t = np.arange(n) / sr
        tc = cfg.pre_roll_s + contact_time_s
        signal = np.zeros(n)
        if indent_s > 0:  # a zero-depth command never touches the surface
            speed_gain = cfg.z_speed / cfg.audio_speed_ref
            rel = t - tc
            live = rel >= 0
            for freq, damping, amp in mat.resonance_modes:
                signal[live] += (
                    cfg.audio_gain
                    * speed_gain
                    * amp
                    * np.exp(-damping * rel[live])
                    * np.sin(2.0 * np.pi * freq * rel[live])
                )
        clips = []
        for mic_xy in cfg.mic_positions:
            dist = float(np.hypot(self.pose.x - mic_xy[0], self.pose.y - mic_xy[1]))
            atten = 1.0 / (1.0 + dist / cfg.mic_atten_ref_mm)
            chan = signal * atten
            if cfg.sensors.audio_noise_floor > 0:
                chan = chan + cfg.sensors.audio_noise_floor * rng.standard_normal(n)
            pcm = np.clip(np.round(chan * 32767.0), -32768, 32767).astype(np.int16)
            clips.append(pcm)
        return clips[0], clips[1]

    def drain_audio(self):
        """Hand off records captured since the last drain (audio side channel)."""
        out = self._audio_capture
        self._audio_capture = []
        return out

    # -- camera ------------------------------------------------------------

    def render_frame(self):
        """Render the RGB-D view of the phantom (plus laser spot if lit).

        With depth noise disabled this is idempotent for a static scene: it
        does not advance the virtual clock.
        """
        cfg = self.config
        k = self.camera.intrinsics
        origin, dirs = self.camera.pixel_rays_stage()
        dz = dirs[..., 2]
        heights = self._heights_under_rays(origin, dirs, dz)
        valid = dz < 0
        depth = np.zeros((k.height, k.width))
        lam = np.where(valid, (heights - origin[2]) / np.where(valid, dz, 1.0), 0.0)
        # z-depth in the camera frame equals lambda for unit-z camera rays
        depth[valid] = lam[valid] / self.camera.scale

        px = origin[0] + lam * dirs[..., 0]
        py = origin[1] + lam * dirs[..., 1]
        rgb = self._material_colors(px, py)
        rgb[~valid] = 0

        if self.laser_on:
            dot = self._laser_projection()
            self._paint_laser(rgb, depth, dot)

        # sensor fluctuation applies to every reading, laser spot included
        if cfg.sensors.depth_noise_mm > 0:
            rng = self._rng(self._K_FRAME, self._frame_count)
            self._frame_count += 1
            noise = rng.uniform(-cfg.sensors.depth_noise_mm, cfg.sensors.depth_noise_mm, depth.shape)
            depth[valid] += noise[valid]

        return CameraFrame(
            rgb=rgb, depth=depth, intrinsics=k, timestamp_ns=self.clock_ns
        )

    def _heights_under_rays(self, origin, dirs, dz):
        """Surface height each ray lands on; two passes handle height steps."""
        heights = np.zeros(dz.shape)
        for _ in range(2):
            lam = np.where(dz < 0, (heights - origin[2]) / np.where(dz < 0, dz, 1.0), 0.0)
            px = origin[0] + lam * dirs[..., 0]
            py = origin[1] + lam * dirs[..., 1]
            heights = self._surface_heights(px, py)
        return heights

    def _surface_heights(self, px, py):
        ph = self.phantom
        ix = np.floor((px - ph.origin[0]) / ph.cell_size).astype(int)
        iy = np.floor((py - ph.origin[1]) / ph.cell_size).astype(int)
        ny, nx = ph.grid.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        mat_heights = np.array([m.surface_height for m in ph.materials])
        out = np.zeros(px.shape)
        out[inside] = mat_heights[ph.grid[iy[inside], ix[inside]]]
        return out

    def _material_colors(self, px, py):
        ph = self.phantom
        ix = np.floor((px - ph.origin[0]) / ph.cell_size).astype(int)
        iy = np.floor((py - ph.origin[1]) / ph.cell_size).astype(int)
        ny, nx = ph.grid.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        colors = np.array([m.color for m in ph.materials], dtype=np.uint8)
        rgb = np.full(px.shape + (3,), 30, dtype=np.uint8)  # stage table
        rgb[inside] = colors[ph.grid[iy[inside], ix[inside]]]
        return rgb

    def _laser_projection(self):
        p = (self.pose.x, self.pose.y, self.pose.z)
        u, v, z = self.camera.project_stage_point(p)
        return LaserDot(u=u, v=v, depth_mm=z)

    def _paint_laser(self, rgb, depth, dot, radius=4):
        """Gaussian green blob; depth under the spot reads the tool tip."""
        h, w = depth.shape
        u0, v0 = int(round(dot.u)), int(round(dot.v))
        ulo, uhi = max(0, u0 - radius), min(w, u0 + radius + 1)
        vlo, vhi = max(0, v0 - radius), min(h, v0 + radius + 1)
        uu, vv = np.meshgrid(np.arange(ulo, uhi), np.arange(vlo, vhi))
        g = np.exp(-(((uu - dot.u) ** 2 + (vv - dot.v) ** 2) / (2.0 * 1.2**2)))
        patch = rgb[vlo:vhi, ulo:uhi, :].astype(float)
        patch[..., 1] = np.minimum(255.0, patch[..., 1] + 255.0 * g)
        patch[..., 0] = np.minimum(255.0, patch[..., 0] + 60.0 * g)
        rgb[vlo:vhi, ulo:uhi, :] = patch.astype(np.uint8)
        spot = g > np.exp(-0.5 * (radius / 1.2) ** 2)
        depth[vlo:vhi, ulo:uhi][spot] = dot.depth_mm

    def sample_depth(self, u, v, laser_spot_radius=4):
        """Depth the camera reports at one pixel, without a full frame render.

        Same geometry and noise model as render_frame restricted to a single
        ray (each probe is its own observation, so it draws its own noise).
        """
        k = self.camera.intrinsics
        if not (0 <= u < k.width and 0 <= v < k.height):
            raise ProjectionError(f"pixel ({u}, {v}) outside the frame")
        cfg = self.config
        depth = None
        if self.laser_on:
            dot = self._laser_projection()
            if (u - dot.u) ** 2 + (v - dot.v) ** 2 <= laser_spot_radius**2:
                depth = dot.depth_mm
        if depth is None:
            d_cam = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
            d_stage = self.camera.rotation @ d_cam
            origin = self.camera.translation
            if d_stage[2] >= 0:
                return 0.0
            height = 0.0
            for _ in range(2):
                lam = (height - origin[2]) / d_stage[2]
                px, py = origin[0] + lam * d_stage[0], origin[1] + lam * d_stage[1]
                h = self.phantom.surface_height_at(px, py)
                height = h if h is not None else 0.0
            depth = (height - origin[2]) / d_stage[2] / self.camera.scale
        if cfg.sensors.depth_noise_mm > 0:
            rng = self._rng(self._K_FRAME, self._frame_count)
            self._frame_count += 1
            depth += float(rng.uniform(-cfg.sensors.depth_noise_mm, cfg.sensors.depth_noise_mm))
        return depth

    def project_laser(self):
        """Turn the laser on and return the bright-spot pixel + its depth.

        The spot is the camera projection of the tool tip through the
        ground-truth extrinsics; it is painted into subsequently rendered
        frames until laser_off().
        """
        dot = self._laser_projection()
        self.laser_on = True
        return dot

    def laser_off(self):
        self.laser_on = False


# -- frame export ----------------------------------------------------------


def save_frame_png(frame: CameraFrame, path):
    from PIL import Image

    Image.fromarray(frame.rgb, mode="RGB").save(path)


def save_depth_pgm(frame: CameraFrame, path):
    """16-bit binary PGM, one gray level per mm (rounded)."""
    depth = np.clip(np.round(frame.depth), 0, 65535).astype(">u2")
    header = f"P5\n{depth.shape[1]} {depth.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(depth.tobytes())


def record_checksum(record: PalpationRecord):
    """Stable checksum over the numeric payload of a record."""
    h = zlib.crc32(record.force_series.tobytes())
    h = zlib.crc32(record.audio_left.tobytes(), h)
    h = zlib.crc32(record.audio_right.tobytes(), h)
    h = zlib.crc32(struct.pack("<ddd", record.pose.x, record.pose.y, record.pose.z), h)
    return h
