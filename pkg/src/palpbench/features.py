"""Per-palpation feature extraction.

Force channel: stiffness (loading-fit slope), indenter displacement past
contact, and smoothness (normalized RMS residual of the linear loading fit).
Audio channels: 12 mel-frequency cepstral coefficients per microphone,
aggregated over frames by mean. Spectrograms are computed for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

CONTACT_THRESHOLD_N = 0.05
FIT_WINDOW = (0.10, 0.90)  # fraction of peak force used for the loading fit

FORCE_FEATURE_NAMES = ("stiffness_n_per_mm", "max_displacement_mm", "smoothness")


class FeatureError(ValueError):
    pass


class TooFewPointsError(FeatureError):
    pass


class NonMonotonicError(FeatureError):
    pass


@dataclass(frozen=True)
class ForceFeatures:
    stiffness: float  # N/mm
    max_displacement: float  # mm past contact
    smoothness: float  # dimensionless

    def as_array(self):
        return np.array([self.stiffness, self.max_displacement, self.smoothness])


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: float = 44100.0
    frame_length: int = 1024
    hop: int = 512
    n_mel: int = 26
    n_coeff: int = 12
    pre_emphasis: float = 0.97
    fmin: float = 20.0
    fmax: float | None = None  # None -> Nyquist
    log_floor: float = 1e-10

    def __post_init__(self):
        if not (0 < self.n_coeff <= self.n_mel <= self.frame_length // 2):
            raise FeatureError(
                f"need 0 < n_coeff ({self.n_coeff}) <= n_mel ({self.n_mel}) "
                f"<= frame_length/2 ({self.frame_length // 2})"
            )
        if self.hop > self.frame_length or self.hop < 1:
            raise FeatureError("hop must be in [1, frame_length]")

    @property
    def fmax_hz(self):
        return self.sample_rate / 2.0 if self.fmax is None else self.fmax


@dataclass
class MfccVector:
    coeffs: np.ndarray  # (n_coeff,) per-recording aggregate (frame mean)
    per_frame: np.ndarray  # (frames, n_coeff)

    def __post_init__(self):
        if not np.all(np.isfinite(self.per_frame)):
            raise FeatureError("non-finite MFCC entries")


@dataclass
class Spectrogram:
    magnitudes_db: np.ndarray  # (frames, bins), dB re max
    times_s: np.ndarray
    freqs_hz: np.ndarray
    magnitudes: np.ndarray = field(repr=False, default=None)  # linear, for checks


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mel, frame_length, sample_rate, fmin, fmax):
    """Triangular filters on the HTK mel scale, sampled at FFT bin frequencies.

    Each filter is the analytic triangle with corners at adjacent mel-spaced
    points, peak weight 1, evaluated at bin centers k * sr / N.
    """
    freqs = np.arange(frame_length // 2 + 1) * sample_rate / frame_length
    corners = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mel + 2))
    fb = np.zeros((n_mel, len(freqs)))
    for m in range(n_mel):
        lo, center, hi = corners[m], corners[m + 1], corners[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def _as_float_audio(audio):
    audio = np.asarray(audio)
    if audio.dtype == np.int16:
        return audio.astype(float) / 32768.0
    return audio.astype(float)


def frame_signal(x, frame_length, hop):
    """Full frames only; raises when the signal is shorter than one frame."""
    n = len(x)
    if n < frame_length:
        raise TooFewPointsError(
            f"audio of {n} samples is shorter than one frame ({frame_length})"
        )
    n_frames = 1 + (n - frame_length) // hop
    idx = np.arange(frame_length)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def hamming(n):
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


def mfcc(audio, cfg: MfccConfig = MfccConfig()) -> MfccVector:
    """MFCCs of one recording.

    Pipeline: pre-emphasis, Hamming-windowed frames, magnitude FFT, mel
    filterbank, floored log, orthonormal DCT-II. Coefficients 1..n_coeff are
    kept (the 0th term carries overall gain and is excluded); the aggregate
    is the per-frame mean.
    """
    x = _as_float_audio(audio)
    if cfg.pre_emphasis > 0:
        x = np.concatenate(([x[0]], x[1:] - cfg.pre_emphasis * x[:-1]))
    frames = frame_signal(x, cfg.frame_length, cfg.hop) * hamming(cfg.frame_length)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    fb = mel_filterbank(cfg.n_mel, cfg.frame_length, cfg.sample_rate, cfg.fmin, cfg.fmax_hz)
    energies = mags @ fb.T
    log_e = np.log(np.maximum(energies, cfg.log_floor))
    cepstra = scipy.fft.dct(log_e, type=2, norm="ortho", axis=1)
    per_frame = cepstra[:, 1 : cfg.n_coeff + 1]
    return MfccVector(coeffs=per_frame.mean(axis=0), per_frame=per_frame)


def spectrogram(audio, frame_length=1024, hop=512, sample_rate=44100.0) -> Spectrogram:
    """STFT magnitude in dB re max, Hamming window, floored at -120 dB."""
    x = _as_float_audio(audio)
    frames = frame_signal(x, frame_length, hop) * hamming(frame_length)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    ref = mags.max()
    if ref <= 0:
        db = np.full(mags.shape, -120.0)
    else:
        db = 20.0 * np.log10(np.maximum(mags / ref, 1e-6))
    times = (np.arange(len(frames)) * hop + frame_length / 2.0) / sample_rate
    freqs = np.arange(frame_length // 2 + 1) * sample_rate / frame_length
    return Spectrogram(magnitudes_db=db, times_s=times, freqs_hz=freqs, magnitudes=mags)


def _loading_segment(force_series):
    series = np.asarray(force_series, dtype=float)
    if series.ndim != 2 or series.shape[1] != 2 or len(series) == 0:
        raise FeatureError("force series must be a nonempty (n, 2) array")
    d = series[:, 0]
    peak = int(np.argmax(d))
    load = series[: peak + 1]
    if len(load) > 1 and not np.all(np.diff(load[:, 0]) > 0):
        raise NonMonotonicError("loading displacement is not strictly increasing")
    return load


def _loading_fit(force_series, contact_threshold=CONTACT_THRESHOLD_N):
    """OLS line over the loading segment between 10% and 90% of peak force."""
    load = _loading_segment(force_series)
    d, f = load[:, 0], load[:, 1]
    above = f > contact_threshold
    if above.sum() < 5:
        raise TooFewPointsError(
            f"only {int(above.sum())} loading points above {contact_threshold} N (need 5)"
        )
    peak_force = f.max()
    lo, hi = FIT_WINDOW[0] * peak_force, FIT_WINDOW[1] * peak_force
    window = (f >= lo) & (f <= hi)
    if window.sum() < 2:
        raise TooFewPointsError("fewer than 2 points in the 10-90% fit window")
    slope, intercept = np.polyfit(d[window], f[window], 1)
    residuals = f[window] - (slope * d[window] + intercept)
    return slope, intercept, residuals, peak_force, d, f


def estimate_stiffness(force_series, contact_threshold=CONTACT_THRESHOLD_N):
    """Loading-curve slope in N/mm."""
    slope, *_ = _loading_fit(force_series, contact_threshold)
    return float(slope)


def force_features(force_series, contact_threshold=CONTACT_THRESHOLD_N) -> ForceFeatures:
    """Stiffness, displacement past contact, and normalized fit residual."""
    slope, intercept, residuals, peak_force, d, f = _loading_fit(
        force_series, contact_threshold
    )
    # contact point = x-intercept of the loading fit
    d_contact = -intercept / slope if slope != 0 else d[0]
    max_disp = max(float(d.max() - d_contact), 0.0)
    rms = float(np.sqrt(np.mean(residuals**2)))
    smoothness = rms / peak_force if peak_force > 0 else 0.0
    return ForceFeatures(
        stiffness=float(slope), max_displacement=max_disp, smoothness=smoothness
    )


SENSORS = ("force", "mic_left", "mic_right")


@dataclass(frozen=True)
class FeatureVector:
    """Fused per-palpation features in the fixed order [force | left | right]."""

    values: np.ndarray
    names: tuple
    sensor_mask: tuple

    def __len__(self):
        return len(self.values)


def feature_names(mask=SENSORS, n_coeff=12):
    names = []
    if "force" in mask:
        names.extend(FORCE_FEATURE_NAMES)
    if "mic_left" in mask:
        names.extend(f"mfcc_l_{i:02d}" for i in range(1, n_coeff + 1))
    if "mic_right" in mask:
        names.extend(f"mfcc_r_{i:02d}" for i in range(1, n_coeff + 1))
    return tuple(names)


def fuse(force: ForceFeatures | None, mic_left: MfccVector | None,
         mic_right: MfccVector | None, mask=SENSORS) -> FeatureVector:
    """Concatenate the requested sensors in fixed order."""
    mask = tuple(s for s in SENSORS if s in mask)  # canonical ordering
    if not mask:
        raise FeatureError("sensor mask must name at least one sensor")
    parts = []
    provided = {"force": force, "mic_left": mic_left, "mic_right": mic_right}
    for sensor in mask:
        if provided[sensor] is None:
            raise FeatureError(f"sensor {sensor!r} requested but not provided")
        if sensor == "force":
            parts.append(provided[sensor].as_array())
        else:
            parts.append(np.asarray(provided[sensor].coeffs, dtype=float))
    values = np.concatenate(parts)
    return FeatureVector(values=values, names=feature_names(mask), sensor_mask=mask)


def extract_features(record, mfcc_cfg: MfccConfig | None = None, mask=SENSORS) -> FeatureVector:
    """Full fused vector for one PalpationRecord."""
    cfg = mfcc_cfg or MfccConfig(sample_rate=record.sample_rate)
    ff = force_features(record.force_series) if "force" in mask else None
    ml = mfcc(record.audio_left, cfg) if "mic_left" in mask else None
    mr = mfcc(record.audio_right, cfg) if "mic_right" in mask else None
    return fuse(ff, ml, mr, mask=mask)
