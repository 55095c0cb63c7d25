"""Independent reference implementations used to freeze expected values.

These deliberately avoid the library's code paths: DFTs are naive O(n^2)
sums, the filterbank triangles and DCT are written out term by term.
"""

import numpy as np


def naive_dft_magnitude(frame):
    """|DFT| of one frame over the rfft bin range, by direct summation."""
    n = len(frame)
    t = np.arange(n)
    out = np.empty(n // 2 + 1)
    for k in range(n // 2 + 1):
        out[k] = np.abs(np.sum(frame * np.exp(-2j * np.pi * k * t / n)))
    return out


def analytic_mel_weights(n_mel, frame_length, sample_rate, fmin, fmax):
    """Triangle weights written from the mel-corner definition."""
    freqs = np.arange(frame_length // 2 + 1) * sample_rate / frame_length

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    corners = [
        from_mel(to_mel(fmin) + i * (to_mel(fmax) - to_mel(fmin)) / (n_mel + 1))
        for i in range(n_mel + 2)
    ]
    weights = np.zeros((n_mel, len(freqs)))
    for m in range(n_mel):
        lo, center, hi = corners[m], corners[m + 1], corners[m + 2]
        for j, f in enumerate(freqs):
            if lo < f <= center:
                weights[m, j] = (f - lo) / (center - lo)
            elif center < f < hi:
                weights[m, j] = (hi - f) / (hi - center)
            elif f == lo == center:  # degenerate, not hit with sane configs
                weights[m, j] = 1.0
    return weights


def explicit_dct2_ortho(x):
    """Orthonormal DCT-II by direct cosine summation."""
    n = len(x)
    out = np.empty(n)
    for k in range(n):
        acc = 0.0
        for i in range(n):
            acc += x[i] * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
        scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        out[k] = scale * acc
    return out


def oracle_mfcc_per_frame(audio, cfg):
    """Reference MFCC matrix computed without FFT shortcuts.

    Mirrors the published definition (pre-emphasis, Hamming frames, magnitude
    spectrum, mel triangles, floored log, DCT-II) with naive arithmetic.
    """
    x = np.asarray(audio, dtype=float)
    if x.dtype == np.int16:
        x = x / 32768.0
    if cfg.pre_emphasis > 0:
        x = np.concatenate(([x[0]], x[1:] - cfg.pre_emphasis * x[:-1]))
    n = cfg.frame_length
    window = np.array(
        [0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1)) for i in range(n)]
    )
    n_frames = 1 + (len(x) - n) // cfg.hop
    fb = analytic_mel_weights(cfg.n_mel, n, cfg.sample_rate, cfg.fmin, cfg.fmax_hz)
    rows = []
    for f_idx in range(n_frames):
        frame = x[f_idx * cfg.hop : f_idx * cfg.hop + n] * window
        mag = naive_dft_magnitude(frame)
        energies = fb @ mag
        log_e = np.log(np.maximum(energies, cfg.log_floor))
        cep = explicit_dct2_ortho(log_e)
        rows.append(cep[1 : cfg.n_coeff + 1])
    return np.array(rows)


def windowed_energy(audio, frame_length, hop):
    """Sum of squared Hamming-windowed samples over all full frames."""
    x = np.asarray(audio, dtype=float)
    if x.dtype == np.int16:
        x = x / 32768.0
    n = frame_length
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    n_frames = 1 + (len(x) - n) // hop
    total = 0.0
    for i in range(n_frames):
        frame = x[i * hop : i * hop + n] * window
        total += float(np.sum(frame**2))
    return total
