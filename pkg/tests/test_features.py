import numpy as np
import pytest

from palpbench.features import (
    FeatureError,
    MfccConfig,
    NonMonotonicError,
    TooFewPointsError,
    estimate_stiffness,
    extract_features,
    feature_names,
    force_features,
    fuse,
    mfcc,
    spectrogram,
)
from palpbench.materials import table_material, uniform_phantom
from palpbench.rig import RigConfig, RigSimulator

from oracles import oracle_mfcc_per_frame, windowed_energy


def ramp_series(k, depth=2.0, step=0.02, offset=0.0, hysteresis=0.9):
    d_load = np.arange(0.0, depth + step / 2, step)
    f_load = k * np.maximum(0.0, d_load - offset)
    d_un = d_load[::-1][1:]
    f_un = hysteresis * k * np.maximum(0.0, d_un - offset)
    return np.column_stack(
        [np.concatenate([d_load, d_un]), np.concatenate([f_load, f_un])]
    )


class TestStiffness:
    def test_noiseless_ramp_exact(self):
        series = ramp_series(23.7667)
        assert estimate_stiffness(series) == pytest.approx(23.7667, abs=1e-9)

    def test_offset_invariance(self):
        base = estimate_stiffness(ramp_series(23.7667))
        shifted = estimate_stiffness(ramp_series(23.7667, depth=2.3, offset=0.3))
        assert shifted == pytest.approx(base, abs=1e-9)

    def test_force_scaling_equivariance(self):
        series = ramp_series(10.0)
        for gain in (0.5, 2.0, 7.0):
            scaled = series.copy()
            scaled[:, 1] *= gain
            assert estimate_stiffness(scaled) == pytest.approx(10.0 * gain, rel=1e-9)

    def test_too_few_points(self):
        series = np.array([[0.0, 0.0], [0.01, 0.02], [0.02, 0.04]])
        with pytest.raises(TooFewPointsError):
            estimate_stiffness(series)

    def test_non_monotonic_loading(self):
        series = ramp_series(10.0)
        series[3, 0], series[4, 0] = series[4, 0], series[3, 0]
        with pytest.raises(NonMonotonicError):
            estimate_stiffness(series)

    def test_simulated_porcine_population(self):
        # 100 noisy palpations: mean near the tabulated 0.3286, SD same order
        phantom = uniform_phantom(table_material("porcine"), nx=10, ny=10, origin=(95.0, 95.0))
        sim = RigSimulator(phantom, RigConfig(seed=5))
        estimates = []
        for iy in range(10):
            for ix in range(10):
                sim.move_to(95.5 + ix, 95.5 + iy)
                rec = sim.palpate(max_depth=5.0, force_limit=45.0)
                estimates.append(estimate_stiffness(rec.force_series))
        estimates = np.asarray(estimates)
        assert abs(estimates.mean() - 0.3286) < 0.05
        assert 0.01 <= estimates.std(ddof=1) <= 0.08


class TestForceFeatures:
    def test_perfect_ramp_zero_smoothness(self):
        ff = force_features(ramp_series(10.0))
        assert ff.smoothness == pytest.approx(0.0, abs=1e-12)
        assert ff.max_displacement == pytest.approx(2.0, abs=1e-9)

    def test_ripple_smoothness_matches_analytic_rms(self):
        k, depth, step = 20.0, 2.0, 0.001
        d = np.arange(0.0, depth + step / 2, step)
        a = 0.05
        cycles_per_mm = 25.0
        f = k * d + a * np.sin(2.0 * np.pi * cycles_per_mm * d)
        series = np.column_stack(
            [np.concatenate([d, d[::-1][1:]]), np.concatenate([f, 0.9 * f[::-1][1:]])]
        )
        ff = force_features(series)
        expected = (a / np.sqrt(2.0)) / f.max()
        assert ff.smoothness == pytest.approx(expected, rel=0.02)

    def test_force_limited_record_displacement(self):
        phantom = uniform_phantom(
            table_material("pla15", stiffness_sd=0.0, contact_offset=0.0),
            nx=10, ny=10, origin=(95.0, 95.0),
        )
        sim = RigSimulator(phantom, RigConfig(seed=1).with_ideal_sensors())
        sim.move_to(100.0, 100.0)
        rec = sim.palpate(max_depth=2.0, force_limit=30.0)
        ff = force_features(rec.force_series)
        assert ff.max_displacement < 2.0


def tone(freq, seconds=0.2, sr=44100.0, amp=0.5):
    t = np.arange(int(seconds * sr)) / sr
    return amp * np.sin(2.0 * np.pi * freq * t)


class TestMfcc:
    def test_silence_gives_zero_coefficients(self):
        cfg = MfccConfig()
        vec = mfcc(np.zeros(4096), cfg)
        assert np.allclose(vec.coeffs, 0.0, atol=1e-12)

    def test_tone_matches_direct_dft_oracle(self):
        cfg = MfccConfig()
        audio = tone(1000.0, seconds=0.1)
        got = mfcc(audio, cfg).per_frame
        want = oracle_mfcc_per_frame(audio, cfg)
        assert got.shape == want.shape
        assert np.abs(got - want).max() < 1e-6

    def test_multitone_matches_oracle(self):
        cfg = MfccConfig()
        audio = tone(700.0, 0.06) + 0.4 * tone(2400.0, 0.06) + 0.1 * tone(5100.0, 0.06)
        got = mfcc(audio, cfg).per_frame
        want = oracle_mfcc_per_frame(audio, cfg)
        assert np.abs(got - want).max() < 1e-6

    def test_gain_invariance_of_kept_coefficients(self):
        cfg = MfccConfig()
        audio = tone(1000.0)
        a = mfcc(audio, cfg).coeffs
        b = mfcc(10.0 * audio, cfg).coeffs
        assert np.abs(a - b).max() < 1e-6

    def test_aggregate_is_per_frame_mean(self):
        rng = np.random.default_rng(0)
        vec = mfcc(rng.normal(0, 0.1, 8192), MfccConfig())
        assert np.array_equal(vec.coeffs, vec.per_frame.mean(axis=0))

    def test_short_audio_rejected(self):
        with pytest.raises(TooFewPointsError):
            mfcc(np.zeros(100), MfccConfig())

    def test_int16_and_float_agree(self):
        cfg = MfccConfig()
        x = tone(800.0, 0.05, amp=0.4)
        pcm = np.round(x * 32768.0).astype(np.int16)
        a = mfcc(pcm, cfg).coeffs
        b = mfcc(pcm.astype(float) / 32768.0, cfg).coeffs
        assert np.allclose(a, b)

    def test_bad_config_rejected(self):
        with pytest.raises(FeatureError):
            MfccConfig(n_coeff=30, n_mel=26)


class TestSpectrogram:
    def test_tone_peaks_at_tone_frequency(self):
        sr = 44100.0
        spec = spectrogram(tone(1000.0, 0.1, sr), 1024, 512, sr)
        peak_bins = spec.magnitudes_db.argmax(axis=1)
        peak_freqs = spec.freqs_hz[peak_bins]
        bin_width = sr / 1024
        assert np.all(np.abs(peak_freqs - 1000.0) <= bin_width)

    def test_silence_uniform_floor(self):
        spec = spectrogram(np.zeros(4096))
        assert np.all(spec.magnitudes_db == spec.magnitudes_db[0, 0])

    def test_damped_two_mode_burst_shows_both_ridges(self):
        from palpbench.materials import MaterialSpec

        mat = MaterialSpec(
            name="two-mode", stiffness_mean=10.0, stiffness_sd=0.0,
            resonance_modes=((700.0, 25.0, 1.0), (2200.0, 30.0, 0.8)),
        )
        phantom = uniform_phantom(mat, nx=10, ny=10, origin=(95.0, 95.0))
        sim = RigSimulator(phantom, RigConfig(seed=2).with_ideal_sensors())
        sim.move_to(100.0, 100.0)
        rec = sim.palpate(max_depth=2.0, force_limit=45.0)
        spec = spectrogram(rec.audio_left, 1024, 512, rec.sample_rate)
        contact_frame = int(
            (sim.config.pre_roll_s + sim.config.approach_clearance / sim.config.z_speed)
            * rec.sample_rate / 512
        ) + 1
        row = spec.magnitudes_db[contact_frame].copy()
        bin_width = rec.sample_rate / 1024
        # the two dominant peaks sit on the two configured modes
        first = int(np.argmax(row))
        row_masked = row.copy()
        lo, hi = max(0, first - 10), first + 11
        row_masked[lo:hi] = -np.inf
        second = int(np.argmax(row_masked))
        found = sorted([spec.freqs_hz[first], spec.freqs_hz[second]])
        for got, mode_hz in zip(found, (700.0, 2200.0)):
            assert abs(got - mode_hz) <= 2 * bin_width

    def test_parseval_energy_match(self):
        rng = np.random.default_rng(3)
        audio = rng.normal(0.0, 0.2, 6000)
        spec = spectrogram(audio, 1024, 512)
        mags = spec.magnitudes
        n = 1024
        # rfft bins: double all but DC and Nyquist
        spectral = mags[:, 0] ** 2 + mags[:, -1] ** 2 + 2.0 * (mags[:, 1:-1] ** 2).sum(axis=1)
        total_spectral = spectral.sum() / n
        total_signal = windowed_energy(audio, 1024, 512)
        assert total_spectral == pytest.approx(total_signal, rel=1e-6)


class TestFuse:
    def make_parts(self):
        ff = force_features(ramp_series(10.0))
        cfg = MfccConfig()
        left = mfcc(tone(500.0, 0.1), cfg)
        right = mfcc(tone(900.0, 0.1), cfg)
        return ff, left, right

    def test_all_sensors_27_dims(self):
        ff, l, r = self.make_parts()
        vec = fuse(ff, l, r)
        assert len(vec) == 27
        assert vec.names == feature_names()
        assert vec.names[0] == "stiffness_n_per_mm"
        assert vec.names[3] == "mfcc_l_01"
        assert vec.names[15] == "mfcc_r_01"

    def test_force_only_3_dims(self):
        ff, l, r = self.make_parts()
        vec = fuse(ff, None, None, mask=("force",))
        assert len(vec) == 3

    def test_left_mic_only_12_dims(self):
        ff, l, r = self.make_parts()
        vec = fuse(None, l, None, mask=("mic_left",))
        assert len(vec) == 12

    def test_empty_mask_rejected(self):
        ff, l, r = self.make_parts()
        with pytest.raises(FeatureError, match="mask"):
            fuse(ff, l, r, mask=())

    def test_missing_requested_sensor(self):
        ff, l, r = self.make_parts()
        with pytest.raises(FeatureError, match="not provided"):
            fuse(ff, None, r, mask=("force", "mic_left"))

    def test_byte_identical_stability(self):
        ff, l, r = self.make_parts()
        a = fuse(ff, l, r)
        b = fuse(ff, l, r)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.names == b.names

    def test_extract_features_from_record(self):
        phantom = uniform_phantom(table_material("tpu"), nx=10, ny=10, origin=(95.0, 95.0))
        sim = RigSimulator(phantom, RigConfig(seed=4))
        sim.move_to(100.0, 100.0)
        rec = sim.palpate(max_depth=2.0, force_limit=45.0)
        vec = extract_features(rec)
        assert len(vec) == 27
        assert np.all(np.isfinite(vec.values))
