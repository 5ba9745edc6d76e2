import numpy as np
import pytest

from neosda import features as feats
from neosda.errors import DataError

FS = 64.0
N = 1024  # one 16 s epoch


def pink_epoch(seed=0, rms=25.0):
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(N)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(N, 1 / FS)
    freqs[0] = freqs[1]
    x = np.fft.irfft(spectrum / np.sqrt(freqs), N)
    return x / np.std(x) * rms


def col(name):
    return feats.COLUMNS.index(name)


class TestSneo:
    def test_constant_signal_zero(self):
        assert feats.sneo(np.full(N, 3.7), FS) == 0.0

    def test_sinusoid_analytic_identity(self):
        # psi[n] = A^2 sin^2(omega) for every n, so the smoothed mean equals it
        a, f = 4.0, 3.0
        omega = 2 * np.pi * f / FS
        n = np.arange(N)
        x = a * np.sin(omega * n + 0.3)
        expect = a**2 * np.sin(omega) ** 2
        assert feats.sneo(x, FS) == pytest.approx(expect, rel=1e-9)

    def test_white_noise_monte_carlo(self):
        # E[psi] = sigma^2 for white noise; check the Monte-Carlo mean
        sigma = 5.0
        rng = np.random.default_rng(42)
        trials = np.array(
            [feats.sneo(rng.normal(0, sigma, N), FS) for _ in range(200)]
        )
        se = trials.std(ddof=1) / np.sqrt(len(trials))
        assert abs(trials.mean() - sigma**2) < 3 * se

    def test_too_short_rejected(self):
        with pytest.raises(DataError, match="3 samples"):
            feats.sneo(np.array([1.0, 2.0]), FS)


class TestExtractFeatures:
    def test_zero_signal_sentinels(self):
        v = feats.extract_features(np.zeros(N), FS)
        assert v[col("rms")] == 0
        assert v[col("line_length")] == 0
        assert v[col("zero_crossings")] == 0
        assert v[col("peak_freq_hz")] == 0
        assert v[col("spectral_entropy")] == 0
        assert v[col("max_amp")] == 0
        assert np.all(np.isfinite(v))

    def test_one_hz_sinusoid(self):
        n = np.arange(N)
        x = np.sin(2 * np.pi * 1.0 * n / FS)
        v = feats.extract_features(x, FS)
        assert v[col("zero_crossings")] == 32
        assert abs(v[col("peak_freq_hz")] - 1.0) <= 0.25  # one PSD bin
        assert v[col("rel_power_delta")] > 0.95

    def test_nonfinite_rejected(self):
        x = np.zeros(N)
        x[10] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            feats.extract_features(x, FS)

    def test_deterministic_bit_identical(self):
        x = pink_epoch(7)
        v1 = feats.extract_features(x, FS)
        v2 = feats.extract_features(x.copy(), FS)
        assert np.array_equal(v1, v2)
        assert np.all(np.isfinite(v1))

    def test_amplitude_scaling_laws(self):
        x = pink_epoch(3)
        c = 3.5
        v1 = feats.extract_features(x, FS)
        v2 = feats.extract_features(c * x, FS)
        for name in ("rms", "peak_to_peak", "line_length", "max_amp"):
            assert v2[col(name)] == pytest.approx(c * v1[col(name)], rel=1e-9)
        assert v2[col("sneo_mean")] == pytest.approx(
            c**2 * v1[col("sneo_mean")], rel=1e-9
        )
        assert v2[col("sneo_var")] == pytest.approx(
            c**4 * v1[col("sneo_var")], rel=1e-9
        )
        assert v2[col("hjorth_activity")] == pytest.approx(
            c**2 * v1[col("hjorth_activity")], rel=1e-9
        )
        for name in (
            "zero_crossings",
            "local_extrema",
            "sef90_hz",
            "sef95_hz",
            "rel_power_delta",
            "rel_power_theta",
            "rel_power_alpha",
            "spectral_entropy",
            "hjorth_mobility",
        ):
            assert v2[col(name)] == pytest.approx(v1[col(name)], rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_time_reversal_invariance(self, seed):
        x = pink_epoch(seed)
        v1 = feats.extract_features(x, FS)
        v2 = feats.extract_features(x[::-1], FS)
        np.testing.assert_allclose(v1, v2, rtol=1e-9, atol=1e-9)

    def test_relative_band_powers_partition_total(self):
        for seed in range(5):
            x = pink_epoch(seed)
            powers = feats.band_powers(x, FS)
            parts = powers["delta"] + powers["theta"] + powers["alpha"] + powers["beta"]
            assert parts == pytest.approx(powers["total"], rel=1e-6)
            v = feats.extract_features(x, FS)
            rel_sum = (
                v[col("rel_power_delta")]
                + v[col("rel_power_theta")]
                + v[col("rel_power_alpha")]
            )
            assert 0 < rel_sum <= 1 + 1e-9


class TestNormalization:
    def test_training_data_zscored(self, rng):
        values = rng.normal(5, 3, (100, len(feats.COLUMNS)))
        values[:, -1] = np.abs(values[:, -1])
        stats = feats.compute_stats(values)
        out = feats.normalize_values(values, stats)
        np.testing.assert_allclose(out[:, : feats.N_FEATURES].mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(out[:, : feats.N_FEATURES].std(axis=0), 1, atol=1e-9)

    def test_max_amp_untouched(self, rng):
        values = rng.normal(5, 3, (50, len(feats.COLUMNS)))
        stats = feats.compute_stats(values)
        out = feats.normalize_values(values, stats)
        np.testing.assert_array_equal(out[:, -1], values[:, -1])

    def test_constant_column_equals_mean_maps_to_zero(self, rng):
        values = rng.normal(0, 2, (50, len(feats.COLUMNS)))
        stats = feats.compute_stats(values)
        probe = np.concatenate([stats.mean, [123.0]])[None, :]
        out = feats.normalize_values(probe, stats)
        np.testing.assert_allclose(out[0, : feats.N_FEATURES], 0, atol=1e-12)

    def test_roundtrip_stats_from_other_set(self, rng):
        a = rng.normal(2, 4, (80, len(feats.COLUMNS)))
        b = rng.normal(-1, 2, (40, len(feats.COLUMNS)))
        stats = feats.compute_stats(a)
        back = feats.denormalize_values(feats.normalize_values(b, stats), stats)
        np.testing.assert_allclose(back, b, rtol=1e-12, atol=1e-9)

    def test_zero_sd_names_feature(self, rng):
        values = rng.normal(0, 1, (30, len(feats.COLUMNS)))
        values[:, 2] = 7.0
        with pytest.raises(DataError, match="line_length"):
            feats.compute_stats(values)


class TestFeatureMatrix:
    def test_grid_indexing(self, rng):
        segs = rng.normal(0, 10, (2, 3, N))
        fm = feats.feature_matrix(segs, FS, "r1")
        assert fm.values.shape == (6, 23)
        # row = channel * n_epochs + epoch
        single = feats.extract_features(segs[1, 2], FS)
        np.testing.assert_array_equal(fm.values[1 * 3 + 2], single)
        grid = fm.as_grid("max_amp")
        assert grid.shape == (2, 3)
        assert grid[1, 2] == single[-1]

    def test_error_names_channel_and_epoch(self, rng):
        segs = rng.normal(0, 10, (2, 3, N))
        segs[1, 0, 5] = np.inf
        with pytest.raises(DataError, match="channel 1, epoch 0"):
            feats.feature_matrix(segs, FS, "r1")

    def test_csv_roundtrip(self, tmp_path, rng):
        segs = rng.normal(0, 10, (2, 4, N))
        fm = feats.feature_matrix(segs, FS, "r2")
        feats.save_csv(fm, tmp_path / "f.csv")
        back = feats.load_csv(tmp_path / "f.csv")
        assert back.recording_id == "r2"
        assert back.n_channels == 2 and back.n_epochs == 4
        np.testing.assert_array_equal(back.values, fm.values)

    def test_csv_rejects_other_version(self, tmp_path, rng):
        segs = rng.normal(0, 10, (1, 2, N))
        fm = feats.feature_matrix(segs, FS, "r3")
        feats.save_csv(fm, tmp_path / "f.csv")
        text = (tmp_path / "f.csv").read_text().replace(feats.FEATURE_VERSION, "other")
        (tmp_path / "f.csv").write_text(text)
        with pytest.raises(DataError, match="version"):
            feats.load_csv(tmp_path / "f.csv")
