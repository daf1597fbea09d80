import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semgaudit.dataset import TrialTensor
from semgaudit.features import (
    CATALOG,
    FEATURE_NAMES,
    FeatureConfig,
    build_feature_matrix,
    channel_features,
    compute_fd,
    compute_td,
    compute_tf,
    compute_xch,
)
from semgaudit.features.catalog import fe_band_edges, fe_names
from semgaudit.features.spectral import band_power, power_spectrum
from semgaudit.features.wavelet import node_band, wpt_nodes

FS = 2000.0

windows = arrays(
    np.float64,
    st.integers(128, 600),
    elements=st.floats(-5, 5, allow_nan=False, allow_infinity=False),
)


def test_catalog_shape():
    assert len(FEATURE_NAMES) == 147 == len(set(FEATURE_NAMES))
    counts = {d: sum(c.domain == d for c in CATALOG) for d in ("TD", "FD", "TF", "XCH")}
    assert counts == {"TD": 34, "FD": 56, "TF": 56, "XCH": 1}


class TestTimeDomain:
    def test_worked_amplitudes(self):
        f = compute_td(np.array([1.0, -1.0, 2.0, -2.0]))
        assert f["MAV"] == 1.5 and f["IAV"] == 6.0
        assert f["RMS"] == pytest.approx(np.sqrt(2.5), abs=1e-15)

    def test_worked_sign_changes(self):
        f = compute_td(np.array([1.0, -1.0, 1.0, -1.0]))
        assert f["ZC"] == 3 and f["SSC"] == 2

    def test_constant_window_is_finite(self):
        f = compute_td(np.full(300, 0.7))
        assert all(np.isfinite(v) for v in f.values())
        assert f["ZC"] == 0 and f["HMob"] == 0 and f["Var"] < 1e-30
        assert all(f[f"Hist{i}"] == 0 for i in range(10))

    def test_too_short(self):
        with pytest.raises(ValueError):
            compute_td(np.array([1.0, 2.0]))

    @given(windows)
    @settings(max_examples=60, deadline=None)
    def test_reversal_invariance(self, x):
        a, b = compute_td(x), compute_td(x[::-1].copy())
        for name in ("MAV", "RMS", "Var", "ZC", "WL") + tuple(f"Hist{i}" for i in range(10)):
            assert a[name] == pytest.approx(b[name], rel=1e-9, abs=1e-12), name

    @given(windows, st.floats(0.1, 10))
    @settings(max_examples=60, deadline=None)
    def test_amplitude_scaling(self, x, c):
        a, b = compute_td(x), compute_td(c * x)
        for name in ("MAV", "RMS", "WL", "IAV", "STD"):
            assert b[name] == pytest.approx(c * a[name], rel=1e-9, abs=1e-12)
        # shape descriptors are scale free (constant windows excluded by the guard)
        if np.ptp(x) > 1e-6:
            for name in ("Skew", "Kurt", "HMob", "HCom"):
                assert b[name] == pytest.approx(a[name], rel=1e-7, abs=1e-9)

    @given(windows)
    @settings(max_examples=60, deadline=None)
    def test_histogram_is_a_distribution(self, x):
        f = compute_td(x)
        if np.ptp(x) == 0:
            return  # constant windows use the all-zero convention
        h = np.array([f[f"Hist{i}"] for i in range(10)])
        assert (h >= 0).all() and h.sum() == pytest.approx(1.0, abs=1e-12)


class TestSpectral:
    def test_fe_bands_tile_zero_to_500(self):
        edges = fe_band_edges()
        assert len(edges) == len(fe_names()) == 49
        assert edges[0][0] == 0.0 and edges[-1][1] == 500.0
        assert all(a[1] == b[0] for a, b in zip(edges, edges[1:]))

    def test_fe_sum_equals_variance_for_on_bin_tones(self, rng):
        # on-bin tones have no leakage, so all power is in-band and equals var(x)
        n = 2800
        for _ in range(20):
            bins = rng.choice(np.arange(1, int(500 * n / FS)), size=4, replace=False)
            t = np.arange(n)
            x = sum(rng.uniform(0.2, 2) * np.cos(2 * np.pi * b * t / n + rng.uniform(0, 6)) for b in bins)
            f = compute_fd(x, FS)
            fe = sum(f[k] for k in fe_names())
            assert fe == pytest.approx(np.var(x), rel=1e-9)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_fe_sum_equals_in_band_power(self, seed):
        x = np.random.default_rng(seed).normal(size=1000)
        freqs, p = power_spectrum(x, FS)
        f = compute_fd(x, FS)
        in_band = band_power(freqs, p, 0.0, 500.0, closed=True)
        assert sum(f[k] for k in fe_names()) == pytest.approx(in_band[0], rel=1e-6)

    def test_periodogram_parseval(self, rng):
        x = rng.normal(size=2800)
        _, p = power_spectrum(x, FS)
        assert p.sum() == pytest.approx(np.var(x), rel=1e-12)

    def test_zero_window(self):
        f = compute_fd(np.zeros(256), FS)
        assert all(v == 0 for v in f.values())

    def test_too_short(self):
        with pytest.raises(ValueError):
            compute_fd(np.zeros(63), FS)

    @given(st.integers(0, 2**32 - 1), st.integers(128, 3000))
    @settings(max_examples=40, deadline=None)
    def test_reversal_invariance(self, seed, n):
        # generic continuous data: flat spectra make local-peak detection a rounding tie
        x = np.random.default_rng(seed).standard_t(4, size=n)
        a, b = compute_fd(x, FS), compute_fd(x[::-1].copy(), FS)
        for k in a:
            assert b[k] == pytest.approx(a[k], rel=1e-9, abs=1e-12), k


class TestWavelet:
    def test_relative_energy_sums_to_one(self, rng):
        for _ in range(20):
            f = compute_tf(rng.normal(size=2800))
            assert sum(f[f"WPT_RE_{k}"] for k in range(16)) == pytest.approx(1.0, abs=1e-9)

    def test_zero_window_convention(self):
        f = compute_tf(np.zeros(2800))
        assert all(f[f"WPT_RE_{k}"] == 1 / 16 for k in range(16))
        assert all(f[f"WPT_LogRMS_{k}"] == np.log(1e-12) for k in range(16))
        assert all(np.isfinite(v) for v in f.values())

    @pytest.mark.parametrize("k", [0, 3, 7, 12, 15])
    def test_nodes_in_frequency_order(self, k):
        # a tone in the middle of node k's nominal band puts most energy in node k
        lo, hi = node_band(k, FS)
        t = np.arange(4096) / FS
        nodes = wpt_nodes(np.sin(2 * np.pi * (lo + hi) / 2 * t)[None, :])
        energy = np.array([np.sum(c**2) for c in nodes])
        assert int(np.argmax(energy)) == k


class TestInterChannel:
    def test_perfectly_correlated(self):
        x = np.random.default_rng(0).normal(size=500)
        per, pairs = compute_xch(np.stack([x, 2 * x + 1, -x]))
        # r01 = 1, r02 = r12 = -1
        np.testing.assert_allclose(per, [0.0, 0.0, -1.0], atol=1e-12)
        assert pairs[(0, 1)] == pytest.approx(1.0) and pairs[(0, 2)] == pytest.approx(-1.0)

    def test_constant_channel_is_zero(self):
        x = np.random.default_rng(1).normal(size=(3, 200))
        x[1] = 4.0
        per, pairs = compute_xch(x)
        assert pairs[(0, 1)] == 0 and pairs[(1, 2)] == 0


class TestMatrix:
    def _tensor(self, sid, seed, trials=4, channels=3):
        rng = np.random.default_rng(seed)
        return TrialTensor(sid, rng.normal(size=(trials, channels, 800)), np.arange(trials) % 2, FS)

    def test_rows_and_trial_averaging(self):
        tensors = [self._tensor("A", 0), self._tensor("B", 1)]
        fm = build_feature_matrix(tensors)
        assert len(fm) == 2 * 2 * 3 and fm.values.shape[1] == 147
        assert list(fm.frame.columns[:3]) == ["subject", "gesture", "channel"]
        # cell (A, gesture 0, channel 1) averages trials 0 and 2
        t = tensors[0]
        w = t.data[[0, 2], 1, 120:680]
        expect = channel_features(w, FS).mean(axis=0)
        row = fm.frame[(fm.frame.subject == "A") & (fm.frame.gesture == 0) & (fm.frame.channel == 1)]
        np.testing.assert_allclose(row[FEATURE_NAMES[:-1]].to_numpy()[0], expect, rtol=1e-12, atol=1e-14)

    def test_jobs_do_not_change_values(self):
        tensors = [self._tensor(s, i) for i, s in enumerate("ABC")]
        a = build_feature_matrix(tensors, jobs=1).frame
        b = build_feature_matrix(tensors, jobs=2).frame
        assert a.equals(b)

    def test_config_round_trip(self):
        cfg = FeatureConfig(wam_threshold=0.1, fr_low_band=(5.0, 80.0))
        assert FeatureConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            FeatureConfig(spectrum="multitaper")
