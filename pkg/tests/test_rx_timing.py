import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nofdm.channel import ChannelSpec, load_osnr, propagate
from nofdm.fec import default_code
from nofdm.rx.filters import matched_filter
from nofdm.rx.timing import (
    TimingRecoveryError,
    cubic_interpolate,
    nyquist_timing_error,
    timing_recovery,
    tone_bins,
    tone_correlation,
    tone_timing_error,
)
from nofdm.tx import FrameLayout, TxConfig, insert_tones, transmit

SPS, K = 2, 4


@pytest.fixture(scope="module")
def code():
    return default_code()


def advance(x, tau):
    """Exact fractional advance ``x(t + tau)`` of a periodic waveform (FFT phase ramp)."""
    f = np.fft.fftfreq(x.shape[-1])
    return np.fft.ifft(np.fft.fft(x, axis=-1) * np.exp(2j * np.pi * f * tau), axis=-1)


def block_spectra(x, block=1024):
    n = x.shape[-1] // block
    return np.fft.fft(x[:, : n * block].reshape(x.shape[0], n, block), axis=-1)


class TestToneDetector:
    def test_tone_bin(self):
        assert tone_bins(1024, SPS, K) == 128
        with pytest.raises(ValueError):
            tone_bins(1020, SPS, K)

    def test_window_too_wide(self):
        X = np.ones(64, complex)
        with pytest.raises(ValueError):
            tone_correlation(X, SPS, K, half_width=9)
        with pytest.raises(ValueError):
            tone_correlation(X, SPS, K, half_width=0)

    def test_ideal_tone_pair(self):
        tones = insert_tones(np.zeros((1, 1024), complex), SPS, K, ratio_db=0.0, power=1.0)
        X0 = np.fft.fft(tones, axis=-1)
        peak = abs(tone_correlation(X0, SPS, K))
        assert abs(tone_timing_error(X0)) < 1e-12 * peak
        # tau = sps K / 8 puts the cross-spectral phase at pi/2
        e_pos = tone_timing_error(np.fft.fft(advance(tones, SPS * K / 8), axis=-1))
        e_neg = tone_timing_error(np.fft.fft(advance(tones, -SPS * K / 8), axis=-1))
        assert e_pos == pytest.approx(peak, rel=1e-9)
        assert e_neg == pytest.approx(-peak, rel=1e-9)

    @pytest.mark.parametrize("tau", [-1.7, -0.4, 0.25, 1.3])
    def test_ideal_tone_law(self, tau):
        tones = insert_tones(np.zeros((1, 1024), complex), SPS, K, ratio_db=0.0, power=1.0)
        z0 = abs(tone_correlation(np.fft.fft(tones, axis=-1), SPS, K))
        e = tone_timing_error(np.fft.fft(advance(tones, tau), axis=-1))
        assert e == pytest.approx(z0 * math.sin(4 * math.pi * tau / (SPS * K)), abs=1e-9 * z0)

    def test_s_curve_with_signal_at_15db(self, code):
        cfg = TxConfig()
        w = transmit(cfg, code, 4, np.random.default_rng(1)).waveform.stacked()
        w = load_osnr(w, cfg.sample_rate, 15.0, np.random.default_rng(2))
        taus = np.linspace(-SPS * K / 4, SPS * K / 4, 41)
        e = np.array([np.mean([tone_timing_error(X) for X in block_spectra(advance(w, t)).transpose(1, 0, 2)]) for t in taus])
        rho = np.corrcoef(e, np.sin(4 * np.pi * taus / (SPS * K)))[0, 1]
        assert rho >= 0.99
        assert abs(e[20]) < 0.05 * np.max(np.abs(e))


class TestNyquistDetector:
    @staticmethod
    def normalized_outputs(rolloff, code):
        cfg = TxConfig(rolloff=rolloff, layout=FrameLayout(tone_ratio_db=math.inf))
        w = transmit(cfg, code, 2, np.random.default_rng(1)).waveform.stacked()
        out = []
        for tau in np.linspace(-2, 2, 9):
            X = block_spectra(advance(w, tau))
            e = np.mean([nyquist_timing_error(X[:, b]) for b in range(X.shape[1])])
            out.append(e / (np.mean(np.abs(X) ** 2) * 1024 // 8 * 2 * 2))
        return np.array(out)

    def test_blind_on_narrow_rolloff(self, code):
        # no spectral overlap across the band edge, so no timing information
        assert np.max(np.abs(self.normalized_outputs(0.01, code))) < 0.01

    def test_works_with_wide_rolloff(self, code):
        e = self.normalized_outputs(0.5, code)
        assert e[3] > 0.1 and e[1] < -0.1


class TestInterpolator:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(2.0, 12.0))
    def test_exact_on_cubics(self, coef, pos):
        n = np.arange(16.0)
        x = np.polyval(coef, n)
        got = cubic_interpolate(x, np.array([pos]))[0]
        assert got == pytest.approx(np.polyval(coef, pos), abs=1e-8 * (1 + abs(np.polyval(coef, pos))))

    def test_integer_positions_pass_through(self):
        x = np.random.default_rng(0).normal(size=(2, 32))
        np.testing.assert_allclose(cubic_interpolate(x, np.arange(1, 30, dtype=float)), x[:, 1:30], atol=1e-14)


class TestLoop:
    def test_static_offset_relative(self, code):
        w = matched_filter(transmit(TxConfig(), code, 8, np.random.default_rng(4)).waveform.stacked())
        r0 = timing_recovery(w)
        r3 = timing_recovery(advance(w, 0.3))
        assert r0.trace.size == r3.trace.size == math.ceil(w.shape[-1] / 1024)
        skip = r0.trace.size // 4
        assert np.mean(r3.trace[skip:] - r0.trace[skip:]) == pytest.approx(0.3, rel=0.02)

    def test_static_offset_ensemble(self, code):
        # data self-noise leaves about 0.01 samples of per-frame jitter, so average frames
        means = []
        for seed in range(32):
            w = matched_filter(transmit(TxConfig(), code, 16, np.random.default_rng(100 + seed)).waveform.stacked())
            r = timing_recovery(advance(w, 0.3))
            means.append(r.trace[r.trace.size // 4 :].mean())
        assert np.mean(means) == pytest.approx(0.3, rel=0.02)

    def test_clock_offset_slope(self, code):
        cfg = TxConfig()
        tx = transmit(cfg, code, 13, np.random.default_rng(2)).waveform.stacked()
        cap = propagate(tx, cfg.sample_rate, ChannelSpec(osnr_db=25.0, clock_ppm=50.0), np.random.default_rng(3), np.random.default_rng(4))
        r = timing_recovery(matched_filter(cap.samples))
        assert not r.low_confidence
        slope = r.slope(skip=8)
        assert slope == pytest.approx(5e-5, rel=0.05)
        fit = np.polyval(np.polyfit(r.block_starts[8:], r.trace[8:], 1), r.block_starts[8:])
        assert np.std(r.trace[8:] - fit) < 0.05

    def test_negative_clock_offset(self, code):
        cfg = TxConfig()
        tx = transmit(cfg, code, 8, np.random.default_rng(2)).waveform.stacked()
        cap = propagate(tx, cfg.sample_rate, ChannelSpec(clock_ppm=-20.0), np.random.default_rng(3), np.random.default_rng(4))
        assert timing_recovery(matched_filter(cap.samples)).slope(skip=8) == pytest.approx(-2e-5, rel=0.05)

    def test_no_tones_flagged(self, code):
        cfg = TxConfig(layout=FrameLayout(tone_ratio_db=math.inf))
        w = matched_filter(transmit(cfg, code, 4, np.random.default_rng(1)).waveform.stacked())
        try:
            r = timing_recovery(w)
        except TimingRecoveryError:
            return
        assert r.low_confidence

    def test_tones_not_flagged(self, code):
        w = matched_filter(transmit(TxConfig(), code, 4, np.random.default_rng(1)).waveform.stacked())
        assert not timing_recovery(w).low_confidence

    def test_runaway_raises(self, code):
        w = matched_filter(transmit(TxConfig(), code, 4, np.random.default_rng(1)).waveform.stacked())
        with pytest.raises(TimingRecoveryError):
            timing_recovery(advance(w, 1.0), kp=0.0, ki=5.0, acquisition_blocks=0)
