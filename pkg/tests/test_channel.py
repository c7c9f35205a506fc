import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nofdm.channel import (
    ChannelSpec,
    FiberSpec,
    WssSpec,
    apply_cd,
    apply_cfo_phase_noise,
    apply_clock_offset,
    apply_wss_cascade,
    calibrate_wss,
    cd_memory_samples,
    load_osnr,
    measure_osnr,
    noise_variance_for_osnr,
    propagate,
    wss_bandwidth,
    wss_response,
)

FS = 260e9


class TestFiber:
    def test_defaults(self):
        f = FiberSpec()
        assert f.length_m == 2.0e6
        # D lambda^2 L / c for 17 ps/nm/km at 1550.1 nm over 2000 km
        assert f.beta == pytest.approx(2.7250698995236233e-19, rel=1e-12)
        assert cd_memory_samples(FS, 131e9, f) == 9282

    def test_invalid(self):
        with pytest.raises(ValueError):
            FiberSpec(spans=-1)


class TestDispersion:
    def test_allpass_and_inverse(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 4096)) + 1j * rng.normal(size=(2, 4096))
        y = apply_cd(x, FS, FiberSpec())
        assert np.sum(np.abs(y) ** 2) == pytest.approx(np.sum(np.abs(x) ** 2))
        np.testing.assert_allclose(apply_cd(y, FS, FiberSpec(), inverse=True), x, atol=1e-9)

    def test_zero_length_is_identity(self):
        x = np.arange(8) + 0j
        np.testing.assert_array_equal(apply_cd(x, FS, FiberSpec(spans=0)), x)

    def test_gaussian_pulse_broadening(self):
        # |beta2| L = beta / (2 pi); peak falls as (1 + (beta2 L / T0^2)^2)^(-1/4)
        fiber = FiberSpec()
        t0 = 100e-12
        n = 1 << 15
        t = (np.arange(n) - n // 2) / FS
        x = np.exp(-(t**2) / (2 * t0**2)).astype(complex)
        y = apply_cd(x, FS, fiber)
        r = fiber.beta / (2 * np.pi) / t0**2
        assert r > 4  # strongly dispersed
        assert np.abs(y).max() == pytest.approx((1 + r**2) ** -0.25, rel=1e-6)
        rms = lambda a: math.sqrt(np.sum(t**2 * np.abs(a) ** 2) / np.sum(np.abs(a) ** 2))  # noqa: E731
        assert rms(y) / rms(x) == pytest.approx(math.sqrt(1 + r**2), rel=1e-6)

    def test_peak_decreases_with_distance(self):
        t = (np.arange(8192) - 4096) / FS
        x = np.exp(-(t**2) / (2 * (50e-12) ** 2)).astype(complex)
        peaks = [np.abs(apply_cd(x, FS, FiberSpec(spans=s))).max() for s in (0, 5, 10, 25)]
        assert all(a > b for a, b in zip(peaks, peaks[1:]))


class TestWss:
    def test_calibrated_bandwidths(self):
        assert wss_bandwidth(WssSpec(cascade=3)) == pytest.approx(122.5, abs=0.05)
        assert wss_bandwidth(WssSpec(cascade=11)) == pytest.approx(115.5, abs=0.05)
        assert wss_bandwidth(WssSpec(cascade=0)) == math.inf

    def test_response_levels(self):
        spec = WssSpec(cascade=1)
        assert wss_response(0.0, spec) == 1.0
        # half power at the per-filter 3-dB edge
        assert wss_response(spec.bw3_ghz * 1e9 / 2, spec) ** 2 == pytest.approx(0.5)
        bw10 = wss_bandwidth(WssSpec(cascade=4))
        assert 20 * np.log10(wss_response(bw10 * 1e9 / 2, WssSpec(cascade=4))) == pytest.approx(-10.0)

    def test_two_target_fit(self):
        spec, rep = calibrate_wss(((3, 122.5), (11, 115.5)))
        assert max(abs(r) for r in rep["residual_ghz"]) < 1e-9
        assert spec.order == pytest.approx(11.04, abs=0.01)

    def test_single_target_closed_form(self):
        spec, rep = calibrate_wss(((1, 100.0),), order=4)
        assert rep["residual_ghz"][0] == pytest.approx(0.0, abs=1e-12)
        # for one filter the 10-dB edge sits at (log2 10)^(1/8) times the 3-dB edge
        assert spec.bw3_ghz == pytest.approx(100.0 / math.log2(10) ** (1 / 8))

    def test_fixed_order_four_cannot_meet_both(self):
        _, rep = calibrate_wss(((3, 122.5), (11, 115.5)), order=4)
        assert max(abs(r) for r in rep["residual_ghz"]) > 2.0

    def test_contradictory_targets(self):
        with pytest.raises(ValueError, match="infeasible"):
            calibrate_wss(((3, 110.0), (11, 120.0)))

    def test_filtering_is_real_symmetric(self):
        x = np.zeros(1024, complex)
        x[0] = 1
        h = apply_wss_cascade(x, FS, WssSpec(cascade=3))
        np.testing.assert_allclose(h.imag, 0, atol=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            WssSpec(order=0.5)


class TestCarrier:
    def test_cfo_shifts_spectrum(self):
        n = 4096
        x = np.exp(2j * np.pi * 0.05 * np.arange(n))
        y = apply_cfo_phase_noise(x, FS, FS * 64 / n, 0.0, None)
        assert np.argmax(np.abs(np.fft.fft(y))) == round(0.05 * n) + 64

    def test_wiener_increment_variance(self):
        rng = np.random.default_rng(1)
        lw = 1e6
        y = apply_cfo_phase_noise(np.ones((1, 200_001)), FS, 0.0, lw, rng)
        d = np.diff(np.unwrap(np.angle(y[0])))
        assert np.var(d) == pytest.approx(2 * np.pi * lw / FS, rel=0.05)

    def test_common_to_both_pols(self):
        y = apply_cfo_phase_noise(np.ones((2, 100)), FS, 1e9, 1e6, np.random.default_rng(2))
        np.testing.assert_allclose(y[0], y[1])

    def test_negative_linewidth(self):
        with pytest.raises(ValueError):
            apply_cfo_phase_noise(np.ones(4), FS, 0, -1, None)


class TestClock:
    def test_tone_frequency_scales(self):
        n = 8192
        f0 = 0.1
        x = np.exp(2j * np.pi * f0 * np.arange(n))
        y = apply_clock_offset(x, 200.0, periodic=False)[100:-100]
        slope = np.polyfit(np.arange(y.size), np.unwrap(np.angle(y)), 1)[0]
        assert slope / (2 * np.pi) == pytest.approx(f0 * (1 + 200e-6), rel=1e-7)

    def test_zero_is_identity(self):
        x = np.arange(16) + 0j
        np.testing.assert_array_equal(apply_clock_offset(x, 0.0), x)

    def test_interpolator_accuracy(self):
        n = 4096
        x = np.exp(2j * np.pi * 0.2 * np.arange(n))
        y = apply_clock_offset(x, 50.0, periodic=False)
        pos = np.arange(n) * (1 + 50e-6)
        ref = np.exp(2j * np.pi * 0.2 * pos)
        assert np.max(np.abs(y[64:-64] - ref[64:-64])) < 1e-3

    def test_limit(self):
        with pytest.raises(ValueError):
            apply_clock_offset(np.ones(8), 1500.0)


class TestNoise:
    def test_frozen_variance(self):
        # 2 W over both pols at 20 dB in 12.5 GHz, white over 260 GHz
        assert noise_variance_for_osnr(2.0, FS, 20.0) == pytest.approx(0.208)
        assert noise_variance_for_osnr(2.0, FS, math.inf) == 0.0

    @pytest.mark.parametrize("osnr", [10.0, 20.0, 30.0])
    def test_measured_osnr(self, osnr):
        rng = np.random.default_rng(int(osnr))
        clean = np.exp(2j * np.pi * rng.random((2, 1 << 16)))
        noisy = load_osnr(clean, FS, osnr, rng)
        assert measure_osnr(noisy, clean, FS) == pytest.approx(osnr, abs=0.2)


class TestPropagate:
    def test_loopback_capture(self):
        rng = np.random.default_rng(0)
        tx = rng.normal(size=(2, 1000)) + 0j
        cap = propagate(tx, FS, ChannelSpec(), None, None, margin=64)
        assert cap.samples.shape == (2, 1128)
        np.testing.assert_allclose(cap.samples[:, 64:1064], tx)
        # the frame repeats on both sides
        np.testing.assert_allclose(cap.samples[:, :64], tx[:, -64:])

    def test_seeded(self):
        tx = np.ones((2, 256), complex)
        spec = ChannelSpec(osnr_db=15, linewidth_hz=1e5)
        a = propagate(tx, FS, spec, np.random.default_rng(1), np.random.default_rng(2), 32)
        b = propagate(tx, FS, spec, np.random.default_rng(1), np.random.default_rng(2), 32)
        np.testing.assert_array_equal(a.samples, b.samples)

    @settings(max_examples=10, deadline=None)
    @given(st.sampled_from([0, 8, 64]), st.integers(1, 5))
    def test_noise_power_follows_osnr(self, margin, seed):
        rng = np.random.default_rng(seed)
        tx = np.exp(2j * np.pi * rng.random((2, 4096)))
        cap = propagate(tx, FS, ChannelSpec(osnr_db=20.0), None, rng, margin=margin, keep_clean=True)
        assert measure_osnr(cap.samples, cap.clean, FS) == pytest.approx(20.0, abs=0.2)
