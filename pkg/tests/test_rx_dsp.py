import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nofdm.channel import noise_variance_for_osnr
from nofdm.constellation import bits_to_qpsk, hard_decision
from nofdm.rx.cpr import cpr_pilot, pilot_phasors
from nofdm.rx.detection import conventional_id, decision_mask, id_thresholds, ldpc_assisted_id
from nofdm.rx.equalizer import EqualizerState, ddlms_update, mimo_equalize, windows
from nofdm.rx.metrics import BerCount, ber_count, osnr_to_ebn0_db, qpsk_ber, qpsk_ebn0_for_ber
from nofdm.transforms import CompressionFactor, interference_matrix

T_SYM = 8 / 130e9


def qpsk(rng, shape):
    return bits_to_qpsk(rng.integers(0, 2, 2 * int(np.prod(shape)), dtype=np.uint8)).reshape(shape)


class TestMimo:
    def test_centre_spike_passes_through(self):
        r = qpsk(np.random.default_rng(0), (2, 64))
        st_ = EqualizerState.center_spike(25)
        p = mimo_equalize(windows(r, np.arange(64), 25), st_)
        np.testing.assert_allclose(p, r, atol=1e-15)

    def test_spike_position_sets_delay(self):
        r = qpsk(np.random.default_rng(1), (2, 64))
        st_ = EqualizerState.center_spike(5)
        st_.taps[0, 0] = 0
        st_.taps[0, 0, 3] = 1  # one sample later than the centre (c = 2)
        p = mimo_equalize(windows(r, np.arange(10, 50), 5), st_)
        np.testing.assert_allclose(p[0], r[0, 9:49])
        np.testing.assert_allclose(p[1], r[1, 10:50])

    def test_polarization_swap(self):
        s = qpsk(np.random.default_rng(2), (2, 100))
        r = s[::-1] * np.exp(1j * np.array([0.3, -1.1]))[:, None]
        st_ = EqualizerState.center_spike(3)
        st_.taps[:] = 0
        # p_o = sum_i conj(w_oi) r_i
        st_.taps[0, 1, 1] = np.exp(1j * -1.1)
        st_.taps[1, 0, 1] = np.exp(1j * 0.3)
        np.testing.assert_allclose(mimo_equalize(windows(r, np.arange(100), 3), st_), s, atol=1e-12)

    def test_single_tap_arithmetic(self):
        st_ = EqualizerState(np.array([[[2.0], [-1.0]], [[0.5], [3.0]]], dtype=complex))
        r = np.array([[1.0, 2.0], [10.0, -1.0]], dtype=complex)
        p = mimo_equalize(windows(r, np.arange(2), 1), st_)
        np.testing.assert_allclose(p, [[2 * 1 - 10, 2 * 2 + 1], [0.5 + 30, 1.0 - 3.0]])

    def test_uninitialized(self):
        with pytest.raises(RuntimeError):
            mimo_equalize(np.zeros((2, 4, 3)), EqualizerState())
        with pytest.raises(RuntimeError):
            ddlms_update(EqualizerState(), np.zeros((2, 4)), np.zeros((2, 4, 3)))

    def test_windows_zero_outside(self):
        R = windows(np.arange(1, 6, dtype=complex), np.array([0, 4]), 3)
        np.testing.assert_array_equal(R[0], [[2, 1, 0], [0, 5, 4]])


class TestDdLms:
    def test_single_term_step(self):
        st_ = EqualizerState(np.zeros((2, 2, 1), complex), mu=0.1)
        R = np.zeros((2, 1, 1), complex)
        R[0, 0, 0] = 1.0
        err = np.array([[1.0], [0.0]])  # (d - s)* = 1 on X
        ddlms_update(st_, err, R, np.zeros(2))
        assert st_.taps[0, 0, 0] == pytest.approx(0.1)
        assert np.count_nonzero(st_.taps) == 1

    def test_phase_factor(self):
        st_ = EqualizerState(np.zeros((2, 2, 1), complex), mu=0.1)
        R = np.ones((2, 1, 1), complex)
        ddlms_update(st_, np.ones((2, 1)), R, np.array([0.5, 0.0]))
        assert st_.taps[0, 1, 0] == pytest.approx(0.1 * np.exp(-0.5j))
        assert st_.taps[1, 1, 0] == pytest.approx(0.1)

    @pytest.mark.parametrize("mu", [0.0, -1e-3])
    def test_step_must_be_positive(self, mu):
        st_ = EqualizerState.center_spike(5)
        with pytest.raises(ValueError):
            ddlms_update(st_, np.zeros((2, 8)), np.zeros((2, 8, 5)), mu=mu)

    def test_perfect_decisions_leave_taps(self):
        st_ = EqualizerState.center_spike(5)
        before = st_.taps.copy()
        s = qpsk(np.random.default_rng(3), (2, 8))
        R = windows(s, np.arange(8), 5)
        p = mimo_equalize(R, st_)
        ddlms_update(st_, s - p, R)
        np.testing.assert_array_equal(st_.taps, before)

    def test_convergence_on_static_mixing(self):
        # signal-path MSE: current taps applied to the noise-free channel output
        rng = np.random.default_rng(0)
        n, L = 10_000, 7
        s = qpsk(rng, (2, n))
        a = 0.5
        H = np.array([[math.cos(a), math.sin(a) * np.exp(0.4j)], [-math.sin(a) * np.exp(-0.4j), math.cos(a)]])
        clean = H @ s
        var = noise_variance_for_osnr(2.0, 130e9, 25.0)
        r = clean + math.sqrt(var / 2) * (rng.normal(size=clean.shape) + 1j * rng.normal(size=clean.shape))
        st_ = EqualizerState.center_spike(L, 1e-3)
        mse = []
        for k in range(0, n, 8):
            pos = np.arange(k, k + 8)
            R = windows(r, pos, L)
            p = mimo_equalize(R, st_)
            mse.append(np.mean(np.abs(mimo_equalize(windows(clean, pos, L), st_) - s[:, pos]) ** 2))
            ddlms_update(st_, hard_decision(p, 4) - p, R, np.zeros(2))
        blocks = 10 * np.log10(np.array(mse).reshape(25, -1).mean(axis=1))
        settled = int(np.argmax(blocks < -25))
        assert settled > 0
        assert np.all(np.diff(blocks[: settled + 1]) < 0)
        assert np.all(blocks[settled:] < -25)


class TestCpr:
    pilots = np.arange(0, 500, 5)

    def test_clean(self):
        res = cpr_pilot(np.ones(self.pilots.size, complex), self.pilots, np.arange(500), T_SYM)
        np.testing.assert_allclose(res.theta, 0, atol=1e-15)
        assert res.residual_cfo == pytest.approx(0, abs=1e-6)
        assert not res.low_confidence

    @pytest.mark.parametrize("df", [1e6, -3e6, 20e6])
    def test_residual_offset(self, df):
        z = 3.0 * np.exp(2j * np.pi * df * self.pilots * T_SYM + 0.7j)
        t = np.arange(500)
        res = cpr_pilot(z, self.pilots, t, T_SYM)
        assert res.residual_cfo == pytest.approx(df, rel=1e-2)
        # interpolation (and slope extrapolation at the ends) is exact for a linear phase
        np.testing.assert_allclose(res.theta, 2 * np.pi * df * t * T_SYM + 0.7, atol=1e-9)

    def test_wiener_variance_linear(self):
        rng = np.random.default_rng(4)
        lw = 100e3
        dt = 5 * T_SYM
        steps = rng.normal(0.0, math.sqrt(2 * np.pi * lw * dt), (400, self.pilots.size))
        phi = np.cumsum(steps, axis=1)
        ang = np.array([cpr_pilot(np.exp(1j * p), self.pilots, self.pilots, T_SYM, window=1).pilot_theta for p in phi])
        v = np.var(ang - ang[:, :1], axis=0)
        slope, icpt = np.polyfit(self.pilots * T_SYM, v, 1)
        assert slope == pytest.approx(2 * np.pi * lw, rel=0.15)
        resid = v - np.polyval([slope, icpt], self.pilots * T_SYM)
        assert np.std(resid) < 0.1 * v[-1]

    def test_low_snr_flagged(self):
        res = cpr_pilot(np.ones(4, complex), np.arange(4) * 5, np.arange(20), T_SYM, pilot_snr=0.5)
        assert res.low_confidence

    def test_window_longer_than_pilots(self):
        res = cpr_pilot(np.exp(1j * 0.01 * np.arange(6)), np.arange(6), np.arange(6), 1.0, window=15)
        assert res.theta.shape == (6,)

    def test_no_pilots(self):
        with pytest.raises(ValueError):
            cpr_pilot(np.zeros(0, complex), np.zeros(0), np.arange(3), T_SYM)

    def test_phasor_average(self):
        ref = qpsk(np.random.default_rng(5), (8,))
        z = pilot_phasors(ref * np.exp(0.4j), ref)
        assert np.angle(z) == pytest.approx(0.4)
        assert abs(z) == pytest.approx(8.0)


class TestIterativeDetection:
    C = interference_matrix(8, CompressionFactor(7, 8))

    def test_thresholds(self):
        np.testing.assert_allclose(id_thresholds(5), [0.8, 0.6, 0.4, 0.2, 0.0], atol=1e-15)
        assert id_thresholds(1).tolist() == [0.0]
        with pytest.raises(ValueError):
            id_thresholds(0)

    def test_noiseless_exact(self):
        X = qpsk(np.random.default_rng(6), (2000, 8))
        P = X @ self.C.T
        out = conventional_id(P, self.C, 5)
        assert len(out) == 5
        np.testing.assert_allclose(out[-1], X, atol=1e-12)
        # the uncancelled symbols really do carry ICI
        assert np.max(np.abs(P - X)) > 0.1

    def test_identity_is_noop(self):
        P = qpsk(np.random.default_rng(7), (50, 8)) + 0.3
        for S in conventional_id(P, np.eye(8), 5):
            np.testing.assert_array_equal(S, P)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            conventional_id(np.zeros((3, 4)), self.C)
        with pytest.raises(ValueError):
            ldpc_assisted_id(np.zeros((3, 8)), self.C, np.zeros((3, 4)))

    def test_square_decision_region(self):
        s = 1 / math.sqrt(2)  # QPSK grid unit
        grid = np.array([0.7 + 0.7j, 0.7 + 0.1j, -0.9 - 0.9j, 0.05 - 0.8j, -0.5 + 0.5j])
        mask = decision_mask(grid * s, 0.5)
        np.testing.assert_array_equal(mask, [True, False, True, False, True])
        assert decision_mask(np.array([s + s * 1j]), 1.0)[0]
        assert not decision_mask(np.array([s + 0.99 * s * 1j]), 1.0)[0]
        assert decision_mask(np.array([0.01 + 0.01j]), 0.0)[0]

    def test_assisted_with_true_symbols(self):
        X = qpsk(np.random.default_rng(8), (100, 8))
        P = X @ self.C.T
        np.testing.assert_allclose(ldpc_assisted_id(P, self.C, X), X, atol=1e-12)

    def test_assisted_identity(self):
        P = qpsk(np.random.default_rng(9), (10, 8)) * 1.3
        np.testing.assert_array_equal(ldpc_assisted_id(P, np.eye(8), np.zeros_like(P)), P)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(4, 7, 8), (8, 7, 8), (16, 7, 8)]))
    def test_exact_recovery_property(self, seed, shape):
        n, b, c = shape
        C = interference_matrix(n, CompressionFactor(b, c))
        X = qpsk(np.random.default_rng(seed), (20, n))
        np.testing.assert_allclose(hard_decision(conventional_id(X @ C.T, C, 5)[-1], 4), X, atol=1e-12)


class TestMetrics:
    def test_identical(self):
        b = np.random.default_rng(0).integers(0, 2, 1000)
        assert ber_count(b, b).ber == 0.0

    def test_one_in_a_million(self):
        a = np.zeros(1_000_000, np.uint8)
        b = a.copy()
        b[123456] = 1
        c = ber_count(b, a)
        assert (c.errors, c.total) == (1, 1_000_000)
        assert c.ber == pytest.approx(1e-6)

    def test_complementary(self):
        a = np.random.default_rng(1).integers(0, 2, 999)
        assert ber_count(1 - a, a).ber == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ber_count(np.zeros(10), np.zeros(11))

    def test_groups(self):
        ref = np.zeros(8, int)
        dec = np.array([1, 0, 0, 0, 1, 1, 0, 0])
        total, per = ber_count(dec, ref, groups=[0, 1, 2, 3, 0, 1, 2, 3], n_groups=4)
        assert total == BerCount(3, 8)
        assert [p.errors for p in per] == [2, 1, 0, 0]
        assert sum(per, BerCount(0, 0)) == total

    def test_empty_is_nan(self):
        assert math.isnan(BerCount(0, 0).ber)

    def test_qpsk_reference_points(self):
        assert qpsk_ber(0.0) == pytest.approx(0.07864960352514258, rel=1e-12)
        assert qpsk_ber(9.6) == pytest.approx(1.0e-5, rel=0.05)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-3.0, 12.0))
    def test_inverse(self, ebn0):
        assert qpsk_ebn0_for_ber(qpsk_ber(ebn0)) == pytest.approx(ebn0, abs=1e-8)

    def test_osnr_conversion(self):
        # 12.5 GHz ref, 130 GBd, 2 bits/symbol: Eb/N0 = OSNR + 10 log10(12.5 / 130 / 2)
        assert osnr_to_ebn0_db(20.0, 130e9) == pytest.approx(20 + 10 * math.log10(12.5 / 260), rel=1e-12)
        assert osnr_to_ebn0_db(20.0, 130e9, data_fraction=0.5) == pytest.approx(osnr_to_ebn0_db(20.0, 130e9) - 10 * math.log10(2))
