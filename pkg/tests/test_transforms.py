import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nofdm.transforms import (
    SCHEMES,
    CompressionFactor,
    PrunedPlan,
    PruneSpec,
    count_multi_ifft,
    count_ops,
    ifrft_direct,
    interference_matrix,
    modulation_matrix,
    nofdm_demod,
    nofdm_mod,
    nofdm_mod_cn_ifft,
    nofdm_mod_multi_ifft,
    prune_savings,
)

CF78 = CompressionFactor(7, 8)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_symbols(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestCompressionFactor:
    def test_normalizes(self):
        cf = CompressionFactor(14, 16)
        assert (cf.b, cf.c) == (7, 8)

    @pytest.mark.parametrize("b,c", [(0, 8), (9, 8), (-1, 2)])
    def test_rejects_invalid(self, b, c):
        with pytest.raises(ValueError):
            CompressionFactor(b, c)

    def test_from_value(self):
        assert CompressionFactor.from_value(0.875) == CF78
        assert CompressionFactor.from_value("19/20").alpha == pytest.approx(0.95)


class TestIfrftDirect:
    def test_dc_subcarrier(self):
        X = np.zeros(8, complex)
        X[0] = math.sqrt(8)
        np.testing.assert_allclose(ifrft_direct(X, CF78), np.ones(8), atol=1e-14)

    def test_alpha_one_is_idft(self):
        rng = np.random.default_rng(1)
        X = random_symbols(rng, 8)
        expected = np.fft.ifft(X) * math.sqrt(8)
        np.testing.assert_allclose(ifrft_direct(X, CompressionFactor(1, 1)), expected, atol=1e-12)

    def test_single_subcarrier_by_hand(self):
        X = np.zeros(8, complex)
        X[1] = 1.0
        n = np.arange(8)
        expected = np.exp(2j * np.pi * n * 7 / 64) / math.sqrt(8)
        x = ifrft_direct(X, CF78)
        np.testing.assert_allclose(x, expected, atol=1e-14)
        np.testing.assert_allclose(np.abs(x), 1 / math.sqrt(8), atol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            ifrft_direct([], CF78)


class TestGenerators:
    @pytest.mark.parametrize("gen", [nofdm_mod_cn_ifft, nofdm_mod_multi_ifft])
    def test_matches_direct(self, gen):
        rng = np.random.default_rng(2)
        X = random_symbols(rng, (50, 8))
        assert rel_err(gen(X, CF78), ifrft_direct(X, CF78)) <= 1e-9

    @pytest.mark.parametrize("gen", [nofdm_mod_cn_ifft, nofdm_mod_multi_ifft])
    def test_alpha_one(self, gen):
        rng = np.random.default_rng(3)
        X = random_symbols(rng, 8)
        np.testing.assert_allclose(gen(X, CompressionFactor(1, 1)), np.fft.ifft(X) * math.sqrt(8), atol=1e-12)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_zero_in_zero_out(self, scheme):
        assert np.all(nofdm_mod(np.zeros(8), CF78, scheme) == 0)

    @pytest.mark.parametrize("c", [1, 2, 4, 8])
    def test_dc_only_is_constant(self, c):
        X = np.zeros(8, complex)
        X[0] = 2.0
        x = nofdm_mod_multi_ifft(X, CompressionFactor(1, c))
        np.testing.assert_allclose(x, np.full(8, 2 / math.sqrt(8)), atol=1e-14)

    def test_non_pow2_falls_back(self):
        cf = CompressionFactor(4, 5)
        rng = np.random.default_rng(4)
        X = random_symbols(rng, 8)
        assert rel_err(nofdm_mod_cn_ifft(X, cf), ifrft_direct(X, cf)) < 1e-12
        assert count_ops("cn-ifft", 8, cf) is None

    @settings(max_examples=30, deadline=None)
    @given(
        n_sub=st.sampled_from([4, 8, 16]),
        cf=st.sampled_from([CompressionFactor(1, 1), CF78, CompressionFactor(4, 5), CompressionFactor(19, 20)]),
        seed=st.integers(0, 2**31),
    )
    def test_all_schemes_agree(self, n_sub, cf, seed):
        rng = np.random.default_rng(seed)
        X = random_symbols(rng, (4, n_sub))
        ref = ifrft_direct(X, cf)
        for scheme in SCHEMES[1:]:
            assert rel_err(nofdm_mod(X, cf, scheme), ref) <= 1e-9


class TestPruning:
    def test_savings_upper_branch(self):
        assert prune_savings(PruneSpec(6, 3, 3)) == pytest.approx((12 - 3 - 3 - 2 * (1 - 2**-3)) / 6)
        assert prune_savings(PruneSpec(6, 3, 3)) == pytest.approx(0.708333, abs=1e-6)

    def test_savings_lower_branch(self):
        assert prune_savings(PruneSpec(6, 2, 2)) == pytest.approx((6 - 2 - 2**-3 * (1 - 2**2)) / 6)
        assert prune_savings(PruneSpec(6, 2, 2)) == pytest.approx(0.729166, abs=1e-6)

    def test_no_pruning_no_savings(self):
        assert prune_savings(PruneSpec(6, 6, 6)) == 0.0

    def test_branch_selection(self):
        # I + O == Q sits on the upper branch
        spec = PruneSpec(6, 3, 3)
        upper = (2 * 6 - 3 - 3 - 2 * (1 - 2.0 ** (3 - 6))) / 6
        lower = (6 - 3 - 2.0 ** (3 + 1 - 6) * (1 - 2.0**3)) / 6
        assert prune_savings(spec) == pytest.approx(upper)
        assert upper != pytest.approx(lower)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            PruneSpec(0, 0, 0)
        with pytest.raises(ValueError):
            PruneSpec(6, 7, 3)

    @pytest.mark.parametrize("q", [3, 4, 5, 6])
    def test_measured_matches_formula_when_i_plus_o_ge_q(self, q):
        size = 1 << q
        for i in range(q + 1):
            for o in range(q + 1):
                if i + o < q:
                    continue
                plan = PrunedPlan(size, range(1 << i), range(1 << o))
                expected = size // 2 * q * (1 - prune_savings(PruneSpec(q, i, o)))
                assert plan.mults == pytest.approx(expected)

    def test_pruned_never_exceeds_unpruned(self):
        q, size = 6, 64
        full = size // 2 * q
        rng = np.random.default_rng(5)
        for _ in range(20):
            ins = rng.choice(size, rng.integers(1, size), replace=False)
            outs = rng.choice(size, rng.integers(1, size), replace=False)
            plan = PrunedPlan(size, ins, outs)
            assert plan.mults <= full
            assert plan.nontrivial_mults <= plan.mults

    def test_pruned_output_equals_unpruned(self):
        rng = np.random.default_rng(6)
        size = 64
        ins = rng.choice(size, 10, replace=False)
        outs = rng.choice(size, 12, replace=False)
        x = np.zeros((3, size), complex)
        x[:, ins] = random_symbols(rng, (3, 10))
        plan = PrunedPlan(size, ins, outs, inverse=True)
        full = np.fft.ifft(x, axis=-1) * size
        np.testing.assert_allclose(plan.execute(x), full[:, outs], atol=1e-12)
        fwd = PrunedPlan(size, ins, outs, inverse=False)
        np.testing.assert_allclose(fwd.execute(x), np.fft.fft(x, axis=-1)[:, outs], atol=1e-12)


class TestCountOps:
    def test_ifrft(self):
        ops = count_ops("ifrft", 8, CF78)
        assert (ops.complex_mults, ops.complex_adds) == (64, 56)

    def test_pruned_is_56(self):
        assert count_ops("pruned-cn-ifft", 8, CF78).complex_mults == 56
        assert 192 * (1 - prune_savings(PruneSpec.for_nofdm(8, CF78))) == pytest.approx(56)

    def test_unpruned_upper_bound(self):
        assert count_ops("cn-ifft", 8, CF78).complex_mults == 192
        assert count_ops("multi-ifft", 8, CF78).complex_mults == 64 * 3 // 2 + 64

    def test_multi_ifft_measured(self):
        # per 8-point IFFT only W8^1 and W8^3 cost anything: 2 twiddles x 8 branches,
        # plus the 64 output rotations minus the 16 with n*i divisible by 16
        ops = count_multi_ifft(8, CF78)
        assert ops.kind == "measured"
        assert ops.complex_mults == 16 + 48
        assert ops.complex_mults < count_ops("multi-ifft", 8, CF78).complex_mults

    def test_multi_ifft_measured_skips_empty_branches(self):
        # N=4, alpha=7/8: symbols land in branches {0, 5, 6, 7} of 8, the
        # 4-point twiddles are all trivial and each non-zero branch rotates 3 outputs
        assert count_multi_ifft(4, CF78).complex_mults == 9
        assert count_multi_ifft(8, CompressionFactor(2, 3)) is None

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            count_ops("dft", 8, CF78)


class TestInterferenceMatrix:
    def test_identity_when_orthogonal(self):
        np.testing.assert_allclose(interference_matrix(8, CompressionFactor(1, 1)), np.eye(8), atol=1e-14)

    def test_hermitian_unit_diagonal(self):
        C = interference_matrix(8, CF78)
        np.testing.assert_allclose(C, C.conj().T, atol=1e-14)
        np.testing.assert_allclose(np.diag(C), 1.0)

    def test_c01_against_direct_sum(self):
        n = np.arange(8)
        oracle = abs(np.exp(2j * np.pi * n * 7 / 64).sum()) / 8
        C = interference_matrix(8, CF78)
        assert abs(C[0, 1]) == pytest.approx(oracle, rel=1e-12)
        assert abs(C[0, 1]) == pytest.approx(0.1420, abs=1e-4)

    def test_spectral_radius_below_one(self):
        C = interference_matrix(8, CF78)
        assert max(abs(np.linalg.eigvals(C - np.eye(8)))) < 1


class TestDemod:
    def test_unitary_at_alpha_one(self):
        rng = np.random.default_rng(7)
        X = random_symbols(rng, (20, 8))
        cf = CompressionFactor(1, 1)
        np.testing.assert_allclose(nofdm_demod(nofdm_mod(X, cf), cf), X, atol=1e-12)

    def test_demod_of_mod_is_c_x(self):
        rng = np.random.default_rng(8)
        X = random_symbols(rng, (20, 8))
        C = interference_matrix(8, CF78)
        np.testing.assert_allclose(nofdm_demod(ifrft_direct(X, CF78), CF78), X @ C.T, atol=1e-9)

    def test_matches_matrix(self):
        rng = np.random.default_rng(9)
        x = random_symbols(rng, 8)
        A = modulation_matrix(8, CF78)
        np.testing.assert_allclose(nofdm_demod(x, CF78), A.conj().T @ x, atol=1e-12)

    def test_zeros(self):
        assert np.all(nofdm_demod(np.zeros(8), CF78) == 0)

    def test_empty(self):
        with pytest.raises(ValueError):
            nofdm_demod([], CF78)
