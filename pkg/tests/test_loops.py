import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwlab.errors import NumericalError
from dpwlab.loops import (LaurentLoop, adjoint_reality_defect, band_add,
                          band_conv, band_eval, band_window, circle_sample,
                          coeff_recover, dft_roundtrip_defect, loop_distance,
                          loop_inverse, loop_mul)
from dpwlab.matrices import hermitian_projection


def pi_line():
    """Projection onto span(1, 2i)/sqrt(5)."""
    return hermitian_projection(np.array([[1.0], [2.0j]]) / np.sqrt(5.0))


def uniton_loop(pi):
    comp = np.eye(pi.shape[0]) - pi
    return LaurentLoop.from_coeffs({0: pi, -1: comp}, pi.shape[0])


def random_loop(seed, n=2, kmin=-3, kmax=3, scale=0.2):
    rng = np.random.default_rng(seed)
    terms = {k: scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
             for k in range(kmin, kmax + 1)}
    terms[0] = terms.get(0, 0) + np.eye(n)
    return LaurentLoop.from_coeffs(terms, n)


class TestMul:
    def test_identity_two_sided(self):
        a = random_loop(0)
        eye = LaurentLoop.identity(2)
        assert loop_distance(loop_mul(a, eye), a) == 0.0
        assert loop_distance(loop_mul(eye, a), a) == 0.0

    def test_uniton_pair_cancels(self):
        pi = pi_line()
        comp = np.eye(2) - pi
        left = uniton_loop(pi)
        right = LaurentLoop.from_coeffs({0: pi, 1: comp}, 2)
        prod = loop_mul(left, right)
        assert loop_distance(prod, LaurentLoop.identity(2)) < 1e-15

    def test_index_arithmetic(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((2, 2)) + 0j
        b = rng.standard_normal((2, 2)) + 0j
        prod = loop_mul(LaurentLoop.monomial(a, -1), LaurentLoop.monomial(b, 1))
        np.testing.assert_allclose(prod.coefficient(0), a @ b, atol=1e-14)
        assert prod.coeff_norms()[np.arange(prod.kmin, prod.kmax + 1) != 0].sum() < 1e-14

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="size"):
            loop_mul(LaurentLoop.identity(2), LaurentLoop.identity(3))

    def test_truncation_mass_accounted(self):
        a = LaurentLoop.monomial(np.eye(2), 20, trunc=32)
        prod = loop_mul(a, a)  # lands at frequency 40, outside |k| <= 32
        assert prod.max_norm() < 1e-14
        assert prod.truncation_error > 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_associative(self, seed):
        a = random_loop(seed, kmin=-2, kmax=2, scale=0.3)
        b = random_loop(seed + 1, kmin=-2, kmax=2, scale=0.3)
        c = random_loop(seed + 2, kmin=-2, kmax=2, scale=0.3)
        left = loop_mul(loop_mul(a, b), c)
        right = loop_mul(a, loop_mul(b, c))
        assert loop_distance(left, right) < 1e-12

    def test_eval_commutes_with_mul(self):
        a, b = random_loop(5), random_loop(6)
        prod = loop_mul(a, b)
        for lam in (1.0, -1.0, np.exp(0.7j)):
            np.testing.assert_allclose(prod.eval(lam), a.eval(lam) @ b.eval(lam),
                                       atol=1e-12)


class TestInverse:
    def test_identity(self):
        inv = loop_inverse(LaurentLoop.identity(3))
        assert loop_distance(inv, LaurentLoop.identity(3)) < 1e-14

    def test_uniton_loop(self):
        pi = pi_line()
        comp = np.eye(2) - pi
        inv = loop_inverse(uniton_loop(pi))
        expected = LaurentLoop.from_coeffs({0: pi, 1: comp}, 2)
        assert loop_distance(inv, expected) < 1e-12

    def test_nilpotent_exponential(self):
        n = np.array([[0.0, 1.0], [0.0, 0.0]])
        loop = LaurentLoop.from_coeffs({0: np.eye(2), -1: n}, 2)  # exp(lam^-1 N)
        inv = loop_inverse(loop)
        expected = LaurentLoop.from_coeffs({0: np.eye(2), -1: -n}, 2)
        assert loop_distance(inv, expected) < 1e-12

    def test_residual_property(self):
        # well-conditioned loops with bandwidth <= trunc/2
        for seed in range(5):
            a = random_loop(seed, kmin=-4, kmax=4, scale=0.02)
            inv = loop_inverse(a)
            prod = loop_mul(a, inv)
            _, vals = circle_sample(prod, 64)
            resid = np.linalg.norm(vals - np.eye(2), axis=(1, 2)).max()
            assert resid < 1e-9

    def test_singular_sample_rejected(self):
        # gamma(lambda) = diag(1, 1 - lambda) vanishes at lambda = 1
        loop = LaurentLoop.from_coeffs(
            {0: np.diag([1.0, 1.0]), 1: np.diag([0.0, -1.0])}, 2)
        with pytest.raises(NumericalError):
            loop_inverse(loop)

    def test_sample_floor_enforced(self):
        a = random_loop(0, kmin=-4, kmax=4)
        with pytest.raises(NumericalError, match="bandwidth"):
            loop_inverse(a, samples=4)


class TestEval:
    def test_uniton_at_minus_one(self):
        pi = pi_line()
        val = uniton_loop(pi).eval(-1.0)
        np.testing.assert_allclose(val, pi - (np.eye(2) - pi), atol=1e-14)

    def test_sum_at_one(self):
        a = random_loop(2)
        np.testing.assert_allclose(a.eval(1.0), a.coeffs.sum(axis=0), atol=1e-13)

    def test_pole_at_zero(self):
        with pytest.raises(ZeroDivisionError):
            uniton_loop(pi_line()).eval(0.0)

    def test_plus_loop_at_zero(self):
        a = LaurentLoop.from_coeffs({0: np.eye(2), 2: 0.5 * np.eye(2)}, 2)
        np.testing.assert_allclose(a.eval(0.0), np.eye(2), atol=1e-15)


class TestRealityAndPredicates:
    def test_real_constant(self):
        assert adjoint_reality_defect(LaurentLoop.constant(np.eye(2))) == 0.0

    def test_symmetric_pair(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        loop = LaurentLoop.from_coeffs({-1: a, 1: np.conj(a)}, 2)
        assert adjoint_reality_defect(loop) < 1e-15

    def test_missing_partner(self):
        a = np.array([[0.0, 2.0], [0.0, 0.0]])
        loop = LaurentLoop.monomial(a, -1)
        assert abs(adjoint_reality_defect(loop) - np.linalg.norm(a)) < 1e-14

    def test_membership_flags(self):
        pi = pi_line()
        loop = uniton_loop(pi)
        assert loop.is_based(1e-10)
        assert loop.is_unitary_circle(1e-10)
        assert not loop.is_plus(1e-10)
        assert loop.is_minus_one_infty(1e-10)

    def test_twisted_closure_under_product(self):
        q0 = np.diag([1.0, -1.0]).astype(complex)
        off = np.array([[0.0, 1.0], [0.5, 0.0]], dtype=complex)
        diag = np.diag([0.3, -0.2]).astype(complex)
        a = LaurentLoop.from_coeffs({0: np.eye(2) + diag, 1: off, -1: 0.5 * off}, 2)
        assert a.is_twisted(q0, 1e-12)
        prod = loop_mul(a, a)
        assert prod.is_twisted(q0, 1e-12)


class TestSamplingRecovery:
    def test_constant_any_count(self):
        a = LaurentLoop.constant(np.diag([2.0, 3.0]))
        for samples in (1, 2, 5):
            _, vals = circle_sample(a, samples)
            rec = coeff_recover(vals, 0, 0)
            assert loop_distance(rec, a) < 1e-14

    def test_nyquist_exact(self):
        a = random_loop(8, kmin=-1, kmax=1)  # bandwidth 3 fits in 8 samples
        assert dft_roundtrip_defect(a, 8) < 1e-13

    def test_deliberate_aliasing(self):
        a = random_loop(9, kmin=-5, kmax=5)  # 11 frequencies fold onto 8 samples
        assert dft_roundtrip_defect(a, 8) > 1e-3

    def test_band_wider_than_samples_rejected(self):
        vals = np.zeros((4, 2, 2), dtype=complex)
        with pytest.raises(NumericalError, match="sample count"):
            coeff_recover(vals, -4, 4)


class TestSerialization:
    def test_bit_exact_roundtrip(self):
        a = random_loop(12, kmin=-2, kmax=3)
        payload = json.dumps(a.to_json())
        back = LaurentLoop.from_json(json.loads(payload))
        assert back.kmin == a.kmin and back.kmax == a.kmax
        assert np.array_equal(back.coeffs, a.coeffs)


class TestBandHelpers:
    def test_conv_matches_loop_mul(self):
        a, b = random_loop(20), random_loop(21)
        arr, kmin = band_conv(a.coeffs[np.newaxis], a.kmin, b.coeffs[np.newaxis], b.kmin)
        direct = loop_mul(a, b, window=10 ** 6)
        assert loop_distance(LaurentLoop(arr[0], kmin), direct) < 1e-13

    def test_window_and_add(self):
        a = random_loop(22)
        arr = band_window(a.coeffs, a.kmin, -1, 1)
        assert arr.shape[0] == 3
        np.testing.assert_allclose(arr[1], a.coefficient(0), atol=0)
        s, kmin = band_add(a.coeffs, a.kmin, a.coeffs, a.kmin)
        assert kmin == a.kmin
        np.testing.assert_allclose(s, 2 * a.coeffs, atol=0)

    def test_eval_matches_loop_eval(self):
        a = random_loop(23)
        lams = np.exp(2j * np.pi * np.arange(5) / 5)
        vals = band_eval(a.coeffs, a.kmin, lams)
        for i, lam in enumerate(lams):
            np.testing.assert_allclose(vals[i], a.eval(lam), atol=1e-12)
