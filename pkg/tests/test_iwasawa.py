import numpy as np
import pytest
from math import factorial

from dpwlab.cli import random_invertible_loop
from dpwlab.errors import FactorizationError
from dpwlab.iwasawa import iwasawa_factorize, dressing_unitary_part
from dpwlab.loops import LaurentLoop, circle_sample, coeff_recover, loop_distance, loop_mul


def abelian_exponential(a: complex, trunc: int = 32) -> LaurentLoop:
    """gamma(lambda) = exp(a / lambda) as an explicit coefficient loop."""
    terms = {-k: np.array([[a ** k / factorial(k)]]) for k in range(0, 26)}
    return LaurentLoop.from_coeffs(terms, 1, trunc)


def abelian_expected(a: complex):
    """Oracle by direct circle sampling of the closed-form factors.

    The exponent splits as (a/lam - conj(a) lam + conj(a) - a) + (conj(a) lam
    + a - conj(a)): the first part is based and anti-Hermitian on the circle,
    the second has nonnegative band, and the two commute (scalars), so the
    factors are exp of each part.
    """
    p = 256
    lams = np.exp(2j * np.pi * np.arange(p) / p)
    phi_vals = np.exp(a / lams - np.conj(a) * lams + np.conj(a) - a)[:, None, None]
    b_vals = np.exp(np.conj(a) * lams + a - np.conj(a))[:, None, None]
    phi = coeff_recover(phi_vals, -32, 32).trimmed()
    b = coeff_recover(b_vals, 0, 32).trimmed()
    return phi, b


class TestTrivialCases:
    def test_identity(self):
        f = iwasawa_factorize(LaurentLoop.identity(2))
        assert loop_distance(f.phi, LaurentLoop.identity(2)) < 1e-14
        assert loop_distance(f.b, LaurentLoop.identity(2)) < 1e-14

    def test_plus_loop_forces_trivial_unitary_part(self):
        rng = np.random.default_rng(0)
        terms = {0: np.eye(2) + 0.2 * rng.standard_normal((2, 2)),
                 1: 0.3 * rng.standard_normal((2, 2)),
                 2: 0.1 * rng.standard_normal((2, 2))}
        g = LaurentLoop.from_coeffs(terms, 2)
        f = iwasawa_factorize(g)
        assert loop_distance(f.phi, LaurentLoop.identity(2)) < 1e-12
        assert loop_distance(f.b, g) < 1e-12

    def test_singular_on_circle_rejected(self):
        g = LaurentLoop.from_coeffs({0: np.diag([1.0, 1.0]), 1: np.diag([0.0, -1.0])}, 2)
        with pytest.raises(FactorizationError):
            iwasawa_factorize(g)


class TestAbelianClosedForm:
    @pytest.mark.parametrize("a", [0.4 + 0.3j, -0.25 + 0.55j])
    def test_matches_oracle(self, a):
        fact = iwasawa_factorize(abelian_exponential(a))
        phi_exp, b_exp = abelian_expected(a)
        assert loop_distance(fact.phi, phi_exp) < 1e-10
        assert loop_distance(fact.b, b_exp) < 1e-10
        assert fact.unitarity_defect < 1e-12
        assert fact.based_defect < 1e-12
        assert fact.plus_defect < 1e-12


class TestSelfConvergence:
    def test_truncation_refinement_oracle(self):
        # gamma = I + z lam^-1 N with N = E12, z = 1: factors at M agree with
        # a run at 2M, which is the only oracle available for this input
        n12 = np.array([[0.0, 1.0], [0.0, 0.0]])
        g16 = LaurentLoop.from_coeffs({0: np.eye(2), -1: n12}, 2, trunc=16)
        g32 = LaurentLoop.from_coeffs({0: np.eye(2), -1: n12}, 2, trunc=32)
        f16 = iwasawa_factorize(g16)
        f32 = iwasawa_factorize(g32)
        assert loop_distance(f16.phi, f32.phi) < 1e-8

    def test_uniqueness_across_truncations(self):
        # diffeomorphism claim at desk scale: M and 2M agree on the unitary part
        for seed in (3, 4):
            g = random_invertible_loop(seed, trunc=16, total=0.02)
            g2 = LaurentLoop(g.coeffs, g.kmin, 32)
            f1 = iwasawa_factorize(g)
            f2 = iwasawa_factorize(g2)
            assert loop_distance(f1.phi, f2.phi) < 1e-7


class TestBatteryInvariants:
    def test_round_trip_battery(self):
        # the acceptance suite runs 50 seeds; a slice keeps this module fast
        for seed in range(12):
            g = random_invertible_loop(seed)
            f = iwasawa_factorize(g)
            assert f.residual < 1e-8
            assert f.unitarity_defect < 1e-9
            assert f.based_defect < 1e-9
            assert f.plus_defect < 1e-10
            # independent re-multiplication check
            prod = loop_mul(f.phi, f.b, window=64)
            _, pv = circle_sample(prod, 64)
            _, gv = circle_sample(g, 64)
            assert np.linalg.norm(pv - gv, axis=(1, 2)).max() < 1e-8

    def test_unitary_part_invariant_under_plus_multiplication(self):
        rng = np.random.default_rng(42)
        g = random_invertible_loop(17)
        n = g.n
        p = LaurentLoop.from_coeffs(
            {0: np.eye(n) + 0.05 * rng.standard_normal((n, n)),
             1: 0.05 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))},
            n, trunc=g.trunc)
        f1 = iwasawa_factorize(g)
        f2 = iwasawa_factorize(loop_mul(g, p, window=48))
        assert loop_distance(f1.phi, f2.phi) < 1e-8

    def test_dressing_unitary_part_helper(self):
        g = random_invertible_loop(23)
        n = g.n
        h = LaurentLoop.from_coeffs({0: np.eye(n), 1: 0.1 * np.eye(n)}, n, g.trunc)
        f = dressing_unitary_part(h, g)
        assert f.residual < 1e-8
        assert f.phi.is_unitary_circle(1e-8)
