import numpy as np
import pytest

from dpwlab.demos import demo_grid, plane_line, plane_line_frame, sphere_flag
from dpwlab.errors import AdmissibilityError, ConfigError, NumericalError
from dpwlab.fields import GridSpec
from dpwlab.loops import LaurentLoop, loop_distance, loop_mul
from dpwlab.matrices import hermitian_projection
from dpwlab.potentials import (FramePoly, build_uniton_gauge, enlarged_class_report,
                               finite_type_potential, flatness_residual,
                               frame_projection_data, gauge_action, ker_minus_part,
                               plus_gauge, polynomial_potential, potential_from_json,
                               potential_to_json, Potential)


def unit(i, j, n):
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


class TestPolynomialPotential:
    def test_band_validation(self):
        bad = LaurentLoop.monomial(np.eye(2), -2)
        with pytest.raises(ConfigError, match="below frequency -1"):
            polynomial_potential(((0, bad),))

    def test_evaluation(self):
        c0 = LaurentLoop.monomial(unit(0, 1, 2), -1)
        c1 = LaurentLoop.constant(unit(1, 0, 2))
        mu = polynomial_potential(((0, c0), (2, c1)))
        xi = mu.xi(2.0)
        np.testing.assert_allclose(xi.coefficient(-1), unit(0, 1, 2), atol=1e-15)
        np.testing.assert_allclose(xi.coefficient(0), 4.0 * unit(1, 0, 2), atol=1e-15)
        arr, kmin = mu.xi_batch(np.array([2.0 + 0j]))
        assert kmin == -1
        np.testing.assert_allclose(arr[0], xi.pad_to(kmin, kmin + arr.shape[1] - 1))


class TestFiniteTypePotential:
    def test_even_exponent_rejected(self):
        eta = LaurentLoop.from_coeffs({-1: unit(0, 1, 2), 1: -unit(1, 0, 2)}, 2)
        with pytest.raises(ConfigError, match="odd"):
            finite_type_potential(2, eta)

    def test_reality_defect_rejected(self):
        # Hermitian nonzero zero-coefficient violates eta_{-k} = -eta_k^*
        eta = LaurentLoop.from_coeffs({0: np.eye(2)}, 2)
        with pytest.raises(ConfigError, match="reality"):
            finite_type_potential(1, eta)

    def test_twist_defect_rejected(self):
        diag = np.diag([1.0j, -1.0j]).astype(complex)  # even block at odd frequency
        eta = LaurentLoop.from_coeffs({-1: diag, 1: diag}, 2)
        with pytest.raises(ConfigError, match="twist"):
            finite_type_potential(1, eta, np.diag([1.0, -1.0]))

    def test_spec_demo_blocks(self):
        mu = sphere_flag()
        np.testing.assert_allclose(mu.eta_top, unit(0, 1, 2), atol=1e-15)
        np.testing.assert_allclose(mu.eta_top_minus, unit(0, 1, 2), atol=1e-15)
        assert mu.meta["eta_based_defect"] > 0.1  # diagnostic only, not an error

    def test_band_too_wide_rejected(self):
        eta = LaurentLoop.from_coeffs({-2: unit(0, 1, 2), 2: -unit(1, 0, 2)}, 2)
        with pytest.raises(ConfigError, match="band"):
            finite_type_potential(1, eta)


class TestKernelParts:
    def test_zero_block_full_kernel(self):
        eta = LaurentLoop.from_coeffs({-1: np.zeros((2, 2)), 1: np.zeros((2, 2))}, 2)
        mu = finite_type_potential(1, eta, np.diag([1.0, -1.0]))
        kd = ker_minus_part(mu)
        assert kd.minus_full.shape == (2, 2)  # whole space

    def test_demo_kernel_is_basepoint_line(self):
        mu = sphere_flag()  # eta^- = E12, kernel = span e1 = V0
        kd = ker_minus_part(mu)
        assert kd.minus_full.shape == (2, 1)
        np.testing.assert_allclose(np.abs(kd.minus_full[:, 0]), [1.0, 0.0], atol=1e-12)
        # nothing of the kernel lies in V0-perp here
        assert kd.minus_restricted.shape == (2, 0)

    def test_coefficient_kernel_variant(self):
        mu = sphere_flag()  # ker eta_{-1} = ker E12 = span e1
        kd = ker_minus_part(mu)
        assert kd.coefficient_full.shape == (2, 1)
        np.testing.assert_allclose(np.abs(kd.coefficient_full[:, 0]), [1.0, 0.0],
                                   atol=1e-12)


class TestUnitonGauge:
    def test_constant_basis_frame(self):
        g = build_uniton_gauge(FramePoly.constant(np.array([[1.0], [0.0]])))
        val = g.value(0.3 + 0.1j)
        np.testing.assert_allclose(val.coefficient(0), np.diag([1.0, 0.0]), atol=1e-14)
        np.testing.assert_allclose(val.coefficient(-1), np.diag([0.0, 1.0]), atol=1e-14)

    def test_moving_line_at_origin(self):
        frame = FramePoly(((0, np.array([[1.0], [0.0]])), (1, np.array([[0.0], [1.0]]))))
        g = build_uniton_gauge(frame)
        val = g.value(0.0)
        np.testing.assert_allclose(val.coefficient(0), np.diag([1.0, 0.0]), atol=1e-14)
        np.testing.assert_allclose(val.coefficient(-1), np.diag([0.0, 1.0]), atol=1e-14)

    def test_based_at_one_everywhere(self):
        frame = FramePoly(((0, np.array([[1.0], [0.0]])), (1, np.array([[0.0], [1.0]]))))
        g = build_uniton_gauge(frame)
        for z in (0.0, 0.3 - 0.2j, -0.1 + 0.4j):
            assert g.value(z).based_defect() < 1e-13

    def test_exact_projection_derivatives(self):
        frame = FramePoly(((0, np.array([[1.0], [0.0]])), (1, np.array([[0.0], [1.0]]))))
        pi, dpi, dbpi = frame_projection_data(frame, 0.0)
        np.testing.assert_allclose(pi, np.diag([1.0, 0.0]), atol=1e-14)
        np.testing.assert_allclose(dpi, unit(1, 0, 2), atol=1e-14)
        np.testing.assert_allclose(dbpi, unit(0, 1, 2), atol=1e-14)

    def test_rank_drop_flagging(self):
        # frame (z, z^2): rank drops at the origin but limits to the line e1 + z e2
        frame = FramePoly(((1, np.array([[1.0], [0.0]])), (2, np.array([[0.0], [1.0]]))))
        grid = demo_grid(samples=9)
        g = build_uniton_gauge(frame, grid)
        assert grid.origin_index in g.exceptional_points


class TestGaugeAction:
    def test_identity_gauge(self):
        mu = sphere_flag()
        grid = demo_grid(samples=9)
        h = plus_gauge(((0, LaurentLoop.identity(2, mu.trunc)),))
        out = gauge_action(h, mu, grid)
        for z in (0.0, 0.2 + 0.1j):
            assert loop_distance(out.xi(z), mu.xi(z)) < 1e-12

    def test_constant_unitary_conjugates(self):
        mu = sphere_flag()
        grid = demo_grid(samples=9)
        k = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
        h = plus_gauge(((0, LaurentLoop.constant(k, mu.trunc)),))
        out = gauge_action(h, mu, grid)
        z = 0.2 - 0.3j
        expected = {kk: k @ mu.xi(z).coefficient(kk) @ k.conj().T
                    for kk in (-1, 0, 1)}
        got = out.xi(z)
        for kk, mat in expected.items():
            np.testing.assert_allclose(got.coefficient(kk), mat, atol=1e-10)

    def test_constant_uniton_gauge_symbolic(self):
        # constant subbundle, mu = lam^-1 eta dz with pi_perp eta pi = 0:
        # result is lam^-1 (pi eta pi + pi_perp eta pi_perp) + pi eta pi_perp
        n = 3
        eta = unit(0, 1, n) + unit(2, 2, n)
        pi = np.diag([1.0, 0.0, 0.0]).astype(complex)
        comp = np.eye(n) - pi
        assert np.linalg.norm(comp @ eta @ pi) == 0.0
        mu = polynomial_potential(((0, LaurentLoop.monomial(eta, -1)),))
        gauge = build_uniton_gauge(FramePoly.constant(np.array([[1.0], [0.0], [0.0]])))
        grid = GridSpec(0.25, 9)
        out = gauge_action(gauge, mu, grid)
        xi = out.xi(0.17 - 0.05j)
        np.testing.assert_allclose(xi.coefficient(-2), np.zeros((n, n)), atol=1e-14)
        np.testing.assert_allclose(xi.coefficient(-1),
                                   pi @ eta @ pi + comp @ eta @ comp, atol=1e-14)
        np.testing.assert_allclose(xi.coefficient(0), pi @ eta @ comp, atol=1e-14)

    def test_group_action_for_constant_gauges(self):
        # trunc 32 keeps the geometric tail of the inverse gauges at rounding level
        mu = sphere_flag(trunc=32)
        grid = demo_grid(samples=9)
        rng = np.random.default_rng(1)
        x1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        x2 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        h1 = LaurentLoop.from_coeffs({0: np.eye(2) + 0.1 * x1, 1: 0.1 * x2}, 2, mu.trunc)
        h2 = LaurentLoop.from_coeffs({0: np.eye(2) + 0.1 * x2.conj(), 2: 0.1 * x1}, 2, mu.trunc)
        g1 = plus_gauge(((0, h1),))
        g2 = plus_gauge(((0, h2),))
        g12 = plus_gauge(((0, loop_mul(h1, h2)),))
        lhs = gauge_action(g12, mu, grid)
        rhs = gauge_action(g1, gauge_action(g2, mu, grid), grid)
        for z in (0.0, 0.1 + 0.2j):
            assert loop_distance(lhs.xi(z), rhs.xi(z)) < 1e-10

    def test_admissibility_rejected(self):
        mu = plane_line()  # xi_-1 = E13
        grid = demo_grid(samples=9)
        bad_frame = FramePoly.constant(np.array([[0.0], [0.0], [1.0]]))  # E13 e3 = e1 not in V
        with pytest.raises(AdmissibilityError, match="admissibility"):
            gauge_action(build_uniton_gauge(bad_frame), mu, grid)

    def test_enlarged_class_membership(self):
        mu = plane_line()
        grid = demo_grid(samples=9)
        out = gauge_action(build_uniton_gauge(plane_line_frame(), grid), mu, grid)
        rep = enlarged_class_report(out, grid)
        assert rep["xi_lambda_minus2_max"] < 1e-8
        assert rep["zeta_lambda_minus1_max"] < 1e-7


class TestFlatness:
    def test_holomorphic_is_flat(self):
        mu = sphere_flag()
        assert flatness_residual(mu, demo_grid(samples=9)) < 1e-9

    def test_gauged_potential_stays_flat(self):
        mu = plane_line()
        grid = demo_grid(samples=17)  # h = 1/32, the reference spacing
        out = gauge_action(build_uniton_gauge(plane_line_frame(), grid), mu, grid)
        assert flatness_residual(out, grid) < 1e-6

    def test_corrupted_dzbar_part_detected(self):
        mu = plane_line()
        grid = demo_grid(samples=17)
        out = gauge_action(build_uniton_gauge(plane_line_frame(), grid), mu, grid)

        def bad_zeta(zs, inner=out.zeta_batch_fn):
            arr, kmin = inner(zs)
            arr = arr.copy()
            arr[..., 0, 0] += 0.1 * np.abs(zs)[..., None] ** 2
            return arr, kmin

        corrupted = Potential(n=out.n, xi_fn=out.xi_fn, zeta_fn=out.zeta_fn,
                              kind="gauged", trunc=out.trunc,
                              xi_batch_fn=out.xi_batch_fn, zeta_batch_fn=bad_zeta)
        assert flatness_residual(corrupted, grid) > 1e-2


class TestJsonSchema:
    def test_finite_type_roundtrip(self):
        mu = sphere_flag()
        payload = potential_to_json(mu)
        back = potential_from_json(payload, mu.trunc)
        assert back.d == 1
        assert loop_distance(back.eta, mu.eta) == 0.0
        np.testing.assert_allclose(back.q0, mu.q0, atol=0)

    def test_polynomial_roundtrip(self):
        c0 = LaurentLoop.monomial(unit(0, 1, 2), -1)
        mu = polynomial_potential(((1, c0),))
        back = potential_from_json(potential_to_json(mu))
        assert back.terms[0][0] == 1
        assert loop_distance(back.terms[0][1], c0) == 0.0

    def test_unknown_keys_rejected(self):
        payload = potential_to_json(sphere_flag())
        payload["surprise"] = 1
        with pytest.raises(ConfigError, match="unknown keys"):
            potential_from_json(payload)

    def test_unknown_type_rejected(self):
        with pytest.raises(ConfigError, match="unknown potential type"):
            potential_from_json({"type": "mystery"})

    def test_schema_version_enforced(self):
        payload = potential_to_json(sphere_flag())
        payload["schema"] = 99
        with pytest.raises(ConfigError, match="schema"):
            potential_from_json(payload)
