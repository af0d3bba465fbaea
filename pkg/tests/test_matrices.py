import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwlab.errors import FactorizationError
from dpwlab.matrices import (hermitian_projection, is_hermitian, is_projection,
                             is_unitary, kernel_frame, matrix_exp,
                             qr_unitary_positive, svd_image)


class TestQRUnitaryPositive:
    def test_identity(self):
        u, b = qr_unitary_positive(np.eye(3))
        np.testing.assert_allclose(u, np.eye(3), atol=1e-14)
        np.testing.assert_allclose(b, np.eye(3), atol=1e-14)

    def test_diagonal_phases(self):
        # diag(2, 3i) = diag(1, i) * diag(2, 3), by column normalization
        a = np.diag([2.0, 3.0j])
        u, b = qr_unitary_positive(a)
        np.testing.assert_allclose(u, np.diag([1.0, 1.0j]), atol=1e-14)
        np.testing.assert_allclose(b, np.diag([2.0, 3.0]), atol=1e-14)

    def test_roundtrip_random(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 9))
            a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            a += 3.0 * np.eye(n)
            u, b = qr_unitary_positive(a)
            resid = np.linalg.norm(a - u @ b) / np.linalg.norm(a)
            assert resid < 1e-12
            assert is_unitary(u, 1e-12)
            assert np.all(np.diagonal(b).real > 0)
            assert np.all(np.abs(np.diagonal(b).imag) < 1e-12)
            assert np.linalg.norm(np.tril(b, -1)) < 1e-12

    def test_singular_rejected(self):
        with pytest.raises(FactorizationError):
            qr_unitary_positive(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_condition_cap(self):
        a = np.diag([1.0, 1e-14])
        with pytest.raises(FactorizationError):
            qr_unitary_positive(a)


class TestHermitianProjection:
    def test_basis_vector(self):
        p = hermitian_projection(np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(p, np.diag([1.0, 0.0]), atol=1e-14)

    def test_diagonal_line(self):
        f = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
        p = hermitian_projection(f)
        np.testing.assert_allclose(p, 0.5 * np.ones((2, 2)), atol=1e-14)

    def test_range_condition(self):
        rng = np.random.default_rng(3)
        f = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        p = hermitian_projection(f)
        np.testing.assert_allclose(p @ f, f, atol=1e-12)
        assert is_projection(p, 1e-12)

    def test_rank_deficient_rejected(self):
        f = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
        with pytest.raises(FactorizationError, match="columns"):
            hermitian_projection(f)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_idempotent_selfadjoint(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, n + 1))
        f = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
        p = hermitian_projection(f)
        assert np.linalg.norm(p @ p - p) < 1e-12
        assert is_hermitian(p, 1e-12)


class TestSvdImage:
    def test_diagonal(self):
        k, f = svd_image(np.diag([1.0, 0.0]), 1e-8)
        assert k == 1
        np.testing.assert_allclose(np.abs(f), np.array([[1.0], [0.0]]), atol=1e-14)

    def test_column_space(self):
        k, f = svd_image(np.array([[0.0, 0.0], [1.0, 0.0]]), 1e-8)
        assert k == 1
        np.testing.assert_allclose(f @ f.conj().T, np.diag([0.0, 1.0]), atol=1e-14)

    def test_threshold_semantics(self):
        a = np.diag([1.0, 1e-12])
        k, _ = svd_image(a, 1e-8)
        assert k == 1

    def test_zero_matrix(self):
        k, f = svd_image(np.zeros((3, 3)), 1e-8)
        assert k == 0 and f.shape == (3, 0)

    def test_complement_bound(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        tol = 1e-8
        k, f = svd_image(a, tol)
        smax = np.linalg.svd(a, compute_uv=False)[0]
        resid = np.linalg.norm((np.eye(4) - f @ f.conj().T) @ a)
        assert resid <= tol * smax * 2.0

    def test_kernel_frame(self):
        a = np.array([[0.0, 1.0], [0.0, 0.0]])
        f = kernel_frame(a)
        assert f.shape == (2, 1)
        np.testing.assert_allclose(np.abs(f[:, 0]), [1.0, 0.0], atol=1e-14)


class TestMatrixExp:
    def test_zero(self):
        np.testing.assert_allclose(matrix_exp(np.zeros((3, 3))), np.eye(3), atol=1e-15)

    def test_nilpotent_terminates(self):
        n = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(matrix_exp(n), np.eye(2) + n, atol=1e-15)

    def test_anti_hermitian_gives_unitary(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            a = x - x.conj().T
            assert is_unitary(matrix_exp(a), 1e-12)

    def test_inverse_pairing(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        a *= 10.0 / np.linalg.norm(a)
        resid = np.linalg.norm(matrix_exp(a) @ matrix_exp(-a) - np.eye(5))
        assert resid < 1e-10
