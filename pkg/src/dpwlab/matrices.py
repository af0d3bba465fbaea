"""Dense complex matrix kernels: canonical QR, Hermitian projections, SVD images.

Matrices are plain numpy arrays of complex128. Everything here is a pure
function; LAPACK (via numpy/scipy) does the heavy lifting and the contracts
are pinned by the tests.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import FactorizationError

COND_CAP = 1e12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def frobenius(a) -> float:
    return float(np.linalg.norm(np.asarray(a), "fro"))


def is_unitary(a, tol: float = 1e-8) -> bool:
    a = as_matrix(a)
    return frobenius(a.conj().T @ a - np.eye(a.shape[0])) < tol


def is_hermitian(a, tol: float = 1e-8) -> bool:
    a = as_matrix(a)
    return frobenius(a - a.conj().T) < tol


def is_projection(a, tol: float = 1e-8) -> bool:
    a = as_matrix(a)
    return frobenius(a @ a - a) < tol and is_hermitian(a, tol)


def qr_unitary_positive(a, cond_cap: float = COND_CAP):
    """Factor an invertible square matrix as U @ B.

    U is unitary and B upper triangular with strictly positive real diagonal,
    which makes the factorization unique. Raises FactorizationError when the
    input is singular or has 2-norm condition number above ``cond_cap``.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ValueError("qr_unitary_positive needs a square matrix")
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > cond_cap:
        raise FactorizationError(
            f"matrix is singular or ill conditioned (cond ~ {np.inf if sv[-1] == 0 else sv[0] / sv[-1]:.3e})"
        )
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r).copy()
    phases = np.where(np.abs(diag) > 0, diag / np.abs(diag), 1.0)
    u = q * phases[np.newaxis, :]
    b = r * (1.0 / phases)[:, np.newaxis]
    return u, b


def hermitian_projection(frame, tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projection onto the column space of a full-rank frame.

    ``frame`` is n x k with numerically full column rank; returns the n x n
    Hermitian idempotent P = F (F*F)^-1 F*.
    """
    f = as_matrix(frame)
    if f.shape[1] == 0:
        return np.zeros((f.shape[0], f.shape[0]), dtype=complex)
    sv = np.linalg.svd(f, compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    if rank < f.shape[1]:
        raise FactorizationError(
            f"frame is rank deficient: {rank} independent columns out of {f.shape[1]}"
        )
    q, _ = np.linalg.qr(f)
    return q @ q.conj().T


def projections_from_frames(frames: np.ndarray) -> np.ndarray:
    """Batched hermitian_projection: frames (..., n, k) -> projections (..., n, n)."""
    q, _ = np.linalg.qr(frames)
    return q @ np.conj(np.swapaxes(q, -1, -2))


def svd_image(a, rank_tol: float = 1e-8):
    """Numerical column space with thresholded rank.

    Returns (k, F) where F is n x k with orthonormal columns spanning the
    singular directions with sigma > rank_tol * sigma_max. The zero matrix
    yields (0, empty frame).
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    a = as_matrix(a)
    u, s, _ = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0.0:
        return 0, np.zeros((a.shape[0], 0), dtype=complex)
    k = int(np.sum(s > rank_tol * s[0]))
    return k, u[:, :k]


def kernel_frame(a, rank_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal frame of the numerical kernel of a (m x n) -> (n x d)."""
    a = as_matrix(a)
    _, s, vh = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(a.shape[1], dtype=complex)
    rank = int(np.sum(s > rank_tol * s[0]))
    return vh[rank:].conj().T


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential (scaling and squaring, via scipy)."""
    return scipy.linalg.expm(as_matrix(a))
