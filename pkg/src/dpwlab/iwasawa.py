"""Loop-group Iwasawa factorization: gamma = Phi b on the unit circle.

Phi is a based loop, unitary on S^1; b extends holomorphically to the disc
(nonnegative frequencies only). The factorization is computed in the
Grassmannian multiplication-operator model: the block Toeplitz matrix of
multiplication by gamma on span{lambda^j e_i : 0 <= j <= 2M} is
orthonormalized from the highest shift downward (a QL decomposition), and the
shift-0 block of the orthonormal factor is the unitary loop up to a constant,
which re-basing at lambda = 1 removes. Accuracy is controlled by the single
truncation parameter M; every defect the contract cares about is measured and
returned, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FactorizationError
from .loops import LaurentLoop, circle_sample, loop_mul, _pow2_at_least


@dataclass(frozen=True)
class IwasawaFactorization:
    phi: LaurentLoop
    b: LaurentLoop
    residual: float          # sup over circle samples of ||gamma - Phi b||
    unitarity_defect: float  # sup over circle samples of ||Phi* Phi - I||
    based_defect: float      # ||Phi(1) - I||
    plus_defect: float       # mass of b's coefficients below frequency 0
    window_tail: float       # unitary-part mass discarded outside |k| <= M


def _toeplitz_stack(coeffs: np.ndarray, kmin: int, m: int) -> tuple[np.ndarray, int]:
    """Multiplication-operator matrices for a stack of loops.

    coeffs: (B, K, n, n). Domain shifts j = 0..2M, output frequencies
    kmin..2M+kmax. Returns (B, F*n, (2M+1)*n) matrices and the row base
    frequency kmin.
    """
    b, k, n, _ = coeffs.shape
    kmax = kmin + k - 1
    shifts = 2 * m + 1
    fcount = 2 * m + kmax - kmin + 1
    fi = np.arange(fcount)[:, np.newaxis]
    j = np.arange(shifts)[np.newaxis, :]
    d = fi - j  # coefficient index into the K axis
    valid = (d >= 0) & (d <= k - 1)
    dcl = np.clip(d, 0, k - 1)
    blocks = coeffs[:, dcl] * valid[np.newaxis, :, :, np.newaxis, np.newaxis]
    mat = blocks.transpose(0, 1, 3, 2, 4).reshape(b, fcount * n, shifts * n)
    return mat, kmin


def _ql_first_block(t: np.ndarray, n: int) -> np.ndarray:
    """Orthonormalize columns from the last backwards; return the shift-0 block.

    Equivalent to a QL decomposition: flip both axes, QR, flip back, and take
    the first n columns of the orthonormal factor.
    """
    flipped = t[:, ::-1, ::-1]
    q, _ = np.linalg.qr(flipped)
    q = q[:, ::-1, ::-1]
    return q[:, :, :n]


def factorize_stack(coeffs: np.ndarray, kmin: int, trunc: int):
    """Factor a stack of loops sharing one band. Returns coefficient arrays.

    coeffs: (B, K, n, n) -> (phi (B, 2M+1, n, n) on [-M, M],
                             b (B, M+1, n, n) on [0, M],
                             diagnostics dict of (B,) arrays)
    """
    bsz, k, n, _ = coeffs.shape
    kmax = kmin + k - 1
    m = trunc

    t, row_base = _toeplitz_stack(coeffs, kmin, m)
    qblock = _ql_first_block(t, n)  # (B, F*n, n)
    fcount = qblock.shape[1] // n
    # row f_idx*n + r, column i of the shift-0 block is entry [r, i] of the
    # lambda^{row_base+f_idx} coefficient of Phi'
    phi_prime = qblock.reshape(bsz, fcount, n, n)

    freqs = np.arange(row_base, row_base + fcount)
    inside = (freqs >= -m) & (freqs <= m)
    norms = np.linalg.norm(phi_prime, axis=(2, 3))
    window_tail = norms[:, ~inside].sum(axis=1) if (~inside).any() else np.zeros(bsz)

    phi_win = np.zeros((bsz, 2 * m + 1, n, n), dtype=complex)
    phi_win[:, freqs[inside] + m] = phi_prime[:, inside]

    # re-base: Phi = Phi' * Phi'(1)^-1 so that Phi(1) = I exactly
    c = phi_win.sum(axis=1)
    try:
        cinv = np.linalg.inv(c)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"re-basing constant is singular: {exc}") from exc
    phi = phi_win @ cinv[:, np.newaxis]

    # b = Phi^* gamma by exact convolution (Phi is unitary on the circle up to
    # the measured defect, so the adjoint loop is its inverse there)
    phi_adj = np.conj(phi[:, ::-1].swapaxes(2, 3))  # band [-M, M]
    ka, kb_ = phi_adj.shape[1], k
    p = _pow2_at_least(ka + kb_ - 1)
    conv = np.fft.ifft(np.fft.fft(phi_adj, n=p, axis=1) @ np.fft.fft(coeffs, n=p, axis=1),
                       axis=1)[:, : ka + kb_ - 1]
    conv_kmin = -m + kmin
    bnorms = np.linalg.norm(conv, axis=(2, 3))
    bfreqs = np.arange(conv_kmin, conv_kmin + conv.shape[1])
    plus_defect = bnorms[:, bfreqs < 0].sum(axis=1)
    b_win = np.zeros((bsz, m + 1, n, n), dtype=complex)
    sel = (bfreqs >= 0) & (bfreqs <= m)
    b_win[:, bfreqs[sel]] = conv[:, sel]

    # residuals measured on circle samples
    samples = _pow2_at_least(max(4 * m, 2 * (k + 2 * m)))
    lams = np.exp(2j * np.pi * np.arange(samples) / samples)
    gvals = _loop_values(coeffs, kmin, lams)
    pvals = _loop_values(phi, -m, lams)
    bvals = _loop_values(b_win, 0, lams)
    resid = np.linalg.norm(gvals - pvals @ bvals, axis=(2, 3)).max(axis=1)
    udef = np.linalg.norm(np.conj(pvals.swapaxes(2, 3)) @ pvals - np.eye(n), axis=(2, 3)).max(axis=1)
    based = np.linalg.norm(phi.sum(axis=1) - np.eye(n), axis=(1, 2))

    diags = {
        "residual": resid,
        "unitarity_defect": udef,
        "based_defect": based,
        "plus_defect": plus_defect,
        "window_tail": window_tail,
    }
    return phi, b_win, diags


def _loop_values(coeffs: np.ndarray, kmin: int, lams: np.ndarray) -> np.ndarray:
    """Values of a coefficient stack (B, K, n, n) at circle points (P,)."""
    k = coeffs.shape[1]
    ks = np.arange(kmin, kmin + k)
    vdm = lams[:, np.newaxis] ** ks[np.newaxis, :]  # (P, K)
    return np.einsum("pk,bkij->bpij", vdm, coeffs)


def _check_invertible_on_circle(gamma: LaurentLoop, samples: int = 128) -> None:
    _, vals = circle_sample(gamma, _pow2_at_least(max(samples, 2 * gamma.bandwidth + 1)))
    sv = np.linalg.svd(vals, compute_uv=False)
    if np.any(sv[:, -1] == 0) or np.any(sv[:, 0] / sv[:, -1] > 1e13):
        worst = float(np.max(np.where(sv[:, -1] > 0, sv[:, 0] / np.maximum(sv[:, -1], 1e-300), np.inf)))
        raise FactorizationError(
            f"loop is singular or nearly singular on the circle (cond ~ {worst:.2e})")


def iwasawa_factorize(gamma: LaurentLoop, trunc: int | None = None,
                      residual_tol: float = 1e-6) -> IwasawaFactorization:
    """Split gamma into the based unitary factor and the plus factor.

    Raises FactorizationError when gamma is (nearly) singular on the circle or
    the measured reconstruction residual exceeds residual_tol, which signals
    that the truncation window is too small for this loop.
    """
    m = gamma.trunc if trunc is None else trunc
    _check_invertible_on_circle(gamma)
    phi_c, b_c, diags = factorize_stack(gamma.coeffs[np.newaxis], gamma.kmin, m)
    phi = LaurentLoop(phi_c[0], -m, m).trimmed()
    b = LaurentLoop(b_c[0], 0, m).trimmed()
    fact = IwasawaFactorization(
        phi=phi,
        b=b,
        residual=float(diags["residual"][0]),
        unitarity_defect=float(diags["unitarity_defect"][0]),
        based_defect=float(diags["based_defect"][0]),
        plus_defect=float(diags["plus_defect"][0]),
        window_tail=float(diags["window_tail"][0]),
    )
    if fact.residual > residual_tol:
        raise FactorizationError(
            f"factorization residual {fact.residual:.3e} exceeds {residual_tol:.1e}; "
            f"increase the truncation window (M={m})")
    return fact


def dressing_unitary_part(h: LaurentLoop, gamma: LaurentLoop,
                          trunc: int | None = None) -> IwasawaFactorization:
    """Factorization of h * gamma; the phi part is the dressing action of h."""
    prod = loop_mul(h, gamma, window=(trunc or gamma.trunc) + h.bandwidth + gamma.bandwidth)
    return iwasawa_factorize(prod, trunc)
