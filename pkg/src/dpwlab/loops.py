"""Finite matrix Laurent series on the unit circle.

A LaurentLoop stores coefficients A_k, kmin <= k <= kmax, of
gamma(lambda) = sum_k A_k lambda^k with n x n complex matrix coefficients.
Products are exact convolutions truncated to the working band |k| <= trunc,
with the discarded mass accounted for. Circle sampling and coefficient
recovery switch between the spectral and coefficient representations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError

DEFAULT_TRUNC = 32
MEMBERSHIP_TOL = 1e-8


def _pow2_at_least(m: int) -> int:
    p = 1
    while p < m:
        p *= 2
    return p


@dataclass(frozen=True)
class LaurentLoop:
    """Matrix Laurent polynomial sum A_k lambda^k, kmin <= k <= kmax."""

    coeffs: np.ndarray  # (K, n, n) complex, index k - kmin
    kmin: int
    trunc: int = DEFAULT_TRUNC
    truncation_error: float = 0.0  # accumulated discarded-mass estimate

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise ValueError(f"coefficients must be (K, n, n), got {c.shape}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def kmax(self) -> int:
        return self.kmin + self.coeffs.shape[0] - 1

    @property
    def bandwidth(self) -> int:
        return self.coeffs.shape[0]

    # ---- constructors -------------------------------------------------

    @staticmethod
    def identity(n: int, trunc: int = DEFAULT_TRUNC) -> "LaurentLoop":
        return LaurentLoop(np.eye(n, dtype=complex)[np.newaxis], 0, trunc)

    @staticmethod
    def constant(a, trunc: int = DEFAULT_TRUNC) -> "LaurentLoop":
        a = np.asarray(a, dtype=complex)
        return LaurentLoop(a[np.newaxis], 0, trunc)

    @staticmethod
    def monomial(a, k: int, trunc: int = DEFAULT_TRUNC) -> "LaurentLoop":
        a = np.asarray(a, dtype=complex)
        return LaurentLoop(a[np.newaxis], k, trunc)

    @staticmethod
    def from_coeffs(terms: dict[int, np.ndarray], n: int, trunc: int = DEFAULT_TRUNC) -> "LaurentLoop":
        if not terms:
            return LaurentLoop(np.zeros((1, n, n), dtype=complex), 0, trunc)
        kmin, kmax = min(terms), max(terms)
        c = np.zeros((kmax - kmin + 1, n, n), dtype=complex)
        for k, a in terms.items():
            c[k - kmin] = np.asarray(a, dtype=complex)
        return LaurentLoop(c, kmin, trunc)

    # ---- coefficient access -------------------------------------------

    def coefficient(self, k: int) -> np.ndarray:
        if self.kmin <= k <= self.kmax:
            return self.coeffs[k - self.kmin]
        return np.zeros((self.n, self.n), dtype=complex)

    def pad_to(self, kmin: int, kmax: int) -> np.ndarray:
        """Coefficient array on the window [kmin, kmax], zero padded."""
        out = np.zeros((kmax - kmin + 1, self.n, self.n), dtype=complex)
        lo, hi = max(kmin, self.kmin), min(kmax, self.kmax)
        if lo <= hi:
            out[lo - kmin : hi - kmin + 1] = self.coeffs[lo - self.kmin : hi - self.kmin + 1]
        return out

    def coeff_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=(1, 2))

    def max_norm(self) -> float:
        return float(self.coeff_norms().max())

    def trimmed(self, tol: float = 1e-13) -> "LaurentLoop":
        """Drop leading/trailing coefficient blocks below tol * max coefficient norm."""
        norms = self.coeff_norms()
        scale = norms.max()
        if scale == 0.0:
            return LaurentLoop(self.coeffs[:1] * 0.0, 0, self.trunc, self.truncation_error)
        keep = np.nonzero(norms > tol * scale)[0]
        lo, hi = int(keep[0]), int(keep[-1])
        return LaurentLoop(self.coeffs[lo : hi + 1], self.kmin + lo, self.trunc, self.truncation_error)

    def window(self, kmin: int, kmax: int) -> tuple["LaurentLoop", float]:
        """Restrict to [kmin, kmax]; returns (loop, discarded mass)."""
        if kmax < kmin:
            discarded = float(self.coeff_norms().sum())
            zero = np.zeros((1, self.n, self.n), dtype=complex)
            return LaurentLoop(zero, 0, self.trunc, self.truncation_error + discarded), discarded
        inside = self.pad_to(kmin, kmax)
        norms = self.coeff_norms()
        ks = np.arange(self.kmin, self.kmax + 1)
        discarded = float(norms[(ks < kmin) | (ks > kmax)].sum())
        return LaurentLoop(inside, kmin, self.trunc, self.truncation_error + discarded), discarded

    # ---- algebra -------------------------------------------------------

    def __mul__(self, other: "LaurentLoop") -> "LaurentLoop":
        return loop_mul(self, other)

    def scale(self, c: complex) -> "LaurentLoop":
        return replace(self, coeffs=self.coeffs * c)

    def add(self, other: "LaurentLoop") -> "LaurentLoop":
        if self.n != other.n:
            raise ValueError("matrix size mismatch")
        kmin = min(self.kmin, other.kmin)
        kmax = max(self.kmax, other.kmax)
        c = self.pad_to(kmin, kmax) + other.pad_to(kmin, kmax)
        return LaurentLoop(c, kmin, min(self.trunc, other.trunc),
                           self.truncation_error + other.truncation_error)

    def adjoint(self) -> "LaurentLoop":
        """Pointwise Hermitian adjoint on the circle: coefficients (A_{-k})^*."""
        c = np.conj(np.swapaxes(self.coeffs[::-1], 1, 2))
        return LaurentLoop(c, -self.kmax, self.trunc, self.truncation_error)

    # ---- evaluation and sampling ----------------------------------------

    def eval(self, lam: complex) -> np.ndarray:
        """Evaluate at a nonzero point by split Horner in lambda and 1/lambda."""
        if lam == 0:
            if self.kmin < 0:
                raise ZeroDivisionError("loop has a pole at lambda = 0")
            return self.coefficient(0).copy()
        n = self.n
        pos = np.zeros((n, n), dtype=complex)
        for k in range(self.kmax, -1, -1):
            pos = pos * lam + self.coefficient(k)
        neg = np.zeros((n, n), dtype=complex)
        if self.kmin < 0:
            inv = 1.0 / lam
            # Horner in 1/lambda: ((A_kmin * inv + A_{kmin+1}) * inv + ...) * inv
            for k in range(self.kmin, 0):
                neg = (neg + self.coefficient(k)) * inv
        return pos + neg

    def eval_unit(self, theta_count: int) -> np.ndarray:
        """Values at theta_count uniform points on the circle, shape (P, n, n)."""
        lams, vals = circle_sample(self, theta_count)
        return vals

    # ---- membership predicates ------------------------------------------

    def based_defect(self) -> float:
        return float(np.linalg.norm(self.eval(1.0) - np.eye(self.n)))

    def is_based(self, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.based_defect() < tol

    def unitary_circle_defect(self, samples: int = 64) -> float:
        vals = self.eval_unit(max(samples, _pow2_at_least(2 * self.bandwidth + 1)))
        g = np.conj(np.swapaxes(vals, 1, 2)) @ vals - np.eye(self.n)
        return float(np.linalg.norm(g, axis=(1, 2)).max())

    def is_unitary_circle(self, tol: float = MEMBERSHIP_TOL, samples: int = 64) -> bool:
        return self.unitary_circle_defect(samples) < tol

    def mass_below(self, k0: int) -> float:
        """Total norm of coefficients at frequencies < k0."""
        norms = self.coeff_norms()
        ks = np.arange(self.kmin, self.kmax + 1)
        return float(norms[ks < k0].sum())

    def is_plus(self, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.mass_below(0) < tol

    def is_minus_one_infty(self, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.mass_below(-1) < tol

    def twist_defect(self, q0: np.ndarray) -> float:
        """max_k ||Q0 A_k Q0 - (-1)^k A_k||."""
        q0 = np.asarray(q0, dtype=complex)
        signs = np.array([(-1.0) ** k for k in range(self.kmin, self.kmax + 1)])
        d = q0 @ self.coeffs @ q0 - signs[:, np.newaxis, np.newaxis] * self.coeffs
        return float(np.linalg.norm(d, axis=(1, 2)).max())

    def is_twisted(self, q0: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.twist_defect(q0) < tol

    # ---- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "kmin": self.kmin,
            "kmax": self.kmax,
            "coeffs": [
                [[[float(v.real), float(v.imag)] for v in row] for row in mat]
                for mat in self.coeffs
            ],
        }

    @staticmethod
    def from_json(obj: dict, trunc: int = DEFAULT_TRUNC) -> "LaurentLoop":
        n = int(obj["n"])
        kmin, kmax = int(obj["kmin"]), int(obj["kmax"])
        raw = obj["coeffs"]
        if len(raw) != kmax - kmin + 1:
            raise ValueError("coefficient count does not match the band")
        c = np.empty((kmax - kmin + 1, n, n), dtype=complex)
        for i, mat in enumerate(raw):
            for r, row in enumerate(mat):
                for s, (re, im) in enumerate(row):
                    c[i, r, s] = complex(re, im)
        return LaurentLoop(c, kmin, trunc)


def adjoint_reality_defect(a: LaurentLoop) -> float:
    """max_k ||A_k - conj(A_{-k})|| with entrywise conjugation.

    Zero exactly when the loop satisfies the entrywise reality condition
    gamma(lambda)-bar = gamma(1/lambda-bar) on coefficients.
    """
    kw = max(abs(a.kmin), abs(a.kmax))
    c = a.pad_to(-kw, kw)
    d = c - np.conj(c[::-1])
    return float(np.linalg.norm(d, axis=(1, 2)).max())


def loop_mul(a: LaurentLoop, b: LaurentLoop, window: int | None = None) -> LaurentLoop:
    """Product loop by exact coefficient convolution, truncated to |k| <= window.

    The default window is the (shared) working truncation. Mass discarded by
    the truncation is added to the result's truncation_error. Direct summation
    keeps the identity an exact two-sided unit (no transform rounding).
    """
    if a.n != b.n:
        raise ValueError(f"matrix size mismatch: {a.n} vs {b.n}")
    if a.trunc != b.trunc:
        raise ValueError(f"incompatible truncation windows: {a.trunc} vs {b.trunc}")
    m = a.trunc if window is None else window
    ka, kb = a.bandwidth, b.bandwidth
    full = np.zeros((ka + kb - 1, a.n, a.n), dtype=complex)
    for i in range(ka):
        full[i : i + kb] += a.coeffs[i] @ b.coeffs
    kmin_full = a.kmin + b.kmin
    prod = LaurentLoop(full, kmin_full, a.trunc, a.truncation_error + b.truncation_error)
    out, _ = prod.window(max(kmin_full, -m), min(prod.kmax, m))
    return out


def circle_sample(a: LaurentLoop, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Values at `samples` uniform unit-circle points exp(2 pi i s / P)."""
    if samples < 1:
        raise ValueError("need at least one sample")
    lams = np.exp(2j * np.pi * np.arange(samples) / samples)
    ks = np.arange(a.kmin, a.kmax + 1)
    vdm = lams[:, np.newaxis] ** ks[np.newaxis, :]  # (P, K)
    vals = np.tensordot(vdm, a.coeffs, axes=(1, 0))  # (P, n, n)
    return lams, vals


def coeff_recover(values: np.ndarray, kmin: int, kmax: int,
                  trunc: int = DEFAULT_TRUNC) -> LaurentLoop:
    """Recover coefficients on [kmin, kmax] from uniform circle samples.

    Exact (up to rounding) when the sampled function is a Laurent polynomial
    whose band fits in `values.shape[0]` frequencies; raises when the
    requested band is wider than the sample count.
    """
    vals = np.asarray(values, dtype=complex)
    p = vals.shape[0]
    if kmax - kmin + 1 > p:
        raise NumericalError(
            f"sample count {p} below requested bandwidth {kmax - kmin + 1}"
        )
    # A_k = (1/P) sum_s V_s lam_s^{-k}
    fhat = np.fft.fft(vals, axis=0) / p  # fhat[m] = (1/P) sum_s V_s e^{-2 pi i m s / P}
    idx = np.mod(np.arange(kmin, kmax + 1), p)
    return LaurentLoop(fhat[idx], kmin, trunc)


def dft_roundtrip_defect(a: LaurentLoop, samples: int) -> float:
    """Distance between a loop and its sample-then-recover image.

    Positive when `samples` is below the loop bandwidth (deliberate aliasing);
    at rounding level otherwise.
    """
    _, vals = circle_sample(a, samples)
    half = samples // 2
    rec = coeff_recover(vals, -half, samples - half - 1, a.trunc)
    kmin = min(a.kmin, rec.kmin)
    kmax = max(a.kmax, rec.kmax)
    d = a.pad_to(kmin, kmax) - rec.pad_to(kmin, kmax)
    return float(np.linalg.norm(d, axis=(1, 2)).max())


def loop_inverse(a: LaurentLoop, samples: int | None = None,
                 residual_tol: float = 1e-9) -> LaurentLoop:
    """Pointwise inverse on the circle, recovered into the working band.

    Samples at a power-of-two count (default 4 * trunc, at least twice the
    bandwidth), inverts per sample, recovers coefficients on |k| <= trunc and
    checks the residual ||a a^-1 - I|| on the samples. Raises on singular
    samples or when aliasing pushes the residual above residual_tol.
    """
    min_samples = 2 * a.bandwidth + 1
    if samples is None:
        samples = _pow2_at_least(max(4 * a.trunc, min_samples))
    else:
        if samples < min_samples:
            raise NumericalError(
                f"samples={samples} below 2*bandwidth+1={min_samples}")
        samples = _pow2_at_least(samples)
    _, vals = circle_sample(a, samples)
    svals = np.linalg.svd(vals, compute_uv=False)
    if np.any(svals[:, -1] <= 0) or np.any(svals[:, 0] / svals[:, -1] > 1e14):
        raise NumericalError("loop is singular (or nearly so) at a circle sample")
    inv_vals = np.linalg.inv(vals)
    m = a.trunc
    inv = coeff_recover(inv_vals, -m, m, a.trunc).trimmed()
    check = loop_mul(a, inv)
    _, cv = circle_sample(check, samples)
    resid = float(np.linalg.norm(cv - np.eye(a.n), axis=(1, 2)).max())
    if resid > residual_tol:
        raise NumericalError(
            f"inverse residual {resid:.3e} above {residual_tol:.1e}; "
            f"increase the truncation window or the sample count")
    return replace(inv, truncation_error=inv.truncation_error + resid)


def loop_distance(a: LaurentLoop, b: LaurentLoop) -> float:
    """Max coefficient-norm distance over the union band."""
    kmin = min(a.kmin, b.kmin)
    kmax = max(a.kmax, b.kmax)
    d = a.pad_to(kmin, kmax) - b.pad_to(kmin, kmax)
    return float(np.linalg.norm(d, axis=(1, 2)).max())


# ---------------------------------------------------------------------------
# batched band arithmetic on coefficient arrays (..., K, n, n)
#
# These are the hot-path primitives behind field integration and dressing;
# they mirror the LaurentLoop operations without per-point object overhead.


def band_conv(a: np.ndarray, ka: int, b: np.ndarray, kb: int):
    """Pointwise loop product of band arrays; returns (arr, kmin)."""
    la, lb = a.shape[-3], b.shape[-3]
    p = _pow2_at_least(la + lb - 1)
    fa = np.fft.fft(a, n=p, axis=-3)
    fb = np.fft.fft(b, n=p, axis=-3)
    out = np.fft.ifft(fa @ fb, axis=-3)[..., : la + lb - 1, :, :]
    return out, ka + kb


def band_window(a: np.ndarray, kmin: int, lo: int, hi: int) -> np.ndarray:
    """Restrict a band array to [lo, hi], zero padded where needed."""
    shape = a.shape[:-3] + (hi - lo + 1,) + a.shape[-2:]
    out = np.zeros(shape, dtype=complex)
    kmax = kmin + a.shape[-3] - 1
    s, e = max(lo, kmin), min(hi, kmax)
    if s <= e:
        out[..., s - lo : e - lo + 1, :, :] = a[..., s - kmin : e - kmin + 1, :, :]
    return out


def band_add(a: np.ndarray, ka: int, b: np.ndarray, kb: int):
    """Sum of band arrays on the union band; returns (arr, kmin)."""
    lo = min(ka, kb)
    hi = max(ka + a.shape[-3], kb + b.shape[-3]) - 1
    out = band_window(a, ka, lo, hi)
    out += band_window(b, kb, lo, hi)
    return out, lo


def band_eval(a: np.ndarray, kmin: int, lams: np.ndarray) -> np.ndarray:
    """Values of band arrays (..., K, n, n) at points lams (P,): (..., P, n, n)."""
    ks = np.arange(kmin, kmin + a.shape[-3])
    vdm = np.asarray(lams)[:, np.newaxis] ** ks[np.newaxis, :]
    return np.einsum("pk,...kij->...pij", vdm, a)
