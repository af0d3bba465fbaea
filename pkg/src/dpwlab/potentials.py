"""Holomorphic potentials, their enlarged flat class, and gauge actions.

A potential is a loop-valued 1-form mu = xi(z) dz + zeta(z, z-bar) dz-bar
with xi in the once-negative band (lambda * xi holomorphic in the disc) and
zeta, when present, in the nonnegative band. Holomorphic potentials have no
dz-bar part; uniton gauges produce flat potentials with one.

Gauge maps act by h . mu = Ad_h(mu) - dh h^-1. Two kinds are supported:
z-polynomial plus-loop gauges (holomorphic, values in the nonnegative band)
and uniton gauges pi + lambda^-1 pi-perp built from a polynomial frame of a
holomorphic subbundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, ConfigError, NumericalError
from .fields import FD_MARGIN, GridSpec, complex_derivatives
from .loops import (DEFAULT_TRUNC, LaurentLoop, band_add, band_conv,
                    band_eval, band_window, loop_inverse, loop_mul)
from .matrices import hermitian_projection, kernel_frame, projections_from_frames

ADMISSIBILITY_REL_TOL = 1e-8


# ---------------------------------------------------------------------------
# polynomial frames F(z) = sum_j z^j F_j (columns span a holomorphic bundle)


@dataclass(frozen=True)
class FramePoly:
    """Polynomial n x k frame; columns span a z-holomorphic subbundle."""

    terms: tuple  # ((zpow, ndarray (n, k)), ...)

    def __post_init__(self):
        if not self.terms:
            raise ConfigError("frame needs at least one term")
        mats = [np.asarray(m, dtype=complex) for _, m in self.terms]
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise ConfigError("frame terms must share one shape")
        object.__setattr__(self, "terms",
                           tuple((int(p), m.copy()) for (p, _), m in zip(self.terms, mats)))

    @staticmethod
    def constant(mat) -> "FramePoly":
        return FramePoly(((0, np.asarray(mat, dtype=complex)),))

    @property
    def n(self) -> int:
        return self.terms[0][1].shape[0]

    @property
    def cols(self) -> int:
        return self.terms[0][1].shape[1]

    def value(self, z: complex) -> np.ndarray:
        out = np.zeros((self.n, self.cols), dtype=complex)
        for p, m in self.terms:
            out = out + (z ** p) * m
        return out

    def dvalue(self, z: complex) -> np.ndarray:
        out = np.zeros((self.n, self.cols), dtype=complex)
        for p, m in self.terms:
            if p > 0:
                out = out + p * (z ** (p - 1)) * m
        return out

    def value_grid(self, zs: np.ndarray) -> np.ndarray:
        out = np.zeros(zs.shape + (self.n, self.cols), dtype=complex)
        for p, m in self.terms:
            out += (zs ** p)[..., np.newaxis, np.newaxis] * m
        return out

    def dvalue_grid(self, zs: np.ndarray) -> np.ndarray:
        out = np.zeros(zs.shape + (self.n, self.cols), dtype=complex)
        for p, m in self.terms:
            if p > 0:
                out += (p * zs ** (p - 1))[..., np.newaxis, np.newaxis] * m
        return out

    def to_json(self) -> dict:
        return {"terms": [{"zpow": p,
                           "matrix": [[[float(v.real), float(v.imag)] for v in row] for row in m]}
                          for p, m in self.terms]}

    @staticmethod
    def from_json(obj: dict) -> "FramePoly":
        terms = []
        for t in obj["terms"]:
            m = np.array([[complex(re, im) for re, im in row] for row in t["matrix"]])
            terms.append((int(t["zpow"]), m))
        return FramePoly(tuple(terms))


def frame_projection_data(frame: FramePoly, z: complex):
    """(pi, d pi / dz, d pi / dz-bar) at z, by exact differentiation.

    pi = F G^-1 F* with G = F* F; then d pi = pi-perp F' G^-1 F* and the
    dz-bar derivative is its Hermitian adjoint.
    """
    f = frame.value(z)
    fp = frame.dvalue(z)
    g = f.conj().T @ f
    sol = np.linalg.solve(g, f.conj().T)  # G^-1 F*
    pi = f @ sol
    dpi = (np.eye(frame.n) - pi) @ fp @ sol
    return pi, dpi, dpi.conj().T


def frame_projection_data_grid(frame: FramePoly, zs: np.ndarray):
    """Batched frame_projection_data over an array of points."""
    f = frame.value_grid(zs)
    fp = frame.dvalue_grid(zs)
    fh = np.conj(f.swapaxes(-1, -2))
    g = fh @ f
    sol = np.linalg.solve(g, fh)
    pi = f @ sol
    dpi = (np.eye(frame.n) - pi) @ fp @ sol
    return pi, dpi, np.conj(dpi.swapaxes(-1, -2))


# ---------------------------------------------------------------------------
# potentials


@dataclass
class Potential:
    """mu = xi(z) dz [+ zeta(z, z-bar) dz-bar], loop valued.

    xi_fn / zeta_fn evaluate at a point; zeta_fn is None for holomorphic
    potentials. `constant` marks z-independence of xi with no dz-bar part,
    which unlocks the exact-exponential integration branch.
    """

    n: int
    xi_fn: object
    zeta_fn: object = None
    kind: str = "polynomial"
    constant: bool = False
    trunc: int = DEFAULT_TRUNC
    terms: tuple = ()  # (zpow, LaurentLoop) pairs when polynomial
    xi_batch_fn: object = None   # zs array -> (coeff array (..., K, n, n), kmin)
    zeta_batch_fn: object = None
    meta: dict = field(default_factory=dict)

    def xi(self, z: complex) -> LaurentLoop:
        return self.xi_fn(z)

    def zeta(self, z: complex):
        return None if self.zeta_fn is None else self.zeta_fn(z)

    @property
    def holomorphic(self) -> bool:
        return self.zeta_fn is None and self.zeta_batch_fn is None

    def xi_batch(self, zs: np.ndarray):
        """Vectorized xi over an array of points: (coeffs (..., K, n, n), kmin)."""
        if self.xi_batch_fn is not None:
            return self.xi_batch_fn(np.asarray(zs))
        zs = np.asarray(zs)
        loops = [self.xi(z) for z in zs.flat]
        kmin = min(l.kmin for l in loops)
        kmax = max(l.kmax for l in loops)
        arr = np.stack([l.pad_to(kmin, kmax) for l in loops])
        return arr.reshape(zs.shape + arr.shape[1:]), kmin

    def zeta_batch(self, zs: np.ndarray):
        """Vectorized zeta; None for holomorphic potentials."""
        if self.holomorphic:
            return None
        if self.zeta_batch_fn is not None:
            return self.zeta_batch_fn(np.asarray(zs))
        zs = np.asarray(zs)
        loops = [self.zeta(z) for z in zs.flat]
        kmin = min(l.kmin for l in loops)
        kmax = max(l.kmax for l in loops)
        arr = np.stack([l.pad_to(kmin, kmax) for l in loops])
        return arr.reshape(zs.shape + arr.shape[1:]), kmin

    def mu_minus1(self, z: complex) -> np.ndarray:
        return self.xi(z).coefficient(-1)

    def band_defect(self) -> float:
        """Mass of xi(0) below frequency -1 (once-negative-band membership)."""
        return self.xi(0.0).mass_below(-1)


def polynomial_potential(terms, trunc: int = DEFAULT_TRUNC,
                         band_tol: float = 1e-12) -> Potential:
    """Holomorphic potential xi(z) = sum_j z^j C_j with loop coefficients.

    Every coefficient loop must stay in the once-negative band.
    """
    terms = tuple((int(p), c) for p, c in terms)
    if not terms:
        raise ConfigError("potential needs at least one term")
    n = terms[0][1].n
    for p, c in terms:
        if c.n != n:
            raise ConfigError("potential coefficients must share the matrix size")
        if c.mass_below(-1) > band_tol:
            raise ConfigError(
                f"coefficient at z^{p} has mass {c.mass_below(-1):.2e} below frequency -1")

    def xi(z, _terms=terms, _n=n, _trunc=trunc):
        out = None
        for p, c in _terms:
            piece = c.scale(z ** p)
            out = piece if out is None else out.add(piece)
        return out

    kmin = min(c.kmin for _, c in terms)
    kmax = max(c.kmax for _, c in terms)

    def xi_batch(zs, _terms=terms, _kmin=kmin, _kmax=kmax, _n=n):
        out = np.zeros(zs.shape + (_kmax - _kmin + 1, _n, _n), dtype=complex)
        for p, c in _terms:
            out += (zs ** p)[..., np.newaxis, np.newaxis, np.newaxis] * c.pad_to(_kmin, _kmax)
        return out, _kmin

    constant = all(p == 0 for p, _ in terms)
    return Potential(n=n, xi_fn=xi, kind="polynomial", constant=constant,
                     trunc=trunc, terms=terms, xi_batch_fn=xi_batch)


@dataclass
class FiniteTypePotential(Potential):
    """Constant potential xi = lambda^(d-1) eta, d odd, eta in the band |k| <= d.

    eta must be anti-Hermitian on the circle (eta_{-k} = -eta_k^*); when a
    basepoint involution Q0 is given it must also be twisted. The top negative
    coefficient eta_{-d} and, in the twisted case, its Hom(V0-perp, V0) block
    are exposed for the kernel constructions.
    """

    d: int = 1
    eta: LaurentLoop = None
    q0: np.ndarray = None

    @property
    def eta_top(self) -> np.ndarray:
        """Coefficient eta_{-d}."""
        return self.eta.coefficient(-self.d)

    @property
    def pi0(self) -> np.ndarray:
        return 0.5 * (np.eye(self.n) + self.q0)

    @property
    def eta_top_minus(self) -> np.ndarray:
        """The Hom(V0-perp, V0) block of eta_{-d} (twisted case only)."""
        if self.q0 is None:
            raise ConfigError("eta_top_minus needs a basepoint involution Q0")
        p0 = self.pi0
        return p0 @ self.eta_top @ (np.eye(self.n) - p0)


def finite_type_potential(d: int, eta: LaurentLoop, q0=None,
                          reality_tol: float = 1e-10,
                          twist_tol: float = 1e-10) -> FiniteTypePotential:
    if d % 2 == 0 or d <= 0:
        raise ConfigError(f"the exponent d must be odd and positive, got {d}")
    if eta.kmin < -d or eta.kmax > d:
        raise ConfigError(f"eta band [{eta.kmin}, {eta.kmax}] exceeds |k| <= {d}")
    reality = _anti_hermitian_defect(eta)
    if reality > reality_tol:
        raise ConfigError(f"eta reality defect {reality:.2e} above {reality_tol:.1e} "
                          f"(need eta_(-k) = -eta_k*)")
    if q0 is not None:
        q0 = np.asarray(q0, dtype=complex)
        tw = eta.twist_defect(q0)
        if tw > twist_tol:
            raise ConfigError(f"eta twist defect {tw:.2e} above {twist_tol:.1e}")
    xi_loop = LaurentLoop(eta.coeffs, eta.kmin + d - 1, eta.trunc)

    def xi_batch(zs, _l=xi_loop):
        shape = zs.shape + _l.coeffs.shape
        return np.broadcast_to(_l.coeffs, shape).copy(), _l.kmin

    pot = FiniteTypePotential(
        n=eta.n,
        xi_fn=lambda z, _l=xi_loop: _l,
        kind="finite_type",
        constant=True,
        trunc=eta.trunc,
        terms=((0, xi_loop),),
        d=d, eta=eta, q0=q0,
        xi_batch_fn=xi_batch,
        meta={"eta_based_defect": eta.based_defect()},
    )
    return pot


def _anti_hermitian_defect(eta: LaurentLoop) -> float:
    kw = max(abs(eta.kmin), abs(eta.kmax))
    c = eta.pad_to(-kw, kw)
    d = c + np.conj(np.swapaxes(c[::-1], 1, 2))
    return float(np.linalg.norm(d, axis=(1, 2)).max())


@dataclass(frozen=True)
class KernelData:
    """Frames of the kernels attached to the top coefficient of eta."""

    minus_full: np.ndarray        # ker of the Hom(V0perp, V0) block as an n x n map
    minus_restricted: np.ndarray  # the same kernel intersected with V0perp
    coefficient_full: np.ndarray  # ker of eta_{-d} itself


def ker_minus_part(pot: FiniteTypePotential, rank_tol: float = 1e-10) -> KernelData:
    """Kernel frames of eta_{-d}-derived maps, via SVD.

    minus_full is the n x n kernel of the (0,1) block (it always contains V0);
    minus_restricted is its intersection with V0-perp, i.e. the kernel of the
    bundle morphism V0-perp -> V0. coefficient_full is ker eta_{-d}.
    """
    if pot.q0 is None:
        raise ConfigError("kernel extraction needs a twisted potential with Q0")
    em = pot.eta_top_minus
    full = kernel_frame(em, rank_tol)
    stacked = np.vstack([em, pot.pi0])
    restricted = kernel_frame(stacked, rank_tol)
    coeff_full = kernel_frame(pot.eta_top, rank_tol)
    return KernelData(full, restricted, coeff_full)


# ---------------------------------------------------------------------------
# gauge maps


@dataclass(frozen=True)
class GaugeMap:
    """A gauge h(z): plus type (z-polynomial plus loops) or uniton type."""

    kind: str  # "plus" | "uniton"
    loop_terms: tuple = ()   # plus: ((zpow, LaurentLoop), ...)
    frame: FramePoly = None  # uniton: polynomial frame of the subbundle
    exceptional_points: tuple = ()  # uniton: lattice points where the frame rank drops

    @property
    def n(self) -> int:
        if self.kind == "plus":
            return self.loop_terms[0][1].n
        return self.frame.n

    def value(self, z: complex) -> LaurentLoop:
        if self.kind == "plus":
            out = None
            for p, c in self.loop_terms:
                piece = c.scale(z ** p)
                out = piece if out is None else out.add(piece)
            return out
        pi, _, _ = frame_projection_data(self.frame, z)
        comp = np.eye(self.n) - pi
        return LaurentLoop.from_coeffs({0: pi, -1: comp}, self.n)

    def dvalue(self, z: complex) -> LaurentLoop:
        """Exact z-derivative of the gauge."""
        if self.kind == "plus":
            trunc = self.loop_terms[0][1].trunc
            out = LaurentLoop.constant(np.zeros((self.n, self.n)), trunc)
            for p, c in self.loop_terms:
                if p > 0:
                    out = out.add(c.scale(p * z ** (p - 1)))
            return out
        _, dpi, _ = frame_projection_data(self.frame, z)
        return LaurentLoop.from_coeffs({0: dpi, -1: -dpi}, self.n)

    def value_at_zero(self) -> LaurentLoop:
        return self.value(0.0)


def plus_gauge(terms) -> GaugeMap:
    terms = tuple((int(p), c) for p, c in terms)
    for _, c in terms:
        if not c.is_plus(1e-12):
            raise ConfigError("plus gauge coefficients must have nonnegative band")
    return GaugeMap(kind="plus", loop_terms=terms)


def build_uniton_gauge(frame: FramePoly, grid: GridSpec | None = None,
                       rank_tol: float = 1e-8) -> GaugeMap:
    """Uniton gauge pi + lambda^-1 pi-perp from a polynomial frame.

    When a grid is given, the frame rank is checked at every lattice point;
    rank drops are collected in the returned gauge's exception list (the
    projection at such points is taken from an offset limiting frame).
    """
    flagged = []
    if grid is not None:
        fvals = frame.value_grid(grid.zs)
        sv = np.linalg.svd(fvals, compute_uv=False)
        bad = sv[..., -1] <= rank_tol * np.maximum(sv[..., 0], 1e-300)
        for i, j in zip(*np.nonzero(bad)):
            z = grid.zs[i, j]
            probe = frame.value(z + 1e-6 * (1.0 + abs(z)))
            psv = np.linalg.svd(probe, compute_uv=False)
            if psv[-1] <= rank_tol * psv[0]:
                raise NumericalError(
                    f"frame rank drops at grid point ({i}, {j}) with no limiting frame")
            flagged.append((int(i), int(j)))
    return GaugeMap(kind="uniton", frame=frame, exceptional_points=tuple(flagged))


# ---------------------------------------------------------------------------
# the gauge action h . mu = Ad_h(mu) - dh h^-1


def gauge_action(h: GaugeMap, mu: Potential, grid: GridSpec,
                 admissibility_tol: float = ADMISSIBILITY_REL_TOL) -> Potential:
    """Act on a potential by a gauge map.

    Plus gauges keep the potential holomorphic. Uniton gauges require the
    admissibility condition pi-perp xi_-1 pi = 0 on the whole grid (checked,
    with the maximal residual reported on failure) and produce a flat
    potential whose dz-bar part lies in the nonnegative band.
    """
    if h.n != mu.n:
        raise ConfigError("gauge and potential sizes differ")

    n = mu.n
    trunc = mu.trunc

    if h.kind == "plus":
        hkmin = min(c.kmin for _, c in h.loop_terms)
        hkmax = max(c.kmax for _, c in h.loop_terms)

        def h_batch(zs, _h=h, _k=(hkmin, hkmax)):
            lo, hi = _k
            out = np.zeros(zs.shape + (hi - lo + 1, n, n), dtype=complex)
            dout = np.zeros_like(out)
            for p, c in _h.loop_terms:
                pad = c.pad_to(lo, hi)
                out += (zs ** p)[..., None, None, None] * pad
                if p > 0:
                    dout += (p * zs ** (p - 1))[..., None, None, None] * pad
            return out, dout, lo

        def xi_batch(zs, _mu=mu):
            zs = np.asarray(zs)
            hz, dhz, hk = h_batch(zs)
            hinv, ik = _band_inverse(hz, hk, trunc)
            xi_arr, xk = _mu.xi_batch(zs)
            ad, adk = band_conv(*band_conv(hz, hk, xi_arr, xk), hinv, ik)
            der, derk = band_conv(dhz, hk, hinv, ik)
            out, ok = band_add(ad, adk, -der, derk)
            return band_window(out, ok, -trunc, trunc), -trunc

        def zeta_batch(zs, _mu=mu):
            zs = np.asarray(zs)
            zt = _mu.zeta_batch(zs)
            if zt is None:
                return None
            zt_arr, zk = zt
            hz, _, hk = h_batch(zs)
            hinv, ik = _band_inverse(hz, hk, trunc)
            out, ok = band_conv(*band_conv(hz, hk, zt_arr, zk), hinv, ik)
            return band_window(out, ok, 0, trunc), 0

        return _potential_from_batch(n, trunc, xi_batch,
                                     None if mu.holomorphic else zeta_batch,
                                     meta={"gauge": "plus"})

    # uniton gauge: check admissibility on the grid first
    zs = grid.zs
    pi_g, _, _ = frame_projection_data_grid(h.frame, zs)
    xi_g, xk_g = mu.xi_batch(zs)
    if xk_g <= -1 <= xk_g + xi_g.shape[-3] - 1:
        m1 = xi_g[..., -1 - xk_g, :, :]
    else:
        m1 = np.zeros_like(pi_g)
    comp_g = np.eye(n) - pi_g
    worst = float(np.linalg.norm(comp_g @ m1 @ pi_g, axis=(-1, -2)).max())
    scale = float(np.linalg.norm(m1, axis=(-1, -2)).max())
    if scale > 0 and worst > admissibility_tol * scale:
        raise AdmissibilityError(
            f"uniton admissibility fails: max ||pi_perp xi_-1 pi|| = {worst:.3e} "
            f"(relative threshold {admissibility_tol:.1e} * {scale:.3e})")

    def _conjugate(arr, kmin, pi, comp):
        """gamma (arr) gamma^-1 for gamma = pi + lambda^-1 pi_perp, batched."""
        k = arr.shape[-3]
        mid = np.zeros(arr.shape[:-3] + (k + 1,) + arr.shape[-2:], dtype=complex)
        mid[..., 1:, :, :] += pi[..., None, :, :] @ arr
        mid[..., :-1, :, :] += comp[..., None, :, :] @ arr
        out = np.zeros(arr.shape[:-3] + (k + 2,) + arr.shape[-2:], dtype=complex)
        out[..., :-1, :, :] += mid @ pi[..., None, :, :]
        out[..., 1:, :, :] += mid @ comp[..., None, :, :]
        return out, kmin - 1

    def _derivative_term(dp, pi, comp):
        """-(1 - lambda^-1) dp (pi + lambda pi_perp): band {-1, 0, 1}."""
        out = np.stack([dp @ pi, dp @ comp - dp @ pi, -(dp @ comp)], axis=-3)
        return out, -1

    constant_frame = all(p == 0 for p, _ in h.frame.terms)

    def xi_batch(zs, _mu=mu, _h=h):
        zs = np.asarray(zs)
        pi, dpi, _ = frame_projection_data_grid(_h.frame, zs)
        comp = np.eye(n) - pi
        xi_arr, xk = _mu.xi_batch(zs)
        ad, adk = _conjugate(xi_arr, xk, pi, comp)
        der, derk = _derivative_term(dpi, pi, comp)
        out, ok = band_add(ad, adk, der, derk)
        return out, ok

    def zeta_batch(zs, _mu=mu, _h=h):
        zs = np.asarray(zs)
        pi, _, dbpi = frame_projection_data_grid(_h.frame, zs)
        comp = np.eye(n) - pi
        out, ok = _derivative_term(dbpi, pi, comp)
        zt = _mu.zeta_batch(zs)
        if zt is not None:
            ad, adk = _conjugate(zt[0], zt[1], pi, comp)
            out, ok = band_add(out, ok, ad, adk)
        return out, ok

    # a constant subbundle has no derivative terms: the action is plain
    # conjugation and preserves both holomorphy and z-independence
    zb = None if (constant_frame and mu.holomorphic) else zeta_batch
    out = _potential_from_batch(n, trunc, xi_batch, zb,
                                meta={"gauge": "uniton", "frame": h.frame})
    if constant_frame and mu.constant:
        out.constant = True
    return out


def _band_inverse(arr: np.ndarray, kmin: int, trunc: int) -> tuple[np.ndarray, int]:
    """Pointwise inverse of plus-band arrays on the circle, recovered on [0, trunc]."""
    from .loops import _pow2_at_least
    p = _pow2_at_least(4 * trunc)
    lams = np.exp(2j * np.pi * np.arange(p) / p)
    vals = band_eval(arr, kmin, lams)
    inv = np.linalg.inv(vals)
    fhat = np.fft.fft(inv, axis=-3) / p
    return fhat[..., : trunc + 1, :, :], 0


def _potential_from_batch(n, trunc, xi_batch, zeta_batch, meta) -> Potential:
    def xi(z):
        arr, kmin = xi_batch(np.array([z]))
        return LaurentLoop(arr[0], kmin, trunc).trimmed(1e-15)

    zeta = None
    if zeta_batch is not None:
        def zeta(z):
            out = zeta_batch(np.array([z]))
            if out is None:
                return None
            return LaurentLoop(out[0][0], out[1], trunc).trimmed(1e-15)

    return Potential(n=n, xi_fn=xi, zeta_fn=zeta, kind="gauged",
                     constant=False, trunc=trunc,
                     xi_batch_fn=xi_batch, zeta_batch_fn=zeta_batch, meta=meta)


def enlarged_class_report(mu: Potential, grid: GridSpec) -> dict:
    """Measured membership of a (gauged) potential in the enlarged flat class.

    Reports the maximal lambda^-2 coefficient of the dz part and the maximal
    lambda^-1 coefficient of the dz-bar part over the grid; both must vanish
    for the potential to stay in the once-negative band with a plus-type
    (0,1)-part.
    """
    worst_m2 = 0.0
    worst_zeta_m1 = 0.0
    for z in grid.zs.flat:
        worst_m2 = max(worst_m2, float(np.linalg.norm(mu.xi(z).coefficient(-2))))
        zt = mu.zeta(z)
        if zt is not None:
            worst_zeta_m1 = max(worst_zeta_m1, float(np.linalg.norm(zt.coefficient(-1))))
    return {"xi_lambda_minus2_max": worst_m2, "zeta_lambda_minus1_max": worst_zeta_m1}


# ---------------------------------------------------------------------------
# flatness


def potential_on_grid(mu: Potential, grid: GridSpec):
    """Evaluate xi (and zeta) on the lattice into shared-band arrays.

    Returns (xi_arr, xi_kmin, zeta_arr or None, zeta_kmin).
    """
    xi_arr, kmin = mu.xi_batch(grid.zs)
    zt = mu.zeta_batch(grid.zs)
    if zt is None:
        return xi_arr, kmin, None, 0
    return xi_arr, kmin, zt[0], zt[1]


def flatness_residual(mu: Potential, grid: GridSpec) -> float:
    """Max curvature norm of d + mu over the interior lattice.

    The curvature coefficient is d_z zeta - d_zbar xi + [xi, zeta]; for a
    holomorphic potential it reduces to the anti-holomorphy defect of xi.
    Derivatives are 4th-order centered differences (margin 2); the exact
    z-derivative structure of polynomial data is reflected in the measured
    residual rather than assumed.
    """
    if grid.samples < 2 * FD_MARGIN + 1:
        raise ConfigError("grid too small for the flatness stencil")
    xi_arr, xk, zt_arr, zk = potential_on_grid(mu, grid)
    _, dzbar_xi = complex_derivatives(xi_arr, grid.h)
    if zt_arr is None:
        return float(np.linalg.norm(dzbar_xi, axis=(-1, -2)).sum(axis=-1).max())
    dz_zt, _ = complex_derivatives(zt_arr, grid.h)
    m = FD_MARGIN
    xi_i = xi_arr[m:-m, m:-m]
    zt_i = zt_arr[m:-m, m:-m]
    # commutator [xi, zeta] as a convolution over the lambda bands
    ka, kb = xi_i.shape[2], zt_i.shape[2]
    conv_len = ka + kb - 1
    comm = np.zeros(xi_i.shape[:2] + (conv_len, mu.n, mu.n), dtype=complex)
    for a in range(ka):
        comm[:, :, a : a + kb] += np.einsum("xyij,xykjl->xykil", xi_i[:, :, a], zt_i)
        comm[:, :, a : a + kb] -= np.einsum("xykij,xyjl->xykil", zt_i, xi_i[:, :, a])
    ckmin = xk + zk
    # residual = d_z zeta - d_zbar xi + [xi, zeta], aligned on a common band
    kmin = min(zk, xk, ckmin)
    kmax = max(zk + kb - 1, xk + ka - 1, ckmin + conv_len - 1)
    width = kmax - kmin + 1
    res = np.zeros(dz_zt.shape[:2] + (width, mu.n, mu.n), dtype=complex)
    res[:, :, zk - kmin : zk - kmin + kb] += dz_zt
    res[:, :, xk - kmin : xk - kmin + ka] -= dzbar_xi
    res[:, :, ckmin - kmin : ckmin - kmin + conv_len] += comm
    return float(np.linalg.norm(res, axis=(-1, -2)).sum(axis=-1).max())


# ---------------------------------------------------------------------------
# JSON schema (versioned)

POTENTIAL_SCHEMA_VERSION = 1


def potential_to_json(mu: Potential) -> dict:
    if isinstance(mu, FiniteTypePotential):
        out = {"schema": POTENTIAL_SCHEMA_VERSION, "type": "finite_type",
               "d": mu.d, "eta": mu.eta.to_json()}
        if mu.q0 is not None:
            out["Q0"] = [[[float(v.real), float(v.imag)] for v in row] for row in mu.q0]
        return out
    if mu.kind == "polynomial":
        return {"schema": POTENTIAL_SCHEMA_VERSION, "type": "polynomial",
                "terms": [{"zpow": p, "loop": c.to_json()} for p, c in mu.terms]}
    raise ConfigError(f"potential kind '{mu.kind}' has no JSON form")


def potential_from_json(obj: dict, trunc: int = DEFAULT_TRUNC) -> Potential:
    if not isinstance(obj, dict):
        raise ConfigError("potential spec must be an object")
    schema = obj.get("schema", POTENTIAL_SCHEMA_VERSION)
    if schema != POTENTIAL_SCHEMA_VERSION:
        raise ConfigError(f"unsupported potential schema version {schema}")
    kind = obj.get("type")
    if kind == "finite_type":
        allowed = {"schema", "type", "d", "eta", "Q0"}
        _reject_unknown(obj, allowed, "finite_type potential")
        eta = LaurentLoop.from_json(obj["eta"], trunc)
        q0 = None
        if "Q0" in obj:
            q0 = np.array([[complex(re, im) for re, im in row] for row in obj["Q0"]])
        return finite_type_potential(int(obj["d"]), eta, q0)
    if kind == "polynomial":
        allowed = {"schema", "type", "terms"}
        _reject_unknown(obj, allowed, "polynomial potential")
        terms = [(int(t["zpow"]), LaurentLoop.from_json(t["loop"], trunc))
                 for t in obj["terms"]]
        return polynomial_potential(terms, trunc)
    raise ConfigError(f"unknown potential type {kind!r}")


def _reject_unknown(obj: dict, allowed: set, what: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {what}: {sorted(unknown)}")
