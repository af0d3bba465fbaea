"""Grassmannian-model geometry on subbundle fields.

The totally geodesic embedding of the k-plane Grassmannian sends a plane V to
Q0 (pi_V - pi_V-perp); harmonic maps into the Grassmannian are studied through
their projection fields. Second fundamental forms, Gauss bundles, the uniton
conditions and uniton products all live here.
"""

from __future__ import annotations

import numpy as np

from .errors import AdmissibilityError, NumericalError
from .fields import (FD_MARGIN, GridSpec, LoopField, MapField, SubbundleField,
                     _argmax_report, complex_derivatives)
from .loops import LaurentLoop
from .matrices import projections_from_frames
from .dpw import _field_conv, harmonic_map


def basepoint_involution(frame) -> np.ndarray:
    """Q0 = pi0 - pi0-perp for the plane spanned by `frame`."""
    f = np.asarray(frame, dtype=complex)
    q, _ = np.linalg.qr(f)
    pi0 = q @ q.conj().T
    return 2.0 * pi0 - np.eye(f.shape[0])


def cartan_embed(psi: SubbundleField, q0) -> MapField:
    """phi = Q0 (2 pi - I); unitary, with Q0 phi Hermitian involutive."""
    q0 = np.asarray(q0, dtype=complex)
    n = psi.n
    rank_q0 = int(round(float(np.trace(0.5 * (np.eye(n) + q0)).real)))
    phi = q0 @ (2.0 * psi.projections - np.eye(n))
    out = MapField(psi.grid, phi)
    if rank_q0 != psi.rank:
        out.meta["rank_mismatch"] = {"bundle": psi.rank, "basepoint": rank_q0}
    return out


def cartan_invert(phi: MapField, q0, tol: float = 1e-6) -> SubbundleField:
    """Recover the projection field from a Grassmannian-valued unitary field.

    Requires Q0 phi to be Hermitian involutive per point (certifies that phi
    lies in the embedded image); the measured defect is stored in the result's
    meta. Rank must be constant across the grid; exceptions are flagged.
    """
    q0 = np.asarray(q0, dtype=complex)
    s = q0 @ phi.data
    herm = np.linalg.norm(s - np.conj(s.swapaxes(-1, -2)), axis=(-1, -2))
    invol = np.linalg.norm(s @ s - np.eye(phi.n), axis=(-1, -2))
    defect = float(max(herm.max(), invol.max()))
    if defect > tol:
        raise NumericalError(
            f"field is not Grassmannian-valued: involution defect {defect:.3e} > {tol:.1e}")
    pi = 0.5 * (np.eye(phi.n) + s)
    ranks = np.rint(np.trace(pi, axis1=-2, axis2=-1).real).astype(int)
    vals, counts = np.unique(ranks, return_counts=True)
    rank = int(vals[np.argmax(counts)])
    flags = ranks != rank
    out = SubbundleField(phi.grid, pi, rank, flags)
    out.meta["involution_defect"] = defect
    return out


def second_fundamental_forms(psi: SubbundleField) -> tuple[MapField, MapField]:
    """(A', A'') as matrix fields pi-perp (d pi) pi on the stencil interior.

    A' uses d/dz, A'' uses d/dz-bar. A' is minus the adjoint of the A'' of the
    complementary bundle, which the tests pin.
    """
    m = FD_MARGIN
    dz, dzbar = complex_derivatives(psi.projections, psi.grid.h)
    pi = psi.projections[m:-m, m:-m]
    comp = np.eye(psi.n) - pi
    a1 = comp @ dz @ pi
    a2 = comp @ dzbar @ pi
    grid = psi.grid.shrink(m)
    return MapField(grid, a1), MapField(grid, a2)


def derivative_identity_check(psi: SubbundleField, phi: MapField) -> dict:
    """Defect of (1/2) phi^-1 d_z phi + (A'_psi + A'_psi-perp)."""
    if psi.grid != phi.grid:
        raise ValueError("fields live on different grids")
    m = FD_MARGIN
    dz, _ = complex_derivatives(phi.data, phi.grid.h)
    inv = np.linalg.inv(phi.data[m:-m, m:-m])
    lhs = 0.5 * (inv @ dz)
    dpz, _ = complex_derivatives(psi.projections, psi.grid.h)
    pi = psi.projections[m:-m, m:-m]
    comp = np.eye(psi.n) - pi
    total = comp @ dpz @ pi + pi @ (-dpz) @ comp
    defect = np.linalg.norm(lhs + total, axis=(-1, -2))
    return _argmax_report(defect, m)


def gauss_bundle(psi: SubbundleField, direction: int,
                 rank_rel_tol: float = 1e-4) -> SubbundleField:
    """Image bundle of A' (direction +1) or A'' (direction -1).

    The generic rank is the maximal numerical rank over the grid, with
    singular values thresholded against the global maximum. Points of lower
    rank are flagged and their projection copied from the nearest unflagged
    neighbor (never interpolated). Raises when no point attains a positive
    generic rank.
    """
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    a1, a2 = second_fundamental_forms(psi)
    form = a1 if direction == +1 else a2
    u, s, _ = np.linalg.svd(form.data)
    smax = float(s.max())
    fd_floor = 10.0 * psi.grid.h ** 6  # stencil noise scale for an exactly zero form
    if smax <= fd_floor:
        # the form vanishes identically: an undefined, rank-zero bundle
        nxy = form.data.shape[:2]
        out = SubbundleField(form.grid, np.zeros(nxy + (psi.n, psi.n), dtype=complex),
                             0, np.ones(nxy, dtype=bool))
        out.meta["direction"] = direction
        out.meta["singular_values_max"] = smax
        return out
    ranks = (s > rank_rel_tol * smax).sum(axis=-1)
    generic = int(ranks.max())
    flags = ranks < generic
    nx, ny = ranks.shape
    proj = np.zeros((nx, ny, psi.n, psi.n), dtype=complex)
    frames = u[..., :generic]
    ok = ~flags
    proj[ok] = (frames[ok] @ np.conj(frames[ok].swapaxes(-1, -2)))
    if flags.any():
        good = np.argwhere(ok)
        if good.size == 0:
            raise NumericalError("no grid point attains the generic rank")
        for i, j in np.argwhere(flags):
            dist = np.abs(good[:, 0] - i) + np.abs(good[:, 1] - j)
            gi, gj = good[np.argmin(dist)]
            proj[i, j] = proj[gi, gj]
    out = SubbundleField(form.grid, proj, generic, flags)
    out.meta["direction"] = direction
    out.meta["singular_values_max"] = smax
    return out


def gauss_bundle_iterate(psi: SubbundleField, order: int,
                         rank_rel_tol: float = 1e-4) -> list[SubbundleField]:
    """Iterated Gauss bundles up to |order|; stops early on rank collapse."""
    direction = 1 if order > 0 else -1
    out = []
    current = psi
    for _ in range(abs(order)):
        try:
            current = gauss_bundle(current, direction, rank_rel_tol)
        except NumericalError:
            break
        out.append(current)
        if current.rank == 0:
            break
    return out


# ---------------------------------------------------------------------------
# unitons


def _half_form(phi: MapField) -> tuple[np.ndarray, np.ndarray, int]:
    """(A_z, A_zbar) of alpha_0 = (1/2) phi^-1 d phi, on the stencil interior."""
    m = FD_MARGIN
    dz, dzbar = complex_derivatives(phi.data, phi.grid.h)
    inv = np.linalg.inv(phi.data[m:-m, m:-m])
    return 0.5 * (inv @ dz), 0.5 * (inv @ dzbar), m


def uniton_condition_check(pihat: SubbundleField, phi: MapField) -> dict:
    """Measured uniton conditions for a candidate subbundle against phi.

    Reports max defects of (a) pihat-perp A_z pihat = 0, (b)
    pihat-perp (d_zbar pihat + A_zbar pihat) = 0, and the commutator
    [phi, pihat] (relevant for Grassmannian targets only).
    """
    if pihat.grid != phi.grid:
        raise ValueError("fields live on different grids")
    az, azbar, m = _half_form(phi)
    dpz_bar = complex_derivatives(pihat.projections, pihat.grid.h)[1]
    pi = pihat.projections[m:-m, m:-m]
    comp = np.eye(pihat.n) - pi
    cond_a = np.linalg.norm(comp @ az @ pi, axis=(-1, -2))
    cond_b = np.linalg.norm(comp @ (dpz_bar + azbar @ pi), axis=(-1, -2))
    comm = np.linalg.norm(phi.data @ pihat.projections
                          - pihat.projections @ phi.data, axis=(-1, -2))
    return {
        "condition_a": _argmax_report(cond_a, m),
        "condition_b": _argmax_report(cond_b, m),
        "commutator": _argmax_report(comm, 0),
    }


def add_uniton(phi: LoopField, pihat: SubbundleField, pihat0=None,
               check: bool = True, tol: float = 1e-5) -> LoopField:
    """Multiply an extended-solution field by (pihat + lambda pihat-perp).

    With pihat0 given, the constant loop (pihat0 + lambda^-1 pihat0-perp) is
    applied on the left, which restores the basepoint normalization when
    pihat0 is the fiber of pihat over z = 0. When `check` is set the measured
    uniton conditions must pass at `tol`, else the product is refused with the
    report attached.
    """
    common = pihat.grid
    margin = round((phi.grid.samples - common.samples) / 2)
    if margin < 0 or phi.grid.shrink(margin) != common:
        raise ValueError("uniton grid is not an interior restriction of the loop field grid")
    phi_r = phi.restrict(margin)
    if check:
        phim = harmonic_map(phi).restrict(margin)
        rep = uniton_condition_check(pihat, phim)
        worst = max(rep["condition_a"]["max"], rep["condition_b"]["max"])
        if worst > tol:
            err = AdmissibilityError(
                f"uniton conditions fail at {worst:.3e} (tolerance {tol:.1e})")
            err.report = rep
            raise err
    n = phi.n
    comp = np.eye(n) - pihat.projections
    right = np.stack([pihat.projections, comp], axis=2)  # bands {0, 1}
    prod = _field_conv(phi_r.data, right)
    kmin = phi_r.kmin
    if pihat0 is not None:
        pihat0 = np.asarray(pihat0, dtype=complex)
        comp0 = np.eye(n) - pihat0
        left = np.stack([np.broadcast_to(comp0, prod.shape[:2] + (n, n)),
                         np.broadcast_to(pihat0, prod.shape[:2] + (n, n))], axis=2)
        prod = _field_conv(left, prod)
        kmin -= 1
    out = LoopField(common, prod, kmin, phi.trunc)
    return out


def converse_uniton(lhat: SubbundleField, b: LoopField, mu) -> tuple[SubbundleField, dict]:
    """Transport a uniton bundle back through the plus factor: ell = b0^-1 lhat.

    Returns the transported bundle and a report with its measured
    dbar-holomorphy defect (should vanish: the plus factor trivializes the
    induced holomorphic structure) and the admissibility defect
    ||pi-perp xi_-1 pi|| for the potential.
    """
    common = lhat.grid
    margin = round((b.grid.samples - common.samples) / 2)
    if margin < 0 or b.grid.shrink(margin) != common:
        raise ValueError("bundle grid is not an interior restriction of the loop field grid")
    b0 = b.restrict(margin).coefficient(0).data
    u, s, _ = np.linalg.svd(lhat.projections)
    frames = u[..., : lhat.rank]
    binv = np.linalg.inv(b0)
    ell_frames = binv @ frames
    proj = projections_from_frames(ell_frames)
    ell = SubbundleField(common, proj, lhat.rank, lhat.flags.copy())

    m = FD_MARGIN
    dzbar = complex_derivatives(proj, common.h)[1]
    hol = np.linalg.norm(dzbar @ proj[m:-m, m:-m], axis=(-1, -2))
    zs = common.zs
    adm = np.zeros(zs.shape)
    for i in range(zs.shape[0]):
        for j in range(zs.shape[1]):
            m1 = mu.mu_minus1(zs[i, j])
            p = proj[i, j]
            adm[i, j] = np.linalg.norm((np.eye(lhat.n) - p) @ m1 @ p)
    report = {
        "dbar_defect": _argmax_report(hol, m),
        "admissibility": _argmax_report(adm, 0),
    }
    return ell, report


def morphism_kernel_bundle(psi: SubbundleField, rank_rel_tol: float = 1e-4) -> SubbundleField:
    """Kernel of the bundle morphism A'_(psi-perp): psi-perp -> psi, per point.

    Computed as the joint kernel of the stacked map [A'_(psi-perp); pi_psi],
    so the result is a subbundle of psi-perp. Rank drops relative to the
    generic rank are flagged and filled from the nearest unflagged neighbor.
    """
    m = FD_MARGIN
    dz, _ = complex_derivatives(psi.projections, psi.grid.h)
    pi = psi.projections[m:-m, m:-m]
    comp = np.eye(psi.n) - pi
    a_perp = pi @ (-dz) @ comp  # A' of the complementary bundle
    stacked = np.concatenate([a_perp, pi], axis=-2)
    _, s, vh = np.linalg.svd(stacked)
    smax = float(s.max())
    ranks = (s > rank_rel_tol * max(smax, 1e-300)).sum(axis=-1)
    dims = psi.n - ranks
    generic = int(dims.max())
    flags = dims < generic
    frames = np.conj(vh.swapaxes(-1, -2))[..., psi.n - generic :]
    proj = frames @ np.conj(frames.swapaxes(-1, -2))
    if flags.any():
        good = np.argwhere(~flags)
        for i, j in np.argwhere(flags):
            dist = np.abs(good[:, 0] - i) + np.abs(good[:, 1] - j)
            gi, gj = good[np.argmin(dist)]
            proj[i, j] = proj[gi, gj]
    out = SubbundleField(psi.grid.shrink(m), proj, generic, flags)
    return out
