"""Named demo potentials at desk scale.

All are twisted constant potentials with exponent d = 1 whose complex
extended solutions are exactly band limited (the coefficient chains are
nilpotent), plus one z-polynomial potential for the generic integration path.
The default working truncation is 16, enough for every demo to sit at the
rounding floor.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .fields import GridSpec
from .loops import LaurentLoop
from .potentials import FramePoly, Potential, finite_type_potential, polynomial_potential

DEMO_TRUNC = 16


def _unit(i: int, j: int, n: int) -> np.ndarray:
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


def demo_grid(half_width: float = 0.25, samples: int = 17) -> GridSpec:
    return GridSpec(half_width=half_width, samples=samples)


def sphere_flag(trunc: int = DEMO_TRUNC):
    """n=2 twisted demo: eta = lambda^-1 E12 - lambda E21, Q0 = diag(1, -1)."""
    b = _unit(0, 1, 2)
    eta = LaurentLoop.from_coeffs({-1: b, 1: -b.conj().T}, 2, trunc)
    q0 = np.diag([1.0, -1.0]).astype(complex)
    return finite_type_potential(1, eta, q0)


def sphere_based(trunc: int = DEMO_TRUNC):
    """n=2 twisted demo with a based coefficient loop: eta = (lambda^-1 - lambda) A."""
    a = _unit(0, 1, 2) + _unit(1, 0, 2)
    eta = LaurentLoop.from_coeffs({-1: a, 1: -a}, 2, trunc)
    q0 = np.diag([1.0, -1.0]).astype(complex)
    return finite_type_potential(1, eta, q0)


def plane_line(trunc: int = DEMO_TRUNC):
    """n=3 twisted demo eta_-1 = E13; pairs with the moving line span(1, z, 0)."""
    b = _unit(0, 2, 3)
    eta = LaurentLoop.from_coeffs({-1: b, 1: -b.conj().T}, 3, trunc)
    q0 = np.diag([1.0, -1.0, -1.0]).astype(complex)
    return finite_type_potential(1, eta, q0)


def plane_line_frame() -> FramePoly:
    return FramePoly(((0, np.array([[1], [0], [0]], dtype=complex)),
                      (1, np.array([[0], [1], [0]], dtype=complex))))


def plane_chain(trunc: int = DEMO_TRUNC):
    """n=3 twisted demo eta_-1 = E12 + E31: both off-diagonal blocks populated.

    The Hom(V0-perp, V0) block E12 has the one-dimensional kernel span(e3)
    inside V0-perp, so the Gauss-bundle construction is nondegenerate here.
    """
    b = _unit(0, 1, 3) + _unit(2, 0, 3)
    eta = LaurentLoop.from_coeffs({-1: b, 1: -b.conj().T}, 3, trunc)
    q0 = np.diag([1.0, -1.0, -1.0]).astype(complex)
    return finite_type_potential(1, eta, q0)


def poly_generic(trunc: int = DEMO_TRUNC):
    """z-dependent holomorphic potential exercising the RK4 branch."""
    n = 2
    c0 = LaurentLoop.from_coeffs({-1: _unit(0, 1, n), 0: 0.25 * _unit(1, 0, n)}, n, trunc)
    c1 = LaurentLoop.from_coeffs({-1: 0.3 * (_unit(0, 0, n) - _unit(1, 1, n))}, n, trunc)
    return polynomial_potential(((0, c0), (1, c1)), trunc)


DEMOS = {
    "sphere_flag": sphere_flag,
    "sphere_based": sphere_based,
    "plane_line": plane_line,
    "plane_chain": plane_chain,
    "poly_generic": poly_generic,
}


def demo_potential(name: str, trunc: int = DEMO_TRUNC) -> Potential:
    if name not in DEMOS:
        raise ConfigError(f"unknown demo {name!r}; available: {sorted(DEMOS)}")
    return DEMOS[name](trunc)
