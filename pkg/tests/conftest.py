"""Shared pipeline fixtures.

The expensive objects (extended solutions on the h = 1/32 lattice) are built
once per session and reused by the unit and acceptance suites.
"""

import numpy as np
import pytest

from dpwlab.demos import (demo_grid, plane_chain, plane_line, plane_line_frame,
                          poly_generic, sphere_based, sphere_flag)
from dpwlab.dpw import extended_solution, harmonic_map
from dpwlab.fields import SubbundleField
from dpwlab.grassmann import cartan_invert
from dpwlab.matrices import hermitian_projection, projections_from_frames
from dpwlab.potentials import build_uniton_gauge, gauge_action


def unit(i, j, n):
    m = np.zeros((n, n), dtype=complex)
    m[i, j] = 1.0
    return m


@pytest.fixture(scope="session")
def grid32():
    """17 x 17 lattice with spacing h = 1/32."""
    return demo_grid(half_width=0.25, samples=17)


@pytest.fixture(scope="session")
def sphere_flag_run(grid32):
    mu = sphere_flag()
    sol = extended_solution(mu, grid32)
    return {"mu": mu, "sol": sol, "phi_map": harmonic_map(sol.phi), "q0": mu.q0}


@pytest.fixture(scope="session")
def sphere_based_run(grid32):
    mu = sphere_based()
    sol = extended_solution(mu, grid32)
    phi_map = harmonic_map(sol.phi)
    psi = cartan_invert(phi_map, mu.q0)
    return {"mu": mu, "sol": sol, "phi_map": phi_map, "psi": psi, "q0": mu.q0}


@pytest.fixture(scope="session")
def plane_line_run(grid32):
    """The moving-line uniton pair: mu, its gauge by span(1, z, 0), both pipelines."""
    mu = plane_line()
    frame = plane_line_frame()
    gauge = build_uniton_gauge(frame, grid32)
    mu_gauged = gauge_action(gauge, mu, grid32)
    sol = extended_solution(mu, grid32)
    sol_gauged = extended_solution(mu_gauged, grid32)
    b0 = sol.b.coefficient(0).data
    lhat_frames = b0 @ frame.value_grid(grid32.zs)
    pihat = SubbundleField(grid32, projections_from_frames(lhat_frames), frame.cols)
    pihat0 = hermitian_projection(frame.value(0.0))
    return {
        "mu": mu, "frame": frame, "gauge": gauge, "mu_gauged": mu_gauged,
        "sol": sol, "sol_gauged": sol_gauged,
        "pihat": pihat, "pihat0": pihat0, "q0": mu.q0,
    }


@pytest.fixture(scope="session")
def plane_chain_run(grid32):
    mu = plane_chain()
    sol = extended_solution(mu, grid32)
    phi_map = harmonic_map(sol.phi)
    psi = cartan_invert(phi_map, mu.q0)
    return {"mu": mu, "sol": sol, "phi_map": phi_map, "psi": psi, "q0": mu.q0}


@pytest.fixture(scope="session")
def poly_run(grid32):
    mu = poly_generic()
    sol = extended_solution(mu, grid32)
    return {"mu": mu, "sol": sol}
