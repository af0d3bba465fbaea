"""Square grids over the complex plane and the fields attached to them.

Fields store one numpy block per grid point, indexed [ix, iy] with
z = x[ix] + i y[iy]. Derived fields produced by finite differencing live on
the concentric shrunken grid, which keeps every object a well-formed field.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .loops import LaurentLoop, DEFAULT_TRUNC


@dataclass(frozen=True)
class GridSpec:
    """Square lattice of (2s+1)^2-style points centered at `center`.

    The origin z = 0 must be a lattice point: integration of potentials is
    normalized there.
    """

    half_width: float
    samples: int
    center: complex = 0j

    def __post_init__(self):
        if self.samples < 3 or self.samples % 2 == 0:
            raise ConfigError("grid samples must be odd and >= 3")
        if self.half_width <= 0:
            raise ConfigError("grid half_width must be positive")
        i0 = round((0.0 - (self.center.real - self.half_width)) / self.h)
        j0 = round((0.0 - (self.center.imag - self.half_width)) / self.h)
        if not (0 <= i0 < self.samples and 0 <= j0 < self.samples):
            raise ConfigError("grid must contain z = 0")
        if abs(self.xs[i0]) > 1e-12 or abs(self.ys[j0]) > 1e-12:
            raise ConfigError("z = 0 must be a lattice point")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.samples - 1)

    @property
    def xs(self) -> np.ndarray:
        return self.center.real + np.linspace(-self.half_width, self.half_width, self.samples)

    @property
    def ys(self) -> np.ndarray:
        return self.center.imag + np.linspace(-self.half_width, self.half_width, self.samples)

    @property
    def zs(self) -> np.ndarray:
        """Complex lattice, shape (samples, samples), z[ix, iy]."""
        return self.xs[:, np.newaxis] + 1j * self.ys[np.newaxis, :]

    @property
    def origin_index(self) -> tuple[int, int]:
        i0 = int(round((0.0 - (self.center.real - self.half_width)) / self.h))
        j0 = int(round((0.0 - (self.center.imag - self.half_width)) / self.h))
        return i0, j0

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples, self.samples

    def shrink(self, margin: int) -> "GridSpec":
        if 2 * margin >= self.samples - 2:
            raise ConfigError(f"grid too small to shrink by margin {margin}")
        return GridSpec(self.half_width - margin * self.h, self.samples - 2 * margin, self.center)

    def to_json(self) -> dict:
        return {
            "center": [self.center.real, self.center.imag],
            "half_width": self.half_width,
            "samples": self.samples,
        }

    @staticmethod
    def from_json(obj: dict) -> "GridSpec":
        c = obj.get("center", [0.0, 0.0])
        return GridSpec(float(obj["half_width"]), int(obj["samples"]), complex(c[0], c[1]))


# ---------------------------------------------------------------------------
# finite differences (6th-order centered, margin 3)

FD_MARGIN = 3


def _dx6(arr: np.ndarray, h: float) -> np.ndarray:
    """6th-order centered d/dx along axis 0; output loses margin 3 on axis 0."""
    return (arr[6:] - 9.0 * arr[5:-1] + 45.0 * arr[4:-2]
            - 45.0 * arr[2:-4] + 9.0 * arr[1:-5] - arr[:-6]) / (60.0 * h)


def complex_derivatives(arr: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """(d/dz, d/dz-bar) of a field array (Nx, Ny, ...) on the margin-3 interior."""
    m = FD_MARGIN
    dx = _dx6(arr, h)[:, m:-m]
    dy_t = _dx6(np.swapaxes(arr, 0, 1), h)[:, m:-m]
    dy = np.swapaxes(dy_t, 0, 1)
    dz = 0.5 * (dx - 1j * dy)
    dzbar = 0.5 * (dx + 1j * dy)
    return dz, dzbar


def _argmax_report(values: np.ndarray, margin: int = 0) -> dict:
    """Summary {max, mean, argmax: [i, j]} of per-point defects (global indices)."""
    flat = int(np.argmax(values))
    i, j = np.unravel_index(flat, values.shape)
    return {
        "max": float(values.max()),
        "mean": float(values.mean()),
        "argmax": [int(i) + margin, int(j) + margin],
    }


# ---------------------------------------------------------------------------
# fields


def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m)]


def _matrix_from_json(obj) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in obj], dtype=complex)


@dataclass
class MapField:
    """One n x n matrix per grid point."""

    grid: GridSpec
    data: np.ndarray  # (Nx, Ny, n, n)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[-1]

    def at(self, i: int, j: int) -> np.ndarray:
        return self.data[i, j]

    def at_origin(self) -> np.ndarray:
        i0, j0 = self.grid.origin_index
        return self.data[i0, j0]

    def restrict(self, margin: int) -> "MapField":
        if margin == 0:
            return self
        return MapField(self.grid.shrink(margin),
                        self.data[margin:-margin, margin:-margin], dict(self.meta))

    def unitary_defect(self) -> float:
        g = np.conj(np.swapaxes(self.data, -1, -2)) @ self.data - np.eye(self.n)
        return float(np.linalg.norm(g, axis=(-1, -2)).max())

    def distance(self, other: "MapField") -> float:
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        return float(np.linalg.norm(self.data - other.data, axis=(-1, -2)).max())

    def to_csv(self, path) -> None:
        n = self.n
        header = ["i", "j"]
        for r in range(n):
            for c in range(n):
                header += [f"re_{r}{c}", f"im_{r}{c}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.data.shape[0]):
                for j in range(self.data.shape[1]):
                    row = [i, j]
                    m = self.data[i, j]
                    for r in range(n):
                        for c in range(n):
                            row += [repr(float(m[r, c].real)), repr(float(m[r, c].imag))]
                    w.writerow(row)


@dataclass
class LoopField:
    """One LaurentLoop per grid point, on a shared frequency band."""

    grid: GridSpec
    data: np.ndarray  # (Nx, Ny, K, n, n)
    kmin: int
    trunc: int = DEFAULT_TRUNC
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[-1]

    @property
    def kmax(self) -> int:
        return self.kmin + self.data.shape[2] - 1

    def loop_at(self, i: int, j: int) -> LaurentLoop:
        return LaurentLoop(self.data[i, j], self.kmin, self.trunc)

    def at_origin(self) -> LaurentLoop:
        i0, j0 = self.grid.origin_index
        return self.loop_at(i0, j0)

    def restrict(self, margin: int) -> "LoopField":
        if margin == 0:
            return self
        return LoopField(self.grid.shrink(margin),
                         self.data[margin:-margin, margin:-margin],
                         self.kmin, self.trunc, dict(self.meta))

    def coefficient(self, k: int) -> MapField:
        nx, ny = self.data.shape[:2]
        if self.kmin <= k <= self.kmax:
            block = self.data[:, :, k - self.kmin]
        else:
            block = np.zeros((nx, ny, self.n, self.n), dtype=complex)
        return MapField(self.grid, block.copy())

    def eval_lambda(self, lam: complex) -> MapField:
        ks = np.arange(self.kmin, self.kmax + 1)
        powers = np.asarray(lam, dtype=complex) ** ks
        vals = np.tensordot(self.data, powers, axes=(2, 0))
        return MapField(self.grid, vals)

    def pad_band(self, kmin: int, kmax: int) -> np.ndarray:
        nx, ny, _, n, _ = self.data.shape
        out = np.zeros((nx, ny, kmax - kmin + 1, n, n), dtype=complex)
        lo, hi = max(kmin, self.kmin), min(kmax, self.kmax)
        if lo <= hi:
            out[:, :, lo - kmin : hi - kmin + 1] = self.data[:, :, lo - self.kmin : hi - self.kmin + 1]
        return out

    def distance(self, other: "LoopField") -> float:
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        kmin = min(self.kmin, other.kmin)
        kmax = max(self.kmax, other.kmax)
        d = self.pad_band(kmin, kmax) - other.pad_band(kmin, kmax)
        return float(np.linalg.norm(d, axis=(-1, -2)).max())

    def effective_kmin(self, rel_tol: float = 1e-9) -> int:
        """Lowest frequency whose max coefficient norm over the grid is significant."""
        norms = np.linalg.norm(self.data, axis=(-1, -2)).max(axis=(0, 1))
        scale = norms.max()
        if scale == 0.0:
            return 0
        return self.kmin + int(np.nonzero(norms > rel_tol * scale)[0][0])

    def trim_band(self, rel_tol: float = 1e-14) -> "LoopField":
        """Drop leading/trailing frequencies that are silent across the grid."""
        norms = np.linalg.norm(self.data, axis=(-1, -2)).max(axis=(0, 1))
        scale = norms.max()
        if scale == 0.0:
            return self
        keep = np.nonzero(norms > rel_tol * scale)[0]
        lo, hi = int(keep[0]), int(keep[-1])
        if lo == 0 and hi == len(norms) - 1:
            return self
        return LoopField(self.grid, self.data[:, :, lo : hi + 1],
                         self.kmin + lo, self.trunc, dict(self.meta))

    def to_json(self) -> dict:
        nx, ny = self.data.shape[:2]
        return {
            "schema": 1,
            "grid": self.grid.to_json(),
            "n": self.n,
            "kmin": self.kmin,
            "kmax": self.kmax,
            "values": [
                [
                    [_matrix_to_json(self.data[i, j, k]) for k in range(self.data.shape[2])]
                    for j in range(ny)
                ]
                for i in range(nx)
            ],
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(obj: dict, trunc: int = DEFAULT_TRUNC) -> "LoopField":
        grid = GridSpec.from_json(obj["grid"])
        kmin, kmax = int(obj["kmin"]), int(obj["kmax"])
        n = int(obj["n"])
        vals = obj["values"]
        nx, ny = len(vals), len(vals[0])
        data = np.empty((nx, ny, kmax - kmin + 1, n, n), dtype=complex)
        for i in range(nx):
            for j in range(ny):
                for k in range(kmax - kmin + 1):
                    data[i, j, k] = _matrix_from_json(vals[i][j][k])
        return LoopField(grid, data, kmin, trunc)

    @staticmethod
    def load_json(path, trunc: int = DEFAULT_TRUNC) -> "LoopField":
        with open(path) as fh:
            return LoopField.from_json(json.load(fh), trunc)


@dataclass
class SubbundleField:
    """Rank-k Hermitian projection per grid point, with rank-drop flags."""

    grid: GridSpec
    projections: np.ndarray  # (Nx, Ny, n, n)
    rank: int
    flags: np.ndarray = None  # (Nx, Ny) bool, True where the generic rank dropped
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.flags is None:
            self.flags = np.zeros(self.projections.shape[:2], dtype=bool)

    @property
    def n(self) -> int:
        return self.projections.shape[-1]

    def at(self, i: int, j: int) -> np.ndarray:
        return self.projections[i, j]

    def at_origin(self) -> np.ndarray:
        i0, j0 = self.grid.origin_index
        return self.projections[i0, j0]

    def complement(self) -> "SubbundleField":
        eye = np.eye(self.n)
        return SubbundleField(self.grid, eye - self.projections,
                              self.n - self.rank, self.flags.copy(), dict(self.meta))

    def restrict(self, margin: int) -> "SubbundleField":
        if margin == 0:
            return self
        return SubbundleField(self.grid.shrink(margin),
                              self.projections[margin:-margin, margin:-margin],
                              self.rank,
                              self.flags[margin:-margin, margin:-margin],
                              dict(self.meta))

    def projection_defect(self) -> float:
        p = self.projections
        d1 = np.linalg.norm(p @ p - p, axis=(-1, -2))
        d2 = np.linalg.norm(p - np.conj(np.swapaxes(p, -1, -2)), axis=(-1, -2))
        return float(max(d1.max(), d2.max()))

    def distance(self, other: "SubbundleField") -> float:
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        return float(np.linalg.norm(self.projections - other.projections, axis=(-1, -2)).max())

    def to_csv(self, path) -> None:
        n = self.n
        header = ["i", "j", "flag"]
        for r in range(n):
            for c in range(n):
                header += [f"re_{r}{c}", f"im_{r}{c}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.projections.shape[0]):
                for j in range(self.projections.shape[1]):
                    row = [i, j, int(self.flags[i, j])]
                    m = self.projections[i, j]
                    for r in range(n):
                        for c in range(n):
                            row += [repr(float(m[r, c].real)), repr(float(m[r, c].imag))]
                    w.writerow(row)
