"""Normal modes of a one-dimensional box with perfectly reflecting walls.

The box ``[0, L]`` carries Dirichlet conditions.  Without a potential the
modes are the analytic sine series; with a sampled potential they come
from a second-order finite-difference Hamiltonian on the same grid.
One-body kernels (cell densities, energies, currents) are integrals of
mode products over a cell, evaluated exactly on the piecewise-linear
interpolant of the sampled integrand.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal

from .errors import DimensionError

DEFAULT_GRID = 2048

Potential = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class BoxSpec:
    length: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    mode_count: int = 4
    potential: Potential = field(default=None, compare=False)

    def __post_init__(self):
        if not self.length > 0 or not self.mass > 0 or not self.hbar > 0:
            raise ValueError("length, mass and hbar must be positive")
        if int(self.mode_count) < 1:
            raise ValueError("mode_count must be at least 1")


@dataclass(frozen=True)
class ModeSet:
    spec: BoxSpec
    x: np.ndarray
    energies: np.ndarray
    samples: np.ndarray       # (mode_count, grid) values u_n(x_g)
    derivatives: np.ndarray   # (mode_count, grid) values u_n'(x_g)
    potential: np.ndarray     # V(x_g), zeros when absent
    analytic: bool

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def count(self):
        return len(self.energies)

    def gram(self):
        """Trapezoid overlap matrix of the sampled modes."""
        return trapezoid(np.conj(self.samples)[:, None, :] * self.samples[None, :, :], self.x, axis=-1)


def _sample_potential(spec, x):
    if spec.potential is None:
        return np.zeros_like(x)
    if callable(spec.potential):
        V = np.asarray(spec.potential(x), dtype=float)
    else:
        V = np.asarray(spec.potential, dtype=float)
    if V.shape != x.shape:
        raise DimensionError(f"potential has {V.size} samples, grid has {x.size}")
    return V


def box_eigenmodes(spec, grid_points=DEFAULT_GRID):
    """Lowest ``spec.mode_count`` Dirichlet eigenmodes on a uniform grid."""
    grid_points = int(grid_points)
    M = int(spec.mode_count)
    if grid_points < 64:
        raise DimensionError(f"grid_points={grid_points} is below the minimum of 64")
    if M > grid_points / 4:
        raise DimensionError(
            f"mode_count={M} exceeds the grid resolution (at most {grid_points // 4} "
            f"modes for {grid_points} points)"
        )
    L, m, hbar = spec.length, spec.mass, spec.hbar
    x = np.linspace(0.0, L, grid_points)
    V = _sample_potential(spec, x)
    if spec.potential is None:
        n = np.arange(1, M + 1)[:, None]
        k = n * np.pi / L
        samples = np.sqrt(2.0 / L) * np.sin(k * x[None, :])
        samples[:, 0] = 0.0
        samples[:, -1] = 0.0
        derivs = np.sqrt(2.0 / L) * k * np.cos(k * x[None, :])
        energies = (hbar * np.pi * np.arange(1, M + 1)) ** 2 / (2 * m * L**2)
        return ModeSet(spec, x, energies, samples, derivs, V, True)

    h = x[1] - x[0]
    t = hbar**2 / (2 * m * h**2)
    diag = 2 * t + V[1:-1]
    off = -t * np.ones(grid_points - 3)
    energies, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, M - 1))
    samples = np.zeros((M, grid_points))
    samples[:, 1:-1] = vecs.T / np.sqrt(h)
    # sign convention of the sine series: positive slope at the left wall
    signs = np.sign(samples[:, 1])
    signs[signs == 0] = 1.0
    samples *= signs[:, None]
    derivs = np.gradient(samples, h, axis=1, edge_order=2)
    return ModeSet(spec, x, energies, samples, derivs, V, False)


def _check_grid(modes, f):
    f = np.asarray(f)
    if f.shape != modes.x.shape:
        raise DimensionError(
            f"function sampled on {f.size} points, mode grid has {modes.x.size}"
        )
    return f


def mode_overlap(modes, f):
    """Coefficients ``c_h = int conj(u_h) f dx`` (trapezoid)."""
    f = _check_grid(modes, f)
    return trapezoid(np.conj(modes.samples) * f[None, :], modes.x, axis=1)


def synthesize(modes, coefficients):
    """Wavefunction samples ``sum_h c_h u_h(x)``."""
    c = np.asarray(coefficients)
    return c @ modes.samples


def cell_weights(x, a, b):
    """Weights ``w`` with ``sum_g w_g f(x_g)`` equal to the integral over
    ``[a, b]`` of the piecewise-linear interpolant of ``f``."""
    x = np.asarray(x, dtype=float)
    if not (x[0] <= a < b <= x[-1]):
        raise ValueError(f"cell [{a}, {b}] is empty, inverted or outside [{x[0]}, {x[-1]}]")
    w = np.zeros_like(x)
    n = len(x)

    def locate(p):
        i = int(np.clip(np.searchsorted(x, p, side="right") - 1, 0, n - 2))
        theta = (p - x[i]) / (x[i + 1] - x[i])
        return i, theta

    inner = np.nonzero((x > a) & (x < b))[0]
    # breakpoints: a, interior grid nodes, b
    pts = np.concatenate(([a], x[inner], [b]))
    seg = np.diff(pts)
    tw = np.zeros(len(pts))
    tw[:-1] += 0.5 * seg
    tw[1:] += 0.5 * seg
    ia, ta = locate(a)
    ib, tb = locate(b)
    w[ia] += tw[0] * (1 - ta)
    w[ia + 1] += tw[0] * ta
    w[inner] += tw[1:-1]
    w[ib] += tw[-1] * (1 - tb)
    w[ib + 1] += tw[-1] * tb
    return w


KINDS = ("density", "energy", "current")


@dataclass(frozen=True)
class CellKernel:
    matrix: np.ndarray
    cell: tuple
    kind: str


def cell_kernel(modes, cell, kind="density"):
    """One-body kernel of a cell ``[a, b]`` in the mode basis.

    density  ``K_hk = int_a^b conj(u_h) u_k``
    energy   ``K_hk = int_a^b hbar^2/2m conj(u_h') u_k' + V conj(u_h) u_k``
    current  ``K_hk = hbar/(2 m i) int_a^b (conj(u_h) u_k' - conj(u_h') u_k)``,
    Hermitized.
    """
    a, b = (float(c) for c in cell)
    if kind not in KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KINDS}")
    if not b > a:
        raise ValueError(f"cell [{a}, {b}] is empty or inverted")
    w = cell_weights(modes.x, a, b)
    U = modes.samples
    dU = modes.derivatives
    spec = modes.spec
    if kind == "density":
        K = (np.conj(U) * w) @ U.T
    elif kind == "energy":
        kin = spec.hbar**2 / (2 * spec.mass)
        K = kin * (np.conj(dU) * w) @ dU.T + (np.conj(U) * (w * modes.potential)) @ U.T
    else:
        raw = (np.conj(U) * w) @ dU.T - (np.conj(dU) * w) @ U.T
        K = spec.hbar / (2j * spec.mass) * raw
    K = np.asarray(K, dtype=complex)
    K = 0.5 * (K + np.conj(K).T)
    return CellKernel(K, (a, b), kind)


def partition_cells(length, count):
    """Equal cells covering ``[0, length]``."""
    edges = np.linspace(0.0, length, int(count) + 1)
    return [(float(edges[i]), float(edges[i + 1])) for i in range(int(count))]
