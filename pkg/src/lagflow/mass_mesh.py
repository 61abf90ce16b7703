"""Mass-space grids, Lagrangian states and the densities they describe.

A state is a strictly increasing vector ``x = (x_0, ..., x_K)``; cell ``j``
(between ``x_j`` and ``x_{j+1}``) carries the fixed mass ``delta_j``.  The
associated density is piecewise constant with value ``z_j = delta_j / (x_{j+1} - x_j)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class QuantileError(RuntimeError):
    """The quantile construction of an initial vector failed."""


@dataclass(frozen=True, eq=False)
class MassGrid:
    """Decomposition ``0 = xi_0 < xi_1 < ... < xi_K = M`` of the mass interval.

    ``cell_widths`` are the masses of the K cells.  ``node_weights`` define the
    weighted inner product on position vectors: the uniform grid uses ``delta``
    at every node, a non-uniform grid uses the average of the two adjacent
    cell masses, with zero mass outside ``[0, M]``.
    """

    xi: np.ndarray
    uniform: bool = False
    cell_widths: np.ndarray = field(init=False, repr=False)
    node_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim != 1 or xi.size < 2:
            raise DomainError("a mass grid needs at least two nodes")
        if xi[0] != 0.0:
            raise DomainError(f"mass grid must start at 0, got {xi[0]!r}")
        widths = np.diff(xi)
        if np.any(widths <= 0) or not np.all(np.isfinite(xi)):
            raise DomainError("mass grid nodes must be strictly increasing")
        if self.uniform:
            weights = np.full(xi.size, xi[-1] / (xi.size - 1))
        else:
            padded = np.concatenate(([0.0], widths, [0.0]))
            weights = 0.5 * (padded[1:] + padded[:-1])
        xi.setflags(write=False)
        widths.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "cell_widths", widths)
        object.__setattr__(self, "node_weights", weights)

    @classmethod
    def uniform_grid(cls, K: int, M: float = 1.0) -> "MassGrid":
        if int(K) != K or K < 1:
            raise DomainError(f"K must be a positive integer, got {K!r}")
        if not M > 0:
            raise DomainError(f"total mass must be positive, got {M!r}")
        K = int(K)
        xi = M * np.arange(K + 1) / K
        xi[-1] = M
        return cls(xi, uniform=True)

    @classmethod
    def nonuniform_grid(cls, xi: Sequence[float]) -> "MassGrid":
        return cls(np.asarray(xi, dtype=float), uniform=False)

    @property
    def K(self) -> int:
        return self.xi.size - 1

    @property
    def M(self) -> float:
        return float(self.xi[-1])

    @property
    def delta(self) -> float:
        """Uniform mass step; only meaningful for uniform grids."""
        if not self.uniform:
            raise DomainError("delta is only defined on a uniform grid")
        return self.M / self.K

    @property
    def cell_centers(self) -> np.ndarray:
        return 0.5 * (self.xi[1:] + self.xi[:-1])

    def same_as(self, other: "MassGrid") -> bool:
        return (
            self is other
            or (self.uniform == other.uniform and np.array_equal(self.xi, other.xi))
        )


@dataclass(frozen=True, eq=False)
class LagrangianState:
    """Grid-point positions of one Lagrangian snapshot."""

    x: np.ndarray
    grid: MassGrid

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.shape != (self.grid.K + 1,):
            raise DomainError(
                f"state needs {self.grid.K + 1} positions, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise DomainError("state positions must be finite")
        if np.any(np.diff(x) <= 0):
            raise DomainError("state positions must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def z(self) -> np.ndarray:
        return self.grid.cell_widths / np.diff(self.x)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def with_positions(self, x: np.ndarray) -> "LagrangianState":
        return LagrangianState(x, self.grid)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    """Density equal to ``values[j]`` on ``(breakpoints[j], breakpoints[j+1]]``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or v.shape != (b.size - 1,):
            raise DomainError("need K+1 breakpoints for K values")
        if np.any(np.diff(b) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(v < 0):
            raise DomainError("density values must be non-negative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * np.diff(self.breakpoints)

    @property
    def mass(self) -> float:
        return float(np.sum(self.cell_masses))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="left") - 1
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.zeros_like(x)
        out[inside] = self.values[idx[inside]]
        return out


def density_from_state(s: LagrangianState) -> PiecewiseConstantDensity:
    return PiecewiseConstantDensity(s.x, s.z)


def lagrangian_map(s: LagrangianState, xi) -> np.ndarray | float:
    """Piecewise-affine map from mass coordinates to positions, X(xi_k) = x_k."""
    xi_arr = np.asarray(xi, dtype=float)
    M = s.grid.M
    if np.any(xi_arr < 0) or np.any(xi_arr > M):
        raise DomainError(f"mass coordinate outside [0, {M}]")
    out = np.interp(xi_arr, s.grid.xi, s.x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class AffineInterpolant:
    """Continuous piecewise-affine interpolant of a piecewise-constant density.

    Nodes sit at the cell midpoints (value ``z_j``) and at the grid points
    (mean of the two neighbouring cells, with zero outside the support).
    """

    nodes: np.ndarray
    node_values: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.nodes, self.node_values, left=0.0, right=0.0)

    def h1_seminorm_sq(self) -> float:
        slopes = np.diff(self.node_values) / np.diff(self.nodes)
        return float(np.sum(slopes**2 * np.diff(self.nodes)))


def affine_interpolant(s: LagrangianState) -> AffineInterpolant:
    x, z = s.x, s.z
    K = z.size
    nodes = np.empty(2 * K + 1)
    nodes[0::2] = x
    nodes[1::2] = 0.5 * (x[1:] + x[:-1])
    zp = np.concatenate(([0.0], z, [0.0]))
    values = np.empty(2 * K + 1)
    values[0::2] = 0.5 * (zp[1:] + zp[:-1])
    values[1::2] = z
    return AffineInterpolant(nodes, values)


def l1_distance(u: PiecewiseConstantDensity, v: PiecewiseConstantDensity) -> float:
    """Exact L1 distance between two piecewise-constant densities."""
    pts = np.union1d(u.breakpoints, v.breakpoints)
    mids = 0.5 * (pts[1:] + pts[:-1])
    return float(np.sum(np.abs(u(mids) - v(mids)) * np.diff(pts)))


def build_initial_vector(
    u0: Callable[[float], float],
    support: tuple[float, float],
    grid: MassGrid,
    *,
    breakpoints: Sequence[float] = (),
    n_panels: int = 256,
    mass_tol: float = 1e-8,
    cell_tol: float = 1e-12,
) -> LagrangianState:
    """Quantile positions of ``u0``: ``x_0 = a``, ``x_K = b`` and every cell
    ``[x_j, x_{j+1}]`` carries mass ``xi_{j+1} - xi_j``.

    ``u0`` may vanish at isolated points but not on a whole interval.  Known
    kinks or jumps of ``u0`` should be passed as ``breakpoints`` so that the
    cumulative quadrature stays accurate.
    """
    a, b = map(float, support)
    if not b > a:
        raise DomainError(f"empty support [{a}, {b}]")
    inner = [p for p in breakpoints if a < p < b]
    panels = np.union1d(np.linspace(a, b, n_panels + 1), inner)

    probe = np.concatenate(
        [np.linspace(lo, hi, 9)[1:-1] for lo, hi in zip(panels[:-1], panels[1:])]
    )
    vals = np.array([u0(p) for p in probe], dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(vals < 0):
        raise DomainError("initial density must be finite and non-negative")

    def panel_mass(lo, hi):
        # tolerances sit at round-off level; the cell masses are checked below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return integrate.quad(u0, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]

    masses = np.array([panel_mass(lo, hi) for lo, hi in zip(panels[:-1], panels[1:])])
    if np.any(masses <= 0):
        bad = int(np.argmin(masses))
        raise DomainError(
            f"initial density vanishes on [{panels[bad]}, {panels[bad + 1]}]"
        )
    cum = np.concatenate(([0.0], np.cumsum(masses)))
    total = cum[-1]
    if abs(total - grid.M) > mass_tol * max(1.0, grid.M):
        raise QuantileError(
            f"measured mass {total!r} does not match grid mass {grid.M!r}"
        )
    # absorb the quadrature error so that the last cell closes exactly at b
    targets = grid.xi[1:-1] * (total / grid.M)

    x = np.empty(grid.K + 1)
    x[0], x[-1] = a, b
    for k, m in enumerate(targets, start=1):
        i = int(np.searchsorted(cum, m, side="right")) - 1
        i = min(max(i, 0), panels.size - 2)
        lo, hi = panels[i], panels[i + 1]
        rest = m - cum[i]
        if rest <= 0.0:
            x[k] = lo
            continue
        if rest >= masses[i]:
            x[k] = hi
            continue
        x[k] = optimize.brentq(
            lambda y: panel_mass(lo, y) - rest, lo, hi, xtol=1e-15, rtol=1e-15
        )
    state = LagrangianState(x, grid)

    got = np.array([panel_mass(lo, hi) for lo, hi in zip(x[:-1], x[1:])])
    err = np.max(np.abs(got - grid.cell_widths * (total / grid.M)))
    if err > cell_tol * max(1.0, grid.M) + 1e-13 * grid.K * grid.M:
        raise QuantileError(f"cell masses off by {err:.3e} after root finding")
    return state
