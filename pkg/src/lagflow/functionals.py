"""Discrete entropy and information functionals on Lagrangian states.

Notation: ``p = alpha + 1/2``.  With ``z_j`` the cell densities (zero outside
the support) and ``w_k`` the node weights of the grid,

    H(x) = sum_j delta_j f(z_j) + (Lam/2) sum_k w_k x_k^2
    dH0/dx_k = Theta (z_right(k)^p - z_left(k)^p)
    F(x) = sum_k (dH0/dx_k)^2 / w_k + (lam/2) sum_k w_k x_k^2

Everything is expressed with the cell-wise vectors ``v_j = e_j - e_{j+1}`` so
that the Hessian of the unperturbed entropy is ``A = sum_j c_j v_j v_j^T``
and the information gradient is ``2 A W^{-1} g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mass_mesh import DomainError, LagrangianState, MassGrid, PiecewiseConstantDensity


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    lam: float = 0.0

    def __post_init__(self):
        if not 0.5 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [1/2, 1], got {self.alpha!r}")
        if not self.lam >= 0.0 or not math.isfinite(self.lam):
            raise DomainError(f"lambda must be finite and >= 0, got {self.lam!r}")

    @property
    def theta(self) -> float:
        if self.alpha == 0.5:
            return 0.5
        return math.sqrt(2.0 * self.alpha) / (2.0 * self.alpha + 1.0)

    @property
    def Lambda(self) -> float:
        return math.sqrt(self.lam / (2.0 * self.alpha + 1.0))

    @property
    def power(self) -> float:
        return self.alpha + 0.5

    @property
    def is_log(self) -> bool:
        return self.alpha == 0.5

    def with_lam(self, lam: float) -> "ModelParams":
        return ModelParams(self.alpha, lam)


class FunctionalValue(NamedTuple):
    internal: float
    drift: float

    @property
    def value(self) -> float:
        return self.internal + self.drift

    def __float__(self) -> float:
        return self.value


class Gradient(NamedTuple):
    partial: np.ndarray
    metric: np.ndarray


def inner_product(v, w, grid: MassGrid) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    n = grid.K + 1
    if v.shape != (n,) or w.shape != (n,):
        raise DomainError(f"vectors must have length {n}")
    return float(np.sum(grid.node_weights * (v * w)))


def norm_delta(v, grid: MassGrid) -> float:
    return math.sqrt(inner_product(v, v, grid))


def entropy_density(s, params: ModelParams):
    """The generator f of the internal entropy, applied elementwise."""
    s = np.asarray(s, dtype=float)
    if params.is_log:
        return params.theta * np.log(s)
    q = params.alpha - 0.5
    return params.theta * s**q / q


def phi(s, params: ModelParams):
    """Continuous entropy integrand, phi(s) = s f(s)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = s * entropy_density(s, params)
    return np.where(s > 0, out, 0.0)


def _drift(x, grid, coef):
    return 0.5 * coef * float(np.sum(grid.node_weights * x * x))


def entropy(s: LagrangianState, params: ModelParams) -> FunctionalValue:
    internal = float(np.sum(s.grid.cell_widths * entropy_density(s.z, params)))
    return FunctionalValue(internal, _drift(s.x, s.grid, params.Lambda))


def _h0_partial(z, params):
    # dH0/dx_k = Theta (z_{k+1/2}^p - z_{k-1/2}^p), zero density outside
    zp = np.concatenate(([0.0], z**params.power, [0.0]))
    return params.theta * np.diff(zp)


def information(s: LagrangianState, params: ModelParams) -> FunctionalValue:
    g = _h0_partial(s.z, params)
    internal = float(np.sum(g * g / s.grid.node_weights))
    return FunctionalValue(internal, _drift(s.x, s.grid, params.lam))


def entropy_gradient(s: LagrangianState, params: ModelParams) -> Gradient:
    w = s.grid.node_weights
    partial = _h0_partial(s.z, params) + params.Lambda * w * s.x
    return Gradient(partial, partial / w)


def _cell_coefficients(z, grid, params):
    """Second and third derivative weights of H0 along ``v_j``."""
    p = params.power
    dm = grid.cell_widths
    c = params.theta * p * z ** (p + 1.0) / dm
    d = params.theta * p * (p + 1.0) * z ** (p + 2.0) / dm**2
    return c, d


def _tridiag_from_cells(c):
    n = c.size + 1
    d0 = np.zeros(n)
    d0[:-1] += c
    d0[1:] += c
    return d0, -c


def information_gradient(s: LagrangianState, params: ModelParams) -> Gradient:
    w = s.grid.node_weights
    g = _h0_partial(s.z, params)
    c, _ = _cell_coefficients(s.z, s.grid, params)
    h = g / w
    vh = h[:-1] - h[1:]  # v_j . W^{-1} g
    ag = np.zeros_like(h)
    ag[:-1] += c * vh
    ag[1:] -= c * vh
    partial = 2.0 * ag + params.lam * w * s.x
    return Gradient(partial, partial / w)


class Bands(NamedTuple):
    """Symmetric band matrix stored by diagonals (main, first, second)."""

    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def to_dense(self) -> np.ndarray:
        n = self.d0.size
        A = np.diag(self.d0)
        if n > 1:
            A += np.diag(self.d1, 1) + np.diag(self.d1, -1)
        if n > 2:
            A += np.diag(self.d2, 2) + np.diag(self.d2, -2)
        return A

    def to_ab(self) -> np.ndarray:
        """LAPACK general band layout with two sub- and super-diagonals."""
        n = self.d0.size
        ab = np.zeros((5, n))
        ab[2] = self.d0
        ab[1, 1:] = self.d1
        ab[3, :-1] = self.d1
        ab[0, 2:] = self.d2
        ab[4, :-2] = self.d2
        return ab

    def matvec(self, v) -> np.ndarray:
        out = self.d0 * v
        out[:-1] += self.d1 * v[1:]
        out[1:] += self.d1 * v[:-1]
        out[:-2] += self.d2 * v[2:]
        out[2:] += self.d2 * v[:-2]
        return out

    def add_diagonal(self, diag) -> "Bands":
        return Bands(self.d0 + diag, self.d1, self.d2)


def entropy_hessian_bands(s: LagrangianState, params: ModelParams) -> Bands:
    c, _ = _cell_coefficients(s.z, s.grid, params)
    a0, a1 = _tridiag_from_cells(c)
    a0 = a0 + params.Lambda * s.grid.node_weights
    return Bands(a0, a1, np.zeros(max(a1.size - 1, 0)))


def information_hessian_bands(s: LagrangianState, params: ModelParams) -> Bands:
    w = s.grid.node_weights
    r = 1.0 / w
    g = _h0_partial(s.z, params)
    c, d = _cell_coefficients(s.z, s.grid, params)
    a0, a1 = _tridiag_from_cells(c)

    # 2 A W^{-1} A
    b0 = a0 * a0 * r
    b0[1:] += a1 * a1 * r[:-1]
    b0[:-1] += a1 * a1 * r[1:]
    b1 = a0[:-1] * r[:-1] * a1 + a1 * r[1:] * a0[1:]
    b2 = a1[:-1] * r[1:-1] * a1[1:]

    # 2 sum_j d_j (v_j . W^{-1} g) v_j v_j^T
    h = g * r
    e = d * (h[:-1] - h[1:])
    t0, t1 = _tridiag_from_cells(e)

    d0 = 2.0 * (b0 + t0) + params.lam * w
    return Bands(d0, 2.0 * (b1 + t1), 2.0 * b2)


def information_hessian(s: LagrangianState, params: ModelParams) -> np.ndarray:
    return information_hessian_bands(s, params).to_dense()


def information_stencil(s: LagrangianState, params: ModelParams) -> np.ndarray:
    """Flux-difference form of the metric information gradient on a uniform grid.

    Returns ``C/delta * (z_{k-1/2}^{a+3/2} D2_{k-1/2} - z_{k+1/2}^{a+3/2} D2_{k+1/2}) + lam x_k``
    with ``C = 2 alpha / (2 alpha + 1)``; it coincides with the metric
    gradient of the information.
    """
    grid = s.grid
    if not grid.uniform:
        raise DomainError("the stencil form is stated for uniform grids")
    delta = grid.delta
    p = params.power
    a = params.alpha
    z = np.concatenate(([0.0, 0.0], s.z, [0.0, 0.0]))
    zp = z**p
    # second differences at every cell incl. one ghost cell on each side
    d2 = (zp[2:] - 2.0 * zp[1:-1] + zp[:-2]) / delta**2
    flux = z[1:-1] ** (a + 1.5) * d2  # ghost, cells..., ghost
    const = 2.0 * a / (2.0 * a + 1.0)
    return const / delta * (flux[:-1] - flux[1:]) + params.lam * s.x


def total_variation(values) -> float:
    """Total variation of a compactly supported piecewise-constant function."""
    f = np.asarray(values, dtype=float)
    if f.size == 0:
        return 0.0
    return float(np.sum(np.abs(np.diff(f))) + abs(f[0]) + abs(f[-1]))


def pressure_transform(u: PiecewiseConstantDensity, params: ModelParams) -> PiecewiseConstantDensity:
    """Apply ``s -> Theta s^(alpha+1/2)`` cellwise."""
    return PiecewiseConstantDensity(u.breakpoints, params.theta * u.values**params.power)


def check_entropy_information_relation(s: LagrangianState, params: ModelParams) -> float:
    """Relative residual of F = |grad H|^2 + (2 alpha - 1) Lam H (or + Lam M at alpha = 1/2)."""
    F = information(s, params).value
    grad = entropy_gradient(s, params).metric
    lhs_grad = norm_delta(grad, s.grid) ** 2
    if params.is_log:
        rhs = lhs_grad + params.Lambda * s.grid.M
    else:
        H = entropy(s, params).value
        rhs = lhs_grad + (2.0 * params.alpha - 1.0) * params.Lambda * H
    return abs(F - rhs) / max(1.0, abs(F))
