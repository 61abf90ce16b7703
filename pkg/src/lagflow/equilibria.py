"""Stationary states: continuous Barenblatt/Gaussian profiles and the discrete
entropy minimizer, plus error norms between them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, special

from .functionals import (
    ModelParams,
    entropy,
    entropy_gradient,
    entropy_hessian_bands,
    information,
    norm_delta,
    phi,
)
from .mass_mesh import (
    AffineInterpolant,
    DomainError,
    LagrangianState,
    MassGrid,
    PiecewiseConstantDensity,
)


class MinimizerError(RuntimeError):
    pass


@dataclass(frozen=True)
class EquilibriumProfile:
    """Unit-mass stationary profile ``(a - b x^2)_+^m`` or ``a exp(-Lam x^2)``."""

    params: ModelParams
    a: float
    b: float
    mass: float = 1.0

    @property
    def Lambda(self) -> float:
        return self.params.Lambda

    @property
    def exponent(self) -> float:
        return 1.0 / (self.params.alpha - 0.5)

    @property
    def radius(self) -> float:
        if self.params.is_log:
            return math.inf
        return math.sqrt(self.a / self.b)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.params.is_log:
            return self.mass * self.a * np.exp(-self.Lambda * x * x)
        base = np.maximum(self.a - self.b * x * x, 0.0)
        # exact zero on and beyond the edge, independent of rounding in a - b r^2
        base = np.where(np.abs(x) >= self.radius, 0.0, base)
        return self.mass * base**self.exponent

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.params.is_log:
            return self.mass * special.ndtr(x * math.sqrt(2.0 * self.Lambda))
        s = np.clip(x / self.radius, -1.0, 1.0)
        half = 0.5 * special.betainc(0.5, self.exponent + 1.0, s * s)
        return self.mass * (0.5 + np.sign(s) * half)

    def quantile(self, m) -> np.ndarray:
        q = np.asarray(m, dtype=float) / self.mass
        if np.any(q < 0) or np.any(q > 1):
            raise DomainError("quantile level outside [0, mass]")
        if self.params.is_log:
            return special.ndtri(q) / math.sqrt(2.0 * self.Lambda)
        t = np.abs(2.0 * q - 1.0)
        s2 = special.betaincinv(0.5, self.exponent + 1.0, t)
        return np.sign(q - 0.5) * np.sqrt(s2) * self.radius

    def entropy(self) -> float:
        """Continuous entropy including the confinement term."""
        r = self.radius
        lo, hi = (-r, r) if math.isfinite(r) else (-np.inf, np.inf)
        p = self.params

        def integrand(x):
            u = float(self(x))
            return float(phi(u, p)) + 0.5 * p.Lambda * x * x * u

        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        return val


def reference_profile(params: ModelParams, mass: float = 1.0) -> EquilibriumProfile:
    if not params.lam > 0:
        raise DomainError("stationary profiles need a positive confinement lambda")
    Lam = params.Lambda
    if params.is_log:
        return EquilibriumProfile(params, math.sqrt(Lam / math.pi), 0.0, mass)
    m = 1.0 / (params.alpha - 0.5)
    b = (params.alpha - 0.5) / math.sqrt(2.0 * params.alpha) * Lam
    # int (a - b x^2)_+^m dx = a^(m + 1/2) b^(-1/2) B(1/2, m + 1)
    a = (math.sqrt(b) / special.beta(0.5, m + 1.0)) ** (1.0 / (m + 0.5))
    return EquilibriumProfile(params, a, b, mass)


def _initial_guess(profile: EquilibriumProfile, grid: MassGrid) -> np.ndarray:
    # keep the end points strictly inside the (possibly infinite) support; a
    # single cell would collapse with the half-cell pull-in, so shrink it then
    for pull in (0.5, 0.25):
        xi = grid.xi.copy()
        xi[0] = pull * grid.cell_widths[0]
        xi[-1] = grid.M - pull * grid.cell_widths[-1]
        x = profile.quantile(xi * (profile.mass / grid.M))
        if np.all(np.diff(x) > 0):
            return x
    return np.linspace(-1.0, 1.0, grid.K + 1) * max(float(abs(x[0])), 1.0)


def discrete_minimizer(
    params: ModelParams,
    grid: MassGrid,
    *,
    tol: float = 1e-11,
    max_iter: int = 100,
    x0: np.ndarray | None = None,
) -> LagrangianState:
    """Unique minimizer of the discrete entropy (and of the information)."""
    if not params.lam > 0:
        raise DomainError("the discrete entropy has no minimizer for lambda = 0")
    profile = reference_profile(params, grid.M)
    x = _initial_guess(profile, grid) if x0 is None else np.asarray(x0, dtype=float)
    state = LagrangianState(x, grid)
    for attempt in range(2):
        try:
            return _newton_minimize(state, params, tol, max_iter)
        except MinimizerError:
            if attempt:
                raise
            rng = np.random.default_rng(grid.K)
            jitter = 1e-3 * rng.standard_normal(grid.K + 1) * np.diff(state.x).min()
            state = LagrangianState(np.sort(state.x + jitter), grid)
    raise AssertionError("unreachable")


def _newton_minimize(state, params, tol, max_iter):
    grid = state.grid
    H = entropy(state, params).value
    for _ in range(max_iter):
        grad = entropy_gradient(state, params)
        res = norm_delta(grad.metric, grid)
        if res <= tol:
            return state
        hess = entropy_hessian_bands(state, params)
        ab = np.zeros((2, grid.K + 1))
        ab[0, 1:] = hess.d1
        ab[1] = hess.d0
        step = -linalg.solveh_banded(ab, grad.partial)
        slope = float(grad.partial @ step)
        theta = 1.0
        while theta > 2.0**-40:
            trial = state.x + theta * step
            if np.all(np.diff(trial) > 0):
                cand = LagrangianState(trial, grid)
                Hc = entropy(cand, params).value
                if Hc <= H + 1e-4 * theta * slope or (
                    abs(Hc - H) <= 1e-14 * (1.0 + abs(H))
                    and norm_delta(entropy_gradient(cand, params).metric, grid) < res
                ):
                    state, H = cand, Hc
                    break
            theta *= 0.5
        else:
            raise MinimizerError(f"line search failed at residual {res:.3e}")
    res = norm_delta(entropy_gradient(state, params).metric, grid)
    if res <= tol:
        return state
    raise MinimizerError(f"no convergence, residual {res:.3e}")


@dataclass(frozen=True)
class Equilibrium:
    """Discrete minimizer together with the minimal functional values."""

    state: LagrangianState
    params: ModelParams
    H_min: float
    F_min: float

    @property
    def density(self) -> PiecewiseConstantDensity:
        return PiecewiseConstantDensity(self.state.x, self.state.z)


def equilibrium(params: ModelParams, grid: MassGrid) -> Equilibrium:
    s = discrete_minimizer(params, grid)
    return Equilibrium(s, params, entropy(s, params).value, information(s, params).value)


def _support_cuts(ref: EquilibriumProfile):
    r = ref.radius
    return [-r, r] if math.isfinite(r) else []


def lp_error(u: PiecewiseConstantDensity, ref: EquilibriumProfile, p: float = 2.0) -> float:
    """``||u - ref||_{L^p}`` by adaptive quadrature on every smooth piece."""
    if p < 1:
        raise DomainError("L^p error needs p >= 1")
    pts = np.union1d(u.breakpoints, _support_cuts(ref))
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        c = float(u(mid))
        val, _ = integrate.quad(
            lambda x: abs(c - float(ref(x))) ** p, lo, hi, epsabs=1e-16, epsrel=1e-12, limit=200
        )
        total += val
    r = ref.radius
    left, right = pts[0], pts[-1]
    tail_lo = -r if math.isfinite(r) else -np.inf
    tail_hi = r if math.isfinite(r) else np.inf
    for lo, hi in ((tail_lo, left), (right, tail_hi)):
        if hi > lo:
            val, _ = integrate.quad(
                lambda x: float(ref(x)) ** p, lo, hi, epsabs=1e-16, epsrel=1e-12, limit=200
            )
            total += val
    return total ** (1.0 / p)


def uniform_error(u_hat: AffineInterpolant, ref: EquilibriumProfile, samples: int = 20001) -> float:
    """Sup-norm distance, sampled densely plus at all interpolation nodes."""
    lo, hi = u_hat.nodes[0], u_hat.nodes[-1]
    r = ref.radius
    if math.isfinite(r):
        lo, hi = min(lo, -r), max(hi, r)
    else:
        pad = 8.0 / math.sqrt(ref.Lambda)
        lo, hi = min(lo, -pad), max(hi, pad)
    xs = np.union1d(np.linspace(lo, hi, samples), u_hat.nodes)
    return float(np.max(np.abs(u_hat(xs) - ref(xs))))


def linf_error(u: PiecewiseConstantDensity, ref: EquilibriumProfile, samples_per_cell: int = 64) -> float:
    """Essential sup distance; breakpoints themselves are excluded."""
    b = u.breakpoints
    t = (np.arange(samples_per_cell) + 0.5) / samples_per_cell
    xs = (b[:-1, None] + np.diff(b)[:, None] * t[None, :]).ravel()
    err = float(np.max(np.abs(u(xs) - ref(xs))))
    r = ref.radius
    if math.isfinite(r):
        outside = np.concatenate([np.linspace(-r, b[0], 257), np.linspace(b[-1], r, 257)])
        outside = outside[(outside < b[0]) | (outside > b[-1])]
        if outside.size:
            err = max(err, float(np.max(ref(outside))))
    else:
        err = max(err, float(ref(b[0])), float(ref(b[-1])))
    return err
