"""Implicit Euler / minimizing-movement time stepping.

Each step minimizes the Yosida functional

    Y(x) = |x - x_prev|^2 / (2 tau) + F(x)

by a damped Newton iteration started from ``x_prev``.  The Newton matrix
``W / tau + Hess F`` is pentadiagonal and factorized in band form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .equilibria import Equilibrium
from .functionals import (
    ModelParams,
    entropy,
    information,
    information_gradient,
    information_hessian_bands,
    norm_delta,
)
from .mass_mesh import (
    DomainError,
    LagrangianState,
    PiecewiseConstantDensity,
    density_from_state,
    l1_distance,
)

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A time step could not be solved to tolerance."""

    def __init__(self, message: str, residual: float, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.residual = residual
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepConfig:
    max_iter: int = 60
    tol: float = 1e-11
    backtrack: float = 0.5
    min_damping: float = 2.0**-30
    armijo: float = 1e-4
    mono_margin: float = 1e-14
    max_halvings: int = 10
    # round-off stop: a Newton update below roundoff*eps*|x|_inf counts as
    # converged when the residual is within floor_factor*tol or within the
    # residual change caused by rounding x (estimated from the Newton matrix)
    roundoff: float = 16.0
    floor_factor: float = 1e3

    def __post_init__(self):
        if not (self.tol > 0 and self.min_damping > 0 and 0 < self.backtrack < 1):
            raise DomainError("invalid Newton configuration")
        if self.max_iter < 1 or self.max_halvings < 0:
            raise DomainError("invalid Newton configuration")


@dataclass(frozen=True)
class StepReport:
    t: float
    tau: float
    newton_iters: int
    residual: float
    H: float
    F: float
    yosida: float
    H_slack: float = math.nan
    F_slack: float = math.nan


def yosida_value(x: LagrangianState, x_prev: LagrangianState, tau: float, params: ModelParams) -> float:
    d = x.x - x_prev.x
    return norm_delta(d, x.grid) ** 2 / (2.0 * tau) + information(x, params).value


def residual(x: LagrangianState, x_prev: LagrangianState, tau: float, params: ModelParams) -> np.ndarray:
    """``(x - x_prev)/tau + grad_delta F(x)``; zero exactly at a step solution."""
    if not x.grid.same_as(x_prev.grid):
        raise DomainError("states live on different mass grids")
    if not tau > 0:
        raise DomainError("time step must be positive")
    return (x.x - x_prev.x) / tau + information_gradient(x, params).metric


def _newton_matrix(x, tau, params):
    bands = information_hessian_bands(x, params)
    return bands.add_diagonal(x.grid.node_weights / tau)


def _residual_floor(A, x: LagrangianState) -> float:
    """Residual size produced by rounding every coordinate of ``x``.

    The metric residual moves by ``W^-1 A dx`` when ``x`` moves by ``dx``.
    """
    absA = type(A)(*(np.abs(d) for d in A))
    rows = absA.matvec(np.ones_like(x.x))
    ulp = np.finfo(float).eps * float(np.max(np.abs(x.x)))
    return ulp * norm_delta(rows / x.grid.node_weights, x.grid)


def solve_step(
    x_prev: LagrangianState,
    tau: float,
    params: ModelParams,
    cfg: StepConfig = StepConfig(),
    *,
    x_guess: LagrangianState | None = None,
) -> tuple[LagrangianState, int, float]:
    """One minimizing-movement step.  Returns (state, newton iterations, residual norm)."""
    if not tau > 0:
        raise DomainError("time step must be positive")
    grid = x_prev.grid
    w = grid.node_weights
    x = x_prev if x_guess is None else x_guess
    Y = yosida_value(x, x_prev, tau, params)
    span = x_prev.x[-1] - x_prev.x[0]
    margin = cfg.mono_margin * span

    for it in range(cfg.max_iter + 1):
        r = residual(x, x_prev, tau, params)
        rnorm = norm_delta(r, grid)
        if rnorm <= cfg.tol:
            return x, it, rnorm
        if it == cfg.max_iter:
            break
        gY = w * r  # Euclidean gradient of the Yosida functional
        A = _newton_matrix(x, tau, params)
        ab = A.to_ab()
        try:
            step = -linalg.solve_banded((2, 2), ab, gY, check_finite=False)
        except (linalg.LinAlgError, ValueError):
            step = None
        if step is None or not np.all(np.isfinite(step)) or gY @ step >= 0:
            # Newton matrix indefinite here: fall back to the metric gradient step
            step = -tau * r
        elif np.max(np.abs(step)) <= cfg.roundoff * np.finfo(float).eps * np.max(np.abs(x.x)):
            # the Newton update no longer changes x representably: the
            # residual sits at its floating-point floor
            if rnorm <= max(cfg.floor_factor * cfg.tol, _residual_floor(A, x)):
                return x, it, rnorm
        slope = float(gY @ step)

        theta = 1.0
        accepted = False
        while theta >= cfg.min_damping:
            trial = x.x + theta * step
            if np.all(np.diff(trial) > margin):
                cand = LagrangianState(trial, grid)
                Yc = yosida_value(cand, x_prev, tau, params)
                if Yc <= Y + cfg.armijo * theta * slope:
                    accepted = True
                elif abs(Yc - Y) <= 64 * np.finfo(float).eps * (1.0 + abs(Y)):
                    # merit differences are at round-off level; judge by the residual
                    accepted = norm_delta(residual(cand, x_prev, tau, params), grid) < rnorm
                if accepted:
                    x, Y = cand, Yc
                    break
            theta *= cfg.backtrack
        if not accepted:
            raise StepFailure(f"damping underflow at residual {rnorm:.3e}", rnorm)
    raise StepFailure(f"Newton did not converge, residual {rnorm:.3e}", rnorm)


@dataclass
class Trajectory:
    params: ModelParams
    times: list[float] = field(default_factory=list)
    states: list[LagrangianState] = field(default_factory=list)
    reports: list[StepReport | None] = field(default_factory=list)

    def append(self, t: float, state: LagrangianState, report: StepReport | None):
        if self.times and not t > self.times[-1]:
            raise DomainError("trajectory times must increase strictly")
        self.times.append(float(t))
        self.states.append(state)
        self.reports.append(report)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def grid(self):
        return self.states[0].grid

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.x for s in self.states])

    def densities(self) -> list[PiecewiseConstantDensity]:
        return [density_from_state(s) for s in self.states]

    def H(self) -> np.ndarray:
        return np.array([entropy(s, self.params).value for s in self.states])

    def F(self) -> np.ndarray:
        return np.array([information(s, self.params).value for s in self.states])


def uniform_schedule(tau: float, t_end: float) -> list[float]:
    """Constant steps of size ``tau`` covering ``[0, t_end]`` (last step may be shorter)."""
    if not tau > 0 or t_end < 0:
        raise DomainError("need tau > 0 and t_end >= 0")
    n = int(math.floor(t_end / tau + 1e-9))
    steps = [tau] * n
    rest = t_end - n * tau
    if rest > 1e-12 * max(1.0, t_end):
        steps.append(rest)
    return steps


def _solve_with_fallback(x_prev, tau, params, cfg, depth=0):
    """Solve a step of length tau, splitting it in halves on failure."""
    try:
        x, its, res = solve_step(x_prev, tau, params, cfg)
        return [(tau, x, its, res)]
    except StepFailure:
        if depth >= cfg.max_halvings:
            raise
        log.info("step tau=%g failed, halving (depth %d)", tau, depth + 1)
        first = _solve_with_fallback(x_prev, 0.5 * tau, params, cfg, depth + 1)
        second = _solve_with_fallback(first[-1][1], 0.5 * tau, params, cfg, depth + 1)
        return first + second


def evolve(
    initial: LagrangianState,
    schedule: Iterable[float],
    params: ModelParams,
    cfg: StepConfig = StepConfig(),
    *,
    equilibrium: Equilibrium | None = None,
    t0: float = 0.0,
) -> Trajectory:
    """Run the scheme over ``schedule``.

    With an ``equilibrium`` (lambda > 0) every report carries the slack of the
    per-step decay inequalities ``(1 + 2 tau lam) gap_n <= gap_{n-1}`` for H
    and F; negative slack means the inequality is violated.
    """
    traj = Trajectory(params)
    H0 = entropy(initial, params).value
    F0 = information(initial, params).value
    traj.append(t0, initial, StepReport(t0, 0.0, 0, 0.0, H0, F0, F0))
    t = t0
    x = initial
    H_prev, F_prev = H0, F0
    for tau in schedule:
        try:
            pieces = _solve_with_fallback(x, tau, params, cfg)
        except StepFailure as exc:
            exc.trajectory = traj
            raise
        for sub_tau, x_new, its, res in pieces:
            t += sub_tau
            H = entropy(x_new, params).value
            F = information(x_new, params).value
            Y = norm_delta(x_new.x - x.x, x.grid) ** 2 / (2.0 * sub_tau) + F
            h_slack = f_slack = math.nan
            if equilibrium is not None:
                fac = 1.0 + 2.0 * sub_tau * params.lam
                h_slack = (H_prev - equilibrium.H_min) - fac * (H - equilibrium.H_min)
                f_slack = (F_prev - equilibrium.F_min) - fac * (F - equilibrium.F_min)
            traj.append(t, x_new, StepReport(t, sub_tau, its, res, H, F, Y, h_slack, f_slack))
            x, H_prev, F_prev = x_new, H, F
    return traj


@dataclass(frozen=True)
class AdmissibilityBounds:
    support: float
    z_upper: float
    confined_support: float = math.nan


def admissibility_bounds(
    x_prev: LagrangianState, tau: float, params: ModelParams, C: float, *, F0: float | None = None
) -> AdmissibilityBounds:
    """A-priori bounds on the support and the density of the next step.

    ``support`` bounds ``max |x_k|`` on the sublevel ``{Y <= C}``; ``z_upper``
    bounds the cell densities there.  For lambda > 0 and an initial
    information ``F0`` the confinement gives ``|x|_inf^2 <= 2 F0 / (lam w_min)``.
    """
    grid = x_prev.grid
    w_min = float(np.min(grid.node_weights))
    if C < information(x_prev, params).value - 1e-12 * max(1.0, abs(C)):
        raise DomainError("C must bound the information of the previous state")
    L = math.sqrt(2.0 * tau * C / w_min) + float(np.max(np.abs(x_prev.x)))
    p = params.power
    z_up = (grid.M * C / params.theta + (2.0 * L) ** p) ** (1.0 / p)
    conf = math.nan
    if params.lam > 0 and F0 is not None:
        conf = math.sqrt(2.0 * F0 / (params.lam * w_min))
    return AdmissibilityBounds(L, z_up, conf)


def l1_errors(traj: Trajectory, reference: LagrangianState) -> np.ndarray:
    ref = density_from_state(reference)
    return np.array([l1_distance(u, ref) for u in traj.densities()])


def fit_log_slope(t: Sequence[float], y: Sequence[float], window: tuple[float, float]) -> float:
    """Least-squares slope of ``log y`` against ``t`` over a time window."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12) & (y > 0)
    if mask.sum() < 2:
        raise DomainError("not enough positive samples in the fit window")
    return float(np.polyfit(t[mask], np.log(y[mask]), 1)[0])
