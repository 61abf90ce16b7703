"""Dilations, scaling laws and self-similar solutions without confinement.

Dilating a state by ``r`` multiplies all positions by ``r``.  The unconfined
functionals then transform as

    H_{a,0}(r x) = r^{-(a - 1/2)} H_{a,0}(x)          (a > 1/2)
    H_{1/2,0}(r x) = H_{1/2,0}(x) - Theta M ln r
    F_{a,0}(r x) = r^{-(2a + 1)} F_{a,0}(x)

so a step of the confined scheme maps onto a step of the unconfined one with
a transformed time step.  Starting from the confined minimizer this produces
a discrete self-similar solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .equilibria import EquilibriumProfile, discrete_minimizer, lp_error, reference_profile
from .functionals import ModelParams, entropy, information
from .mass_mesh import DomainError, LagrangianState, MassGrid, density_from_state, l1_distance
from .stepper import StepConfig, Trajectory, evolve


def dilate(s: LagrangianState, r: float) -> LagrangianState:
    if not r > 0 or not math.isfinite(r):
        raise DomainError(f"dilation factor must be positive, got {r!r}")
    return LagrangianState(r * s.x, s.grid)


def check_scaling_identities(s: LagrangianState, params: ModelParams, r: float) -> tuple[float, float]:
    """Relative residuals of the H and F scaling laws (confinement dropped)."""
    p0 = params.with_lam(0.0)
    sr = dilate(s, r)
    H, Hr = entropy(s, p0).value, entropy(sr, p0).value
    F, Fr = information(s, p0).value, information(sr, p0).value
    if p0.is_log:
        H_pred = H - p0.theta * s.grid.M * math.log(r)
    else:
        H_pred = r ** (-(p0.alpha - 0.5)) * H
    F_pred = r ** (-(2.0 * p0.alpha + 1.0)) * F
    res_H = abs(Hr - H_pred) / max(abs(H_pred), abs(H), 1e-300)
    res_F = abs(Fr - F_pred) / max(abs(F_pred), 1e-300)
    return res_H, res_F


def transfer_parameters(tau: float, lam: float, R: float, S: float, alpha: float) -> tuple[float, float]:
    """Step size and confinement of the dilated problem.

    If ``x`` solves a step of size ``tau`` with confinement ``lam`` from
    ``y``, then ``R x`` solves a step of size ``tau_hat`` with confinement
    ``lam_hat`` from ``S y``.
    """
    if not S > 0 or not R > S:
        raise DomainError(f"need R > S > 0, got R={R!r}, S={S!r}")
    if not tau > 0 or lam < 0:
        raise DomainError("need tau > 0 and lam >= 0")
    tau_hat = tau * S * R ** (2.0 * alpha + 2.0)
    lam_hat = (S * (1.0 + lam * tau) - R) / (tau_hat * R)
    return tau_hat, lam_hat


@dataclass(frozen=True)
class RescaleSchedule:
    base_steps: np.ndarray
    alpha: float

    def __post_init__(self):
        steps = np.asarray(self.base_steps, dtype=float)
        if np.any(steps <= 0):
            raise DomainError("base steps must be positive")
        object.__setattr__(self, "base_steps", steps)

    @property
    def S(self) -> np.ndarray:
        """Dilation factors, ``S[0] = 1`` and ``S[n] = (1 + tau_n) S[n-1]``."""
        return np.concatenate(([1.0], np.cumprod(1.0 + self.base_steps)))

    @property
    def t(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.base_steps)))

    @property
    def tau_hat(self) -> np.ndarray:
        S = self.S
        return self.base_steps * S[:-1] * S[1:] ** (2.0 * self.alpha + 2.0)

    @property
    def s_hat(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.tau_hat)))

    @property
    def tau_max(self) -> float:
        return float(self.base_steps.max()) if self.base_steps.size else 0.0

    @property
    def a_tau(self) -> float:
        return (1.0 + self.tau_max) ** (-(2.0 * self.alpha + 2.0))

    @property
    def b_tau(self) -> float:
        return 1.0 + 2.0 * self.tau_max

    def s_hat_bound(self) -> np.ndarray:
        k = 2.0 * self.alpha + 3.0
        return (1.0 + self.tau_max) ** (2.0 * self.alpha + 2.0) / k * np.expm1(k * self.t)

    def decay_factors(self) -> np.ndarray:
        return discrete_decay_factor(self.s_hat, self.tau_max, self.alpha)

    @classmethod
    def until(cls, tau: float, s_end: float, alpha: float) -> "RescaleSchedule":
        """Constant base steps until the transformed time reaches ``s_end``."""
        if not tau > 0 or s_end < 0:
            raise DomainError("need tau > 0 and s_end >= 0")
        # s_hat grows like S^(2 alpha + 3) / (2 alpha + 3); estimate n, then trim
        k = 2.0 * alpha + 3.0
        n = int(math.ceil(math.log1p(k * s_end) / (k * math.log1p(tau)))) + 2
        sched = cls(np.full(n, tau), alpha)
        while sched.s_hat[-1] < s_end:
            n *= 2
            sched = cls(np.full(n, tau), alpha)
        n_needed = int(np.searchsorted(sched.s_hat, s_end, side="left"))
        return cls(np.full(n_needed, tau), alpha)


def continuous_rescale_factor(t, alpha: float):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    k = 2.0 * alpha + 3.0
    out = (1.0 + k * t) ** (1.0 / k)
    return float(out) if out.ndim == 0 else out


def discrete_decay_factor(t, tau: float, alpha: float):
    """``(1 + a_tau k t)^(1 / (b_tau k))`` with ``k = 2 alpha + 3``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    k = 2.0 * alpha + 3.0
    a = (1.0 + tau) ** (-(2.0 * alpha + 2.0))
    b = 1.0 + 2.0 * tau
    out = (1.0 + a * k * t) ** (1.0 / (b * k))
    return float(out) if out.ndim == 0 else out


def confined_minimizer(alpha: float, grid: MassGrid) -> LagrangianState:
    return discrete_minimizer(ModelParams(alpha, 1.0), grid)


def self_similar_solution(
    params: ModelParams, grid: MassGrid, schedule: RescaleSchedule, x_min: LagrangianState | None = None
) -> Trajectory:
    """Dilations ``S[n] x_min`` indexed by the transformed times ``s_hat``."""
    if params.lam != 0:
        raise DomainError("self-similar solutions are for lambda = 0")
    if x_min is None:
        x_min = confined_minimizer(params.alpha, grid)
    traj = Trajectory(params)
    for s, S in zip(schedule.s_hat, schedule.S):
        traj.append(s, dilate(x_min, S), None)
    return traj


def evolve_unconfined(
    x0: LagrangianState, schedule: RescaleSchedule, cfg: StepConfig = StepConfig()
) -> Trajectory:
    """Run the lambda = 0 scheme with the transformed steps ``tau_hat``."""
    return evolve(x0, schedule.tau_hat, ModelParams(schedule.alpha, 0.0), cfg)


def rescaled_from_confined(base: Trajectory, schedule: RescaleSchedule) -> list[LagrangianState]:
    """Dilate a lambda = 1 trajectory into a lambda = 0 trajectory on ``s_hat``."""
    if len(base) != schedule.S.size:
        raise DomainError("trajectory and schedule lengths differ")
    return [dilate(s, S) for s, S in zip(base.states, schedule.S)]


def max_coordinate_deviation(a: LagrangianState, b: LagrangianState) -> float:
    return float(np.max(np.abs(a.x - b.x)))


def l1_to_rescaled_profile(s: LagrangianState, profile: EquilibriumProfile, R: float) -> float:
    """L1 distance between the density of ``s`` and ``profile`` dilated by ``R``."""
    # L1 is invariant under a joint dilation, so undo R on the discrete side
    return lp_error(density_from_state(dilate(s, 1.0 / R)), profile, p=1.0)


@dataclass(frozen=True)
class AsymptoticsReport:
    """Quantities entering the intermediate-asymptotics estimate."""

    s_hat: np.ndarray
    l1_dev: np.ndarray
    decay: np.ndarray
    gap0: float
    better_slack: np.ndarray

    @property
    def fitted_constant(self) -> float:
        """Smallest ``c`` with ``l1_dev <= c sqrt(gap0) / decay`` at every step."""
        return float(np.max(self.l1_dev * self.decay) / math.sqrt(self.gap0))


def intermediate_asymptotics(
    x0: LagrangianState, schedule: RescaleSchedule, cfg: StepConfig = StepConfig()
) -> AsymptoticsReport:
    """Evolve the confined (lambda = 1) scheme and measure its unconfined image.

    ``l1_dev[n]`` is the L1 distance between the unconfined solution and the
    discrete self-similar profile at step n; by dilation invariance it equals
    the confined L1 distance to ``x_min``.  ``better_slack`` is the slack of
    ``(1 + 2 tau_n)(H1(xh^n) - H1(b^n)) <= H1(xh^{n-1}) - H1(b^{n-1})`` evaluated on
    the dilated vectors.
    """
    grid = x0.grid
    p1 = ModelParams(schedule.alpha, 1.0)
    x_min = discrete_minimizer(p1, grid)
    base = evolve(x0, schedule.base_steps, p1, cfg)
    hats = rescaled_from_confined(base, schedule)
    bars = [dilate(x_min, S) for S in schedule.S]
    u_min = density_from_state(x_min)
    l1 = np.array([l1_distance(density_from_state(s), u_min) for s in base.states])
    gaps = np.array([entropy(h, p1).value - entropy(b, p1).value for h, b in zip(hats, bars)])
    slack = gaps[:-1] - (1.0 + 2.0 * schedule.base_steps) * gaps[1:]
    gap0 = entropy(x0, p1).value - entropy(x_min, p1).value
    return AsymptoticsReport(schedule.s_hat, l1, schedule.decay_factors(), gap0, slack)


def nearest_indices(times: Sequence[float], targets: Sequence[float]) -> list[int]:
    """For every target the index of the last time not exceeding it."""
    times = np.asarray(times, dtype=float)
    out = []
    for t in targets:
        i = int(np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
        if i < 0:
            raise DomainError(f"target time {t} precedes the trajectory")
        out.append(i)
    return out


def profile_at_scale(alpha: float) -> EquilibriumProfile:
    """The continuous confined profile for lambda = 1."""
    return reference_profile(ModelParams(alpha, 1.0))
