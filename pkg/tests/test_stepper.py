import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagflow.cli import sine_bump
from lagflow.equilibria import equilibrium
from lagflow.functionals import ModelParams, information, information_gradient, norm_delta
from lagflow.mass_mesh import DomainError, LagrangianState, MassGrid, build_initial_vector, density_from_state
from lagflow.stepper import (
    StepConfig,
    StepFailure,
    admissibility_bounds,
    evolve,
    fit_log_slope,
    residual,
    solve_step,
    uniform_schedule,
    yosida_value,
)

from conftest import params_st, random_state, states
from oracles import central_gradient, pattern_search, yosida_batch


class TestResidual:
    @given(states(max_K=8), params_st, st.floats(1e-3, 1.0))
    def test_is_yosida_gradient(self, s, p, tau):
        rng = np.random.default_rng(s.grid.K)
        prev = random_state(rng, s.grid)
        Y = lambda x: yosida_value(LagrangianState(x, s.grid), prev, tau, p)
        fd = central_gradient(Y, s.x, 1e-6 * np.ptp(s.x))
        r = residual(s, prev, tau, p) * s.grid.node_weights
        assert np.max(np.abs(fd - r)) <= 1e-6 * max(1.0, np.max(np.abs(r)))

    def test_fixed_point_at_minimizer(self):
        p = ModelParams(1.0, 5.0)
        eq = equilibrium(p, MassGrid.uniform_grid(20))
        assert norm_delta(residual(eq.state, eq.state, 0.1, p), eq.state.grid) <= 1e-9

    def test_large_tau_limit(self):
        rng = np.random.default_rng(1)
        g = MassGrid.uniform_grid(6)
        s, prev = random_state(rng, g), random_state(rng, g)
        p = ModelParams(0.75, 1.0)
        np.testing.assert_allclose(residual(s, prev, 1e12, p), information_gradient(s, p).metric, atol=1e-10)

    def test_yosida_zero_movement(self):
        s = random_state(np.random.default_rng(2), MassGrid.uniform_grid(5))
        p = ModelParams(0.6, 2.0)
        assert yosida_value(s, s, 0.1, p) == information(s, p).value

    def test_errors(self):
        a = LagrangianState([0.0, 1.0, 2.0], MassGrid.uniform_grid(2))
        b = LagrangianState([0.0, 1.0, 2.0], MassGrid.nonuniform_grid([0.0, 0.3, 1.0]))
        p = ModelParams(1.0)
        with pytest.raises(DomainError):
            residual(a, b, 0.1, p)
        with pytest.raises(DomainError):
            residual(a, a, 0.0, p)


class TestSolveStep:
    def test_brute_force_small(self):
        p = ModelParams(1.0, 1.0)
        g = MassGrid.uniform_grid(1)
        prev = LagrangianState([-0.5, 0.5], g)
        x, _, res = solve_step(prev, 0.01, p)
        x_bf = pattern_search(yosida_batch(1.0, 1.0, 1.0, prev.x, 0.01), prev.x, 0.05)
        np.testing.assert_allclose(x.x, x_bf, atol=1e-8)
        assert res <= 1e-11

    def test_minimizer_is_fixed_point(self):
        p = ModelParams(1.0, 5.0)
        eq = equilibrium(p, MassGrid.uniform_grid(30))
        x, its, _ = solve_step(eq.state, 1e-3, p)
        assert its <= 2
        np.testing.assert_allclose(x.x, eq.state.x, atol=1e-11)

    def test_support_expands_without_confinement(self):
        g = MassGrid.uniform_grid(10)
        s = LagrangianState(g.xi - 0.5, g)
        x, _, _ = solve_step(s, 1e-3, ModelParams(0.8, 0.0))
        assert x.x[0] < s.x[0] and x.x[-1] > s.x[-1]

    @settings(max_examples=25)
    @given(states(max_K=10), params_st, st.floats(1e-4, 1e-1))
    def test_dissipates_information(self, s, p, tau):
        x, _, res = solve_step(s, tau, p)
        F0, F1 = information(s, p).value, information(x, p).value
        assert F1 <= F0 + 1e-12 * max(1.0, abs(F0))
        assert np.all(np.diff(x.x) > 0)

    def test_failure_signal(self):
        g = MassGrid.uniform_grid(8)
        s = random_state(np.random.default_rng(0), g)
        with pytest.raises(StepFailure) as exc:
            solve_step(s, 1.0, ModelParams(1.0, 1.0), StepConfig(max_iter=1, tol=1e-30, floor_factor=1.0))
        assert exc.value.residual > 0

    def test_config_validation(self):
        with pytest.raises(DomainError):
            StepConfig(tol=0.0)
        with pytest.raises(DomainError):
            StepConfig(backtrack=1.0)


class TestEvolve:
    def test_empty_schedule(self, sine_state_50):
        traj = evolve(sine_state_50, [], ModelParams(1.0, 5.0))
        assert len(traj) == 1 and traj.times == [0.0]

    def test_schedule(self):
        assert uniform_schedule(0.1, 0.0) == []
        steps = uniform_schedule(0.3, 1.0)
        assert len(steps) == 4 and math.isclose(sum(steps), 1.0)
        assert len(uniform_schedule(1e-3, 0.8)) == 800
        with pytest.raises(DomainError):
            uniform_schedule(0.0, 1.0)

    def test_halving_fallback(self, sine_state_50):
        # a tight iteration budget forces the fallback to split the step
        cfg = StepConfig(max_iter=5)
        traj = evolve(sine_state_50, [0.05], ModelParams(1.0, 5.0), cfg)
        assert len(traj) > 2
        assert math.isclose(traj.times[-1], 0.05)
        assert all(b > a for a, b in zip(traj.times, traj.times[1:]))

    def test_failure_carries_partial_trajectory(self, sine_state_50):
        cfg = StepConfig(max_iter=1, tol=1e-30, floor_factor=1.0, max_halvings=1)
        with pytest.raises(StepFailure) as exc:
            evolve(sine_state_50, [1e-3, 1e-3], ModelParams(1.0, 5.0), cfg)
        assert exc.value.trajectory is not None and len(exc.value.trajectory) >= 1

    def test_short_run_diagnostics(self):
        grid = MassGrid.uniform_grid(25)
        from lagflow.cli import make_initial, RunConfig

        p = ModelParams(1.0, 5.0)
        x0 = make_initial(RunConfig(K=25), grid)
        eq = equilibrium(p, grid)
        traj = evolve(x0, uniform_schedule(1e-3, 0.2), p, equilibrium=eq)
        for r in traj.reports[1:]:
            scale = max(1.0, abs(r.H), abs(r.F))
            assert r.H_slack >= -1e-10 * scale and r.F_slack >= -1e-10 * scale
            assert r.residual <= 1e-8
        for u in traj.densities():
            assert abs(u.mass - 1.0) <= 1e-14
        F = traj.F()
        assert np.all(np.diff(F) <= 1e-12 * F[0])

    def test_fit_log_slope(self):
        t = np.linspace(0, 1, 11)
        assert fit_log_slope(t, 3 * np.exp(-2 * t), (0.0, 1.0)) == pytest.approx(-2.0)
        with pytest.raises(DomainError):
            fit_log_slope(t, np.exp(-t), (2.0, 3.0))


class TestBounds:
    def test_limit_small_tau(self, sine_state_50):
        p = ModelParams(1.0, 5.0)
        C = information(sine_state_50, p).value
        b = admissibility_bounds(sine_state_50, 1e-14, p, C)
        assert b.support == pytest.approx(np.max(np.abs(sine_state_50.x)), rel=1e-6)

    def test_needs_energy_bound(self, sine_state_50):
        p = ModelParams(1.0, 5.0)
        with pytest.raises(DomainError):
            admissibility_bounds(sine_state_50, 1e-3, p, 0.0)

    def test_hold_along_trajectory(self, sine_state_50):
        p = ModelParams(1.0, 5.0)
        F0 = information(sine_state_50, p).value
        traj = evolve(sine_state_50, uniform_schedule(1e-3, 0.1), p)
        for a, b in zip(traj.states[:-1], traj.states[1:]):
            bd = admissibility_bounds(a, 1e-3, p, information(a, p).value, F0=F0)
            assert b.z.max() <= bd.z_upper
            assert np.abs(b.x).max() <= bd.support
            assert np.abs(b.x).max() <= bd.confined_support


@pytest.mark.parametrize("K", [200, 400])
def test_fine_grid_step_stops_at_roundoff_floor(K):
    # the residual floor grows with K past the fixed cap of floor_factor * tol
    params = ModelParams(1.0, 5.0)
    x0 = build_initial_vector(sine_bump, (-math.pi, math.pi), MassGrid.uniform_grid(K), breakpoints=[0.0])
    x, its, rnorm = solve_step(x0, 1e-3, params)
    assert its <= 10
    assert rnorm < 1e-6
    # a further Newton solve from the result does not move it
    x2, its2, _ = solve_step(x0, 1e-3, params, x_guess=x)
    assert np.max(np.abs(x2.x - x.x)) <= 1e-13
