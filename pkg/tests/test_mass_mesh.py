import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from lagflow.mass_mesh import (
    DomainError,
    LagrangianState,
    MassGrid,
    PiecewiseConstantDensity,
    QuantileError,
    affine_interpolant,
    build_initial_vector,
    density_from_state,
    l1_distance,
    lagrangian_map,
)
from lagflow.cli import sine_bump
from lagflow.rescaling import dilate

from conftest import states


class TestMassGrid:
    def test_uniform_weights(self):
        g = MassGrid.uniform_grid(4, M=2.0)
        assert g.delta == 0.5
        np.testing.assert_array_equal(g.node_weights, np.full(5, 0.5))
        np.testing.assert_array_equal(g.cell_widths, np.full(4, 0.5))

    def test_nonuniform_weights_sum_to_mass(self):
        g = MassGrid.nonuniform_grid([0.0, 0.1, 0.4, 1.0])
        np.testing.assert_allclose(g.node_weights, [0.05, 0.2, 0.45, 0.3])
        assert math.isclose(g.node_weights.sum(), g.M)
        assert math.isclose(g.cell_widths.sum(), g.M)
        with pytest.raises(DomainError):
            g.delta

    @given(st.integers(1, 200), st.floats(0.1, 10.0))
    def test_cell_masses_sum(self, K, M):
        g = MassGrid.uniform_grid(K, M)
        assert abs(g.cell_widths.sum() - M) <= K * np.finfo(float).eps * M

    @pytest.mark.parametrize("xi", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5, 1.0], [0.0, 0.6, 0.3]])
    def test_invalid(self, xi):
        with pytest.raises(DomainError):
            MassGrid.nonuniform_grid(xi)

    def test_invalid_uniform(self):
        for K, M in ((0, 1.0), (2.5, 1.0), (3, 0.0)):
            with pytest.raises(DomainError):
                MassGrid.uniform_grid(K, M)


class TestState:
    def test_rejects_non_monotone(self):
        g = MassGrid.uniform_grid(2)
        for x in ([0.0, 0.0, 1.0], [0.0, 2.0, 1.0], [0.0, np.nan, 1.0], [0.0, 1.0]):
            with pytest.raises(DomainError):
                LagrangianState(x, g)

    def test_immutable(self):
        s = LagrangianState([0.0, 0.5, 1.0], MassGrid.uniform_grid(2))
        with pytest.raises(ValueError):
            s.x[0] = 3.0


class TestDensity:
    def test_identity_density(self):
        s = LagrangianState([0.0, 0.5, 1.0], MassGrid.uniform_grid(2))
        u = density_from_state(s)
        np.testing.assert_array_equal(u.values, [1.0, 1.0])
        assert u(0.0) == 0.0 and u(1.0) == 1.0 and u(1.5) == 0.0

    def test_direct_formula(self):
        s = LagrangianState([0.0, 0.25, 1.0], MassGrid.uniform_grid(2))
        np.testing.assert_allclose(s.z, [2.0, 2.0 / 3.0])

    def test_dilation_halves(self):
        s = LagrangianState([0.0, 0.5, 1.0], MassGrid.uniform_grid(2))
        np.testing.assert_allclose(dilate(s, 2.0).z, [0.5, 0.5])

    def test_breakpoint_takes_left_value(self):
        u = PiecewiseConstantDensity([0.0, 1.0, 2.0], [1.0, 3.0])
        assert u(1.0) == 1.0 and u(2.0) == 3.0 and u(1.0 + 1e-12) == 3.0

    @given(states())
    def test_mass_conserved(self, s):
        assert math.isclose(density_from_state(s).mass, s.grid.M, rel_tol=1e-13)

    @given(states(), st.floats(0.1, 10.0))
    def test_dilation_is_pushforward(self, s, r):
        u, ur = density_from_state(s), density_from_state(dilate(s, r))
        mids = 0.5 * (s.x[1:] + s.x[:-1])
        np.testing.assert_allclose(ur(r * mids), u(mids) / r, rtol=1e-13)

    def test_l1_distance(self):
        u = PiecewiseConstantDensity([0.0, 1.0], [1.0])
        v = PiecewiseConstantDensity([0.5, 1.5], [1.0])
        assert math.isclose(l1_distance(u, v), 1.0)
        assert l1_distance(u, u) == 0.0


class TestAffineInterpolant:
    def test_uniform_values(self):
        s = LagrangianState([0.0, 0.5, 1.0], MassGrid.uniform_grid(2))
        uh = affine_interpolant(s)
        np.testing.assert_allclose(uh.node_values, [0.5, 1.0, 1.0, 1.0, 0.5])
        assert uh(-0.1) == 0.0 and uh(1.1) == 0.0

    @given(states())
    def test_midpoints_exact(self, s):
        uh = affine_interpolant(s)
        mids = 0.5 * (s.x[1:] + s.x[:-1])
        np.testing.assert_allclose(uh(mids), s.z, rtol=1e-14)

    @given(states())
    def test_h1_seminorm_quadrature(self, s):
        uh = affine_interpolant(s)
        total = 0.0
        for a, b in zip(uh.nodes[:-1], uh.nodes[1:]):
            h = 1e-4 * (b - a)
            dq = lambda x: ((uh(x + h) - uh(x - h)) / (2 * h)) ** 2
            val = integrate.quad(dq, a + h, b - h, epsrel=1e-12)[0]
            total += val * (b - a) / (b - a - 2 * h)
        assert math.isclose(uh.h1_seminorm_sq(), total, rel_tol=1e-8)

    @given(states(uniform=True))
    def test_h1_seminorm_mass_form(self, s):
        # delta * sum_k ((z_r - z_l)/delta)^2 (z_r + z_l)/2 over all grid points
        d = s.grid.delta
        z = np.concatenate(([0.0], s.z, [0.0]))
        expected = d * np.sum((np.diff(z) / d) ** 2 * 0.5 * (z[1:] + z[:-1]))
        assert math.isclose(affine_interpolant(s).h1_seminorm_sq(), expected, rel_tol=1e-11)


class TestLagrangianMap:
    @given(states())
    def test_nodes_and_monotone(self, s):
        np.testing.assert_allclose(lagrangian_map(s, s.grid.xi), s.x, rtol=0, atol=1e-14)
        a, b = sorted(np.random.default_rng(0).uniform(0, s.grid.M, 2))
        assert lagrangian_map(s, a) <= lagrangian_map(s, b)

    def test_identity(self):
        g = MassGrid.uniform_grid(5)
        s = LagrangianState(g.xi.copy(), g)
        assert math.isclose(lagrangian_map(s, 0.37), 0.37)

    def test_domain(self):
        s = LagrangianState([0.0, 1.0], MassGrid.uniform_grid(1))
        for xi in (-1e-9, 1.0 + 1e-9):
            with pytest.raises(DomainError):
                lagrangian_map(s, xi)


class TestInitialVector:
    def test_uniform(self):
        s = build_initial_vector(lambda x: 1.0, (0.0, 1.0), MassGrid.uniform_grid(4))
        np.testing.assert_allclose(s.x, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-14)

    def test_linear_density(self):
        s = build_initial_vector(lambda x: 2 * x, (0.0, 1.0), MassGrid.uniform_grid(2))
        np.testing.assert_allclose(s.x, [0.0, 1 / math.sqrt(2), 1.0], atol=1e-13)

    def test_sine_bump_cell_masses(self):
        g = MassGrid.uniform_grid(200)
        s = build_initial_vector(sine_bump, (-math.pi, math.pi), g, breakpoints=[0.0])

        def cdf(x):
            # closed-form primitive of the bump
            if x <= 0:
                return 0.125 * (1 + math.cos(x)) if x > -math.pi else 0.0
            return 0.25 + 0.375 * (1 - math.cos(x))

        masses = np.diff([cdf(x) for x in s.x])
        np.testing.assert_allclose(masses, g.delta, rtol=0, atol=1e-10)

    def test_round_trip(self):
        g = MassGrid.nonuniform_grid([0.0, 0.2, 0.3, 0.7, 1.0])
        s = LagrangianState([-1.0, -0.5, 0.1, 0.2, 2.0], g)
        u = density_from_state(s)
        s2 = build_initial_vector(u, s.support, g, breakpoints=list(s.x[1:-1]))
        np.testing.assert_allclose(s2.x, s.x, atol=1e-10)

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            build_initial_vector(lambda x: x, (-1.0, 1.0), MassGrid.uniform_grid(2))

    def test_rejects_vanishing_interval(self):
        u = lambda x: 2.0 if x < 0.5 else 0.0
        with pytest.raises(DomainError):
            build_initial_vector(u, (0.0, 1.0), MassGrid.uniform_grid(2), breakpoints=[0.5])

    def test_mass_mismatch(self):
        with pytest.raises(QuantileError, match="measured mass"):
            build_initial_vector(lambda x: 2.0, (0.0, 1.0), MassGrid.uniform_grid(2))

    def test_empty_support(self):
        with pytest.raises(DomainError):
            build_initial_vector(lambda x: 1.0, (1.0, 1.0), MassGrid.uniform_grid(2))
