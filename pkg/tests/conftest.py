import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from lagflow import LagrangianState, MassGrid, ModelParams, build_initial_vector
from lagflow.cli import sine_bump

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ALPHAS = (0.5, 0.6, 0.75, 1.0)


def random_state(rng, grid: MassGrid, spread=(0.5, 1.5), width=2.0) -> LagrangianState:
    gaps = rng.uniform(*spread, size=grid.K)
    x = np.concatenate(([0.0], np.cumsum(gaps)))
    x = width * (x / x[-1] - 0.5) + rng.uniform(-0.3, 0.3)
    return LagrangianState(x, grid)


def random_grid(rng, K: int, uniform: bool = True) -> MassGrid:
    if uniform:
        return MassGrid.uniform_grid(K)
    w = rng.uniform(0.5, 1.5, size=K)
    return MassGrid.nonuniform_grid(np.concatenate(([0.0], np.cumsum(w) / w.sum())))


@st.composite
def states(draw, min_K=1, max_K=12, uniform=None):
    K = draw(st.integers(min_K, max_K))
    seed = draw(st.integers(0, 2**32 - 1))
    uni = draw(st.booleans()) if uniform is None else uniform
    rng = np.random.default_rng(seed)
    return random_state(rng, random_grid(rng, K, uni))


params_st = st.builds(ModelParams, st.sampled_from(ALPHAS), st.sampled_from((0.0, 1.0, 5.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sine_state_50():
    grid = MassGrid.uniform_grid(50)
    return build_initial_vector(sine_bump, (-math.pi, math.pi), grid, breakpoints=[0.0])
