"""Lagrangian minimizing-movement scheme for a fourth-order thin-film type equation."""

from .mass_mesh import (
    DomainError,
    LagrangianState,
    MassGrid,
    PiecewiseConstantDensity,
    QuantileError,
    build_initial_vector,
    density_from_state,
)
from .functionals import ModelParams, entropy, information
from .equilibria import Equilibrium, equilibrium, reference_profile
from .stepper import StepConfig, StepFailure, Trajectory, evolve, solve_step, uniform_schedule

__all__ = [
    "DomainError",
    "Equilibrium",
    "LagrangianState",
    "MassGrid",
    "ModelParams",
    "PiecewiseConstantDensity",
    "QuantileError",
    "StepConfig",
    "StepFailure",
    "Trajectory",
    "build_initial_vector",
    "density_from_state",
    "entropy",
    "equilibrium",
    "evolve",
    "information",
    "reference_profile",
    "solve_step",
    "uniform_schedule",
]
