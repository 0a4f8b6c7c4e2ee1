"""Numerical core: groups, reduced systems, integration, solvers and turnpike analysis."""

from src.utils.errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    DivergedRolloutError,
    PipelineStageError,
    SingularMatrixError,
    TurnpikeLabError,
)
from src.utils.integrator import ControlGrid, Trajectory, reconstruct_group, rollout
from src.utils.ocp_solver import SolverConfig, SolveResult, pmp_residual, solve
from src.utils.reduced_systems import ReducedOCP, make_system
from src.utils.self_checks import run_checks
from src.utils.static_solver import StaticSolution, solve_static
from src.utils.turnpike_analysis import analyze_turnpike, certify

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DimensionError",
    "DivergedRolloutError",
    "PipelineStageError",
    "SingularMatrixError",
    "TurnpikeLabError",
    "ControlGrid",
    "Trajectory",
    "reconstruct_group",
    "rollout",
    "SolverConfig",
    "SolveResult",
    "pmp_residual",
    "solve",
    "ReducedOCP",
    "make_system",
    "run_checks",
    "StaticSolution",
    "solve_static",
    "analyze_turnpike",
    "certify",
]
