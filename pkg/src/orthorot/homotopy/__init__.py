"""Total-degree homotopy continuation for the rotation stationarity system."""

from ._backend import BACKEND, BACKENDS, get_kernels
from .solver import (
    PathBudgetError,
    PathResult,
    SolverOptions,
    StationarySet,
    canonicalize,
    kernel_spec,
    newton_polish,
    orbit_min_distance,
    solve_all,
    start_points,
)

__all__ = [
    "BACKEND", "BACKENDS", "get_kernels", "PathBudgetError", "PathResult", "SolverOptions",
    "StationarySet", "canonicalize", "kernel_spec", "newton_polish", "orbit_min_distance",
    "solve_all", "start_points",
]
