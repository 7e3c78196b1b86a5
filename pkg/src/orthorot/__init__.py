"""Orthomax factor rotation by exhaustive enumeration of stationary points."""

from .criterion import (
    NAMED_CRITERIA,
    OrthomaxSpec,
    RotationCandidate,
    make_candidate,
    orthomax_gradient,
    orthomax_value,
    stationarity_residual,
)
from .polysys import PolySystem, build_stationarity_system

__version__ = "0.1.0"

__all__ = [
    "NAMED_CRITERIA", "OrthomaxSpec", "RotationCandidate", "make_candidate", "orthomax_gradient",
    "orthomax_value", "stationarity_residual", "PolySystem", "build_stationarity_system",
]
