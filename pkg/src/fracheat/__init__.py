"""fracheat: numerical laboratory for the fully fractional heat operator."""

from .config import FracParams, QuadratureConfig, TailBudget
from .errors import AccuracyError, StepFailureError, ValidationError

__all__ = [
    "FracParams",
    "QuadratureConfig",
    "TailBudget",
    "AccuracyError",
    "StepFailureError",
    "ValidationError",
]
