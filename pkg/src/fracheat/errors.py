"""Exception types shared across the package."""

from __future__ import annotations


class AccuracyError(RuntimeError):
    """Raised when a quadrature or iteration cannot certify the requested tolerance.

    Carries the achieved error estimate so callers can report partial results.
    """

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class ValidationError(ValueError):
    """Raised when problem data is internally inconsistent (grid/exterior mismatch)."""


class StepFailureError(RuntimeError):
    """Raised when the implicit time step fails to converge; names the level."""

    def __init__(self, message: str, level: int):
        super().__init__(message)
        self.level = level
