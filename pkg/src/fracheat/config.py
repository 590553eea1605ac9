"""Shared parameter containers: fractional order/dimension and quadrature knobs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class FracParams:
    """Spatial dimension n and fractional order s of the space-time operator.

    Every kernel exponent and normalization constant in the package is a
    function of this pair.  The order must lie strictly inside (0, 1).
    """

    n: int
    s: float

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"dimension n must be a positive integer, got {self.n!r}")
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"fractional order s must satisfy 0 < s < 1, got {self.s!r}")

    @property
    def sigma_power(self) -> float:
        """Exponent n/2 + 1 + s of the time lag in the kernel denominator."""
        return 0.5 * self.n + 1.0 + self.s


@dataclass(frozen=True)
class TailBudget:
    """Certified truncation radii for the kernel's space and time tails.

    ``tail_mass`` bounds the discarded kernel mass relative to the reference
    exterior mass at the inner radius the budget was computed for.
    """

    R_max: float
    T_max: float
    tail_mass: float

    def __post_init__(self):
        if self.R_max <= 0 or self.T_max <= 0:
            raise ValueError("truncation radii must be positive")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be nonnegative")


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs for the singular space-time quadrature.

    split_lag separates the symmetrized near slab from the far region;
    grade_exponent of None selects the order-adapted default.  panels_time
    counts near-slab panels, panels_space sets the Gauss-Hermite base size.
    tail_fraction is the share of the tolerance granted to truncated tails.
    """

    rel_tol: float = 1e-7
    abs_tol: float = 1e-9
    split_lag: float = 1.0
    grade_exponent: float | None = None
    panels_space: int = 21
    panels_time: int = 16
    tail_fraction: float = 0.2
    gl_order: int = 8
    far_ratio: float = 2.0
    window_nodes: int = 48
    refine_rounds: int = 3

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.split_lag <= 0:
            raise ValueError("split_lag must be positive")
        if self.grade_exponent is not None and self.grade_exponent < 1:
            raise ValueError("grade_exponent must be >= 1")
        if not (0 < self.tail_fraction < 1):
            raise ValueError("tail_fraction must lie in (0, 1)")

    def refined(self) -> "QuadratureConfig":
        """One nested-refinement step: double panel counts and node counts."""
        return replace(
            self,
            panels_space=2 * self.panels_space + 1,
            panels_time=2 * self.panels_time,
            gl_order=min(2 * self.gl_order, 24),
            far_ratio=math.sqrt(self.far_ratio),
            window_nodes=min(2 * self.window_nodes, 192),
        )
