"""Hierarchical informative path planning over Gaussian process fields."""

__version__ = "0.1.0"

from .errors import (
    GenerationError,
    InfeasibleError,
    NumericalError,
    PlanningError,
    ValidationError,
)

__all__ = [
    "GenerationError",
    "InfeasibleError",
    "NumericalError",
    "PlanningError",
    "ValidationError",
    "__version__",
]
