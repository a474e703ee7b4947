"""Two-particle Fleming-Viot spine in (0, pi): analytic and Monte Carlo tools."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    BoundaryError,
    ConvergenceError,
    DomainError,
    EmptyPathError,
    EstimationError,
    FVSpineError,
    InsufficientEventsError,
    PrecisionError,
)

__all__ = [
    "__version__",
    "BACKEND",
    "BoundaryError",
    "ConvergenceError",
    "DomainError",
    "EmptyPathError",
    "EstimationError",
    "FVSpineError",
    "InsufficientEventsError",
    "PrecisionError",
]
