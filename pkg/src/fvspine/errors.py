"""Exception hierarchy shared by all fvspine modules."""


class FVSpineError(Exception):
    """Base class for all library errors."""


class DomainError(FVSpineError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(FVSpineError, ArithmeticError):
    """An iterative method did not reach its tolerance.

    ``last`` holds the final iterate (or partial result) when one exists.
    """

    def __init__(self, message, last=None, history=None):
        super().__init__(message)
        self.last = last
        self.history = history


class PrecisionError(FVSpineError, ArithmeticError):
    """A series cannot certify the requested tolerance at this point."""


class BoundaryError(FVSpineError, ValueError):
    """A mapped point landed on (or numerically at) a domain boundary."""


class EstimationError(FVSpineError, RuntimeError):
    """A Monte Carlo estimator had no qualifying samples."""


class EmptyPathError(FVSpineError, ValueError):
    """A path or run has nothing to extract from."""


class InsufficientEventsError(FVSpineError, RuntimeError):
    """A simulation horizon produced too few branch events."""
