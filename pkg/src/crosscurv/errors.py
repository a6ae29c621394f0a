"""Exception types shared across the package."""


class CrossCurvError(Exception):
    """Base class for package errors."""


class CostSpecError(CrossCurvError, ValueError):
    """Unknown cost kind or invalid cost parameters."""


class DomainError(CrossCurvError, ValueError):
    """Evaluation requested at a point outside the chart's domain."""

    def __init__(self, message, x=None, xbar=None):
        super().__init__(message)
        self.x = x
        self.xbar = xbar


class NondegeneracyFailure(CrossCurvError, ArithmeticError):
    """The cross Hessian c_{ij-bar} is singular or too badly conditioned."""

    def __init__(self, message, smallest_singular_value, condition_number=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value
        self.condition_number = condition_number


class SingularJacobian(NondegeneracyFailure):
    """Newton iteration hit a singular Jacobian."""

    def __init__(self, message, smallest_singular_value, last_iterate=None):
        super().__init__(message, smallest_singular_value)
        self.last_iterate = last_iterate


class NoConvergence(CrossCurvError, RuntimeError):
    """Iterative solve stopped at its iteration cap."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SegmentFailure(CrossCurvError, RuntimeError):
    """A c-segment or horizontal geodesic could not be continued."""

    def __init__(self, message, t=None, cause=None):
        super().__init__(message)
        self.t = t
        self.cause = cause


class RegularityRefused(CrossCurvError, ValueError):
    """Constant estimation requested on a cost that is not strictly regular."""
