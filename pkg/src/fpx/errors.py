"""Exception hierarchy shared across the package."""


class FPXError(Exception):
    """Base class for all package errors."""


class ModelError(FPXError, ValueError):
    """Invalid model parameters or an unsupported model operation."""


class QuadratureError(FPXError, ArithmeticError):
    """Quadrature refinement failed to stabilise.

    ``iterates`` holds the last two estimates so callers can judge how far
    off the result was.
    """

    def __init__(self, message, iterates=None):
        super().__init__(message)
        self.iterates = iterates


class NumericalError(FPXError, ArithmeticError):
    """Generic numerical failure (overflow, singular matrix, non-finite values)."""


class SolverError(NumericalError):
    """The spectral PDE solver refused to run or detected a failure."""


class DomainError(SolverError):
    """Spatial domain too small for the requested model or start point."""


class BoundaryInteractionError(SolverError):
    """Probability mass reached the edge of the periodic domain."""


class InstabilityError(SolverError):
    """The time integration blew up."""


class ConvergenceError(SolverError):
    """Mode doubling did not converge within the allowed refinement."""

    def __init__(self, message, differences=None):
        super().__init__(message)
        self.differences = differences


class SpecError(FPXError, ValueError):
    """An experiment specification failed validation.

    ``path`` names the offending field, e.g. ``"solver.modes"``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
