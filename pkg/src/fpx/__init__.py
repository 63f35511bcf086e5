"""Approximate and reference transition densities for diffusions with state-dependent drift."""

from .errors import (BoundaryInteractionError, ConvergenceError, DomainError, FPXError,
                     InstabilityError, ModelError, NumericalError, QuadratureError,
                     SolverError, SpecError)
from .fields import DensityField
from .models import DriftModel, make_model

__version__ = "0.1.0"

__all__ = [
    "BoundaryInteractionError", "ConvergenceError", "DensityField", "DomainError",
    "DriftModel", "FPXError", "InstabilityError", "ModelError", "NumericalError",
    "QuadratureError", "SolverError", "SpecError", "make_model",
]
