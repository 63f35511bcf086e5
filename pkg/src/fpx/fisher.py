"""Reversion-speed estimate theta = <-grad A> under the invariant density.

For a conservative field this equals the Fisher information of the
invariant density under translation, <A A'>; both forms are available and
the second is used when A has a jump (its derivative is then a delta).
"""

from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import ModelError
from .models import integrate_nd


@dataclass(frozen=True)
class ThetaEstimate:
    theta: object  # float in 1D, symmetric (m, m) array otherwise
    quad_error: float
    source: str  # "closed_form" or "quadrature"

    def matrix(self):
        return np.atleast_2d(np.asarray(self.theta, dtype=float))


def _integrand_1d(model, form):
    if form == "jacobian":
        return lambda y: -model.jacobian(y) * model.density(y)
    return lambda y: model.drift(y) ** 2 * model.density(y)


def _integrand_nd(model, form):
    if form == "jacobian":
        def fun(p):
            return -model.jacobian(p) * model.density(p)[..., None, None]
    else:
        def fun(p):
            A = model.drift(p)
            return np.einsum("...i,...j->...ij", A, A) * model.density(p)[..., None, None]
    return fun


def estimate_theta(model, form="auto", tol=1e-10):
    """Quadrature estimate of <-grad A>_inf.

    ``form`` is "jacobian" (average of -grad A), "score" (average of A A') or
    "auto", which picks "score" for models with flagged discontinuities and
    "jacobian" otherwise. Non-convergence raises QuadratureError carrying the
    last two iterates.
    """
    if not model.conservative:
        raise ModelError(f"{model.name}: theta is only defined here for conservative fields")
    if form == "auto":
        form = "score" if model.discontinuities else "jacobian"
    if form not in ("jacobian", "score"):
        raise ValueError(f"unknown form {form!r}")
    if form == "jacobian" and model.discontinuities:
        raise ModelError(f"{model.name}: drift has jumps, use the score form")

    if model.dim == 1:
        c, L = model.quad_window()
        tail = None if model.tail_power is None else model.tail_power + 2
        value, err = quadrature.integrate_line(
            _integrand_1d(model, form), c, L, tail_power=tail, tol=tol,
            scale=model.quad_scale, breakpoints=model.discontinuities,
        )
        return ThetaEstimate(float(value), float(err), "quadrature")

    value, err = integrate_nd(model, _integrand_nd(model, form), tol=tol)
    value = 0.5 * (value + value.T)
    return ThetaEstimate(value, float(err), "quadrature")


def theta_for(model):
    """The closed-form theta when the model has one, else the quadrature estimate."""
    if model.closed_form_theta is not None:
        return ThetaEstimate(model.closed_form_theta, 0.0, "closed_form")
    return estimate_theta(model)
