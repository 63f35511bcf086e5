"""Far-field, half-line and non-conservative variants of the product approximation."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import quadrature
from .errors import ModelError, NumericalError
from .exact import _check_stable


# --- far field ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FarFieldContext:
    """Start point and drift for the no-reversion short-time expansion.

    ``include_divA`` keeps the divergence of A in B1; by default it is dropped.
    """

    model: object
    y0: np.ndarray
    include_divA: bool = False

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if y0.shape != (self.model.dim,):
            raise ModelError(f"y0 must have length {self.model.dim}")
        object.__setattr__(self, "y0", y0)

    @property
    def dim(self):
        return self.model.dim


def _pts(ctx, y):
    y = np.asarray(y, dtype=float)
    if ctx.dim == 1:
        return y
    if y.shape[-1] != ctx.dim:
        raise ModelError(f"points need a trailing axis of length {ctx.dim}")
    return y


def _y0(ctx):
    return ctx.y0[0] if ctx.dim == 1 else ctx.y0


def _sq_drift(ctx, y):
    A = np.asarray(ctx.model.drift(y), dtype=float)
    return A * A if ctx.dim == 1 else np.sum(A * A, axis=-1)


def _div_drift(ctx, y):
    J = np.asarray(ctx.model.jacobian(y), dtype=float)
    return J if ctx.dim == 1 else np.trace(J, axis1=-2, axis2=-1)


def _endpoint_b1(ctx, y):
    y0 = _y0(ctx)
    b = (_sq_drift(ctx, y) + _sq_drift(ctx, y0)) / 8
    if ctx.include_divA:
        b = b + (_div_drift(ctx, y) + _div_drift(ctx, y0)) / 4
    return b


def regime_indicator(ctx, theta, y):
    """|A(y)| / (theta |y - mu_inf|); small values mark the far field."""
    y = _pts(ctx, y)
    d = np.asarray(y - ctx.model.mean_inf if ctx.dim > 1 else y - ctx.model.mean_inf[0])
    A = np.sqrt(_sq_drift(ctx, y))
    dist = np.abs(d) if ctx.dim == 1 else np.linalg.norm(d, axis=-1)
    with np.errstate(divide="ignore"):
        return A / (np.max(np.atleast_1d(theta)) * dist)


def log_far_field_g(ctx, tau, y):
    if not tau > 0:
        raise ModelError("tau must be positive")
    y = _pts(ctx, y)
    y0 = _y0(ctx)
    d = y - y0
    dist2 = d * d if ctx.dim == 1 else np.sum(d * d, axis=-1)
    return (-dist2 / (4 * tau) - _endpoint_b1(ctx, y) * tau
            - 0.5 * ctx.dim * np.log(4 * np.pi * tau)
            - 0.5 * (ctx.model.log_density(y) + ctx.model.log_density(y0)))


def far_field_g(ctx, tau, y):
    """Far-field g: heat kernel, endpoint-averaged B1 damping, and 1/sqrt(f_inf(y) f_inf(y0))."""
    return np.exp(log_far_field_g(ctx, tau, y))


def far_field_f(ctx, tau, y):
    y = _pts(ctx, y)
    return np.exp(log_far_field_g(ctx, tau, y) + ctx.model.log_density(y))


def b1_far_field(ctx, y, slowly_varying=False, tol=1e-12):
    """B1(y): mean of A^2/4 + A'/2 over [y0, y].

    The A'/2 part integrates exactly to (A(y) - A(y0))/2, which also covers
    drifts with jumps. ``slowly_varying`` replaces the mean by the endpoint
    average.
    """
    if ctx.dim != 1:
        raise ModelError("b1_far_field is one-dimensional")
    if slowly_varying:
        return _endpoint_b1(ctx, np.asarray(y, dtype=float))
    y = np.asarray(y, dtype=float)
    y0 = float(ctx.y0[0])
    model = ctx.model
    d = y - y0
    near = np.abs(d) < 1e-9
    d_safe = np.where(near, 1.0, d)
    yy = np.where(near, y0 + 1.0, y)

    cols = [np.zeros_like(d), np.ones_like(d)]
    for c in model.discontinuities:
        cols.append(np.clip((c - y0) / d_safe, 0.0, 1.0))
    breaks = np.sort(np.stack(np.broadcast_arrays(*cols), axis=-1), axis=-1)

    def integrand(t):
        return model.drift(y0 + d_safe[..., None] * t) ** 2 / 4

    try:
        mean_sq = quadrature.integrate_segments(integrand, breaks, tol=tol)
    except Exception as exc:
        raise NumericalError(f"B1 quadrature failed: {exc}") from exc
    mean_div = (model.drift(yy) - model.drift(np.asarray(y0))) / (2 * d_safe)
    at_y0 = model.drift(np.asarray(y0)) ** 2 / 4 + model.jacobian(np.asarray(y0)) / 2
    return np.where(near, at_y0, mean_sq + mean_div)


# --- square-root process -------------------------------------------------------------

def sqrt_h_leading(theta, nu, y0, tau, y):
    """Leading h for the half-line normal form with A(y) = nu - y.

    ``theta=None`` uses 1/2, the value that reproduces the square-root process.
    """
    theta = 0.5 if theta is None else float(theta)
    if not theta > 0:
        raise ModelError("theta must be positive")
    y = np.asarray(y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if not (np.all(y > 0) and y0 > 0):
        raise ModelError("states must be positive on the half line")
    if not np.all(tau > 0):
        raise ModelError("tau must be positive")
    sq = np.exp(-theta * tau)
    one_m_q = -np.expm1(-2 * theta * tau)
    A = nu - y
    return 2 * theta * sq * (1 - np.sqrt(y0 / y)) / one_m_q + sq / (1 + sq) * (A / y - 0.5 / y)


# --- non-conservative OU -------------------------------------------------------------

def nonconservative_h(a, sigma_inf, tau, y, y0):
    """-grad log(f/f_inf) for the OU process dY = -a Y dt + sqrt(2) dW.

    With M = e^{a tau} s - s e^{-a' tau}:
    H = M^{-1} (y - y0) + M^{-1} s (e^{-a' tau} - I) s^{-1} y.
    """
    a = _check_stable(a)
    s = np.asarray(sigma_inf, dtype=float)
    if not tau > 0:
        raise ModelError("tau must be positive")
    m = a.shape[0]
    Et = expm(-a.T * tau)
    M = expm(a * tau) @ s - s @ Et
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"bracket is numerically singular at tau={tau:g} (cond {cond:.2e})")
    Minv = np.linalg.inv(M)
    P = Minv @ s @ (Et - np.eye(m)) @ np.linalg.inv(s)
    y = np.asarray(y, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    return (y - y0) @ Minv.T + y @ P.T
