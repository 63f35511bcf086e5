"""Leading-order product approximation in one dimension.

With p = exp(-theta tau) and q = p**2 the approximation to h = -d/dy log g is

    h(tau, y) = theta p (y - y0) / (1 - q) + p / (1 + p) A(y)

and integrating it (fixing the prefactor by reciprocity and the OU limit)
gives g and f in closed form. Everything is exact for an OU drift with
reversion speed theta. Densities are assembled in log space.
"""

from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import ModelError, NumericalError
from .fisher import theta_for

# below this theta*tau the q-rational prefactors switch to their Taylor series
SMALL_THETA_TAU = 1e-8


@dataclass(frozen=True, eq=False)
class Approx1DContext:
    theta: float
    y0: float
    model: object
    log_f_inf_y0: float

    @classmethod
    def from_model(cls, model, y0, theta=None):
        if model.dim != 1:
            raise ModelError(f"{model.name} is {model.dim}-dimensional; use approxnd")
        if theta is None:
            theta = float(np.squeeze(theta_for(model).theta))
        theta = float(theta)
        if not theta > 0:
            raise ModelError("theta must be positive")
        lf0 = float(model.log_density(float(y0)))
        if not np.isfinite(lf0):
            raise ModelError(f"log f_inf is not finite at y0={y0}")
        return cls(theta=theta, y0=float(y0), model=model, log_f_inf_y0=lf0)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if not np.all(tau > 0):
        raise ModelError("tau must be positive")
    return tau


def _factors(theta, tau):
    """(theta p / (1 - q), p / (1 + p), log(1 - q)) with a small-tau series guard."""
    x = theta * tau
    p = np.exp(-x)
    one_m_q = -np.expm1(-2 * x)
    small = x < SMALL_THETA_TAU
    with np.errstate(divide="ignore"):
        gauss = np.where(small, (1 - x * x / 6) / (2 * np.where(small, tau, 1.0)),
                         theta * p / np.where(small, 1.0, one_m_q))
        log_1mq = np.where(small, np.log(2 * x) - x, np.log(np.where(small, 1.0, one_m_q)))
    mid = np.where(small, 0.5 - x / 4, p / (1 + p))
    return gauss, mid, log_1mq


def h_leading(ctx, tau, y):
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    gauss, mid, _ = _factors(ctx.theta, tau)
    return gauss * (y - ctx.y0) + mid * ctx.model.drift(y)


def log_g_leading(ctx, tau, y):
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    gauss, mid, log_1mq = _factors(ctx.theta, tau)
    lf = ctx.model.log_density(y)
    return (-0.5 * log_1mq - 0.5 * gauss * (y - ctx.y0) ** 2
            + mid * (np.log(ctx.theta / (2 * np.pi)) - lf - ctx.log_f_inf_y0))


def log_f_leading(ctx, tau, y):
    return log_g_leading(ctx, tau, y) + ctx.model.log_density(y)


def _exp_checked(logv):
    if np.any(logv > 700):
        raise NumericalError(f"log density {np.max(logv):.1f} overflows")
    return np.exp(logv)


def g_leading(ctx, tau, y):
    """Leading-order g = f/f_inf; symmetric in (y, y0)."""
    return _exp_checked(log_g_leading(ctx, tau, y))


def f_leading(ctx, tau, y):
    """Leading-order transition density f(tau, y | y0)."""
    return _exp_checked(log_f_leading(ctx, tau, y))


def _b1_integrand_parts(ctx, z):
    # u = A' + theta and the bracket u' + A u
    A = ctx.model.drift(z)
    u = ctx.model.jacobian(z) + ctx.theta
    du = ctx.model.drift_dd(z)
    return u, du + A * u


def b1_correction(ctx, y, tol=1e-12):
    """First remainder coefficient b1(y) of the product expansion.

    b1 = 1/(theta (y-y0)^2) int_{y0}^{y} (z-y0) (d/dz + A + theta (z-y0)/2) (A' + theta) dz.
    At y = y0 the integral's quadratic Taylor term gives the finite limit
    (u' + A u)(y0) / (2 theta).
    """
    if ctx.model.drift_dd is None:
        raise ModelError(f"{ctx.model.name} does not provide A''")
    y = np.asarray(y, dtype=float)
    for c in ctx.model.discontinuities:
        if np.any((np.minimum(y, ctx.y0) <= c) & (c <= np.maximum(y, ctx.y0))):
            raise ModelError(f"{ctx.model.name}: drift jumps at {c} inside the b1 segment")
    d = y - ctx.y0
    near = np.abs(d) < 1e-7
    d_safe = np.where(near, 1.0, d)

    def integrand(t):
        # t in [0, 1] along [y0, y]; returns values of shape (..., n)
        z = ctx.y0 + d_safe[..., None] * t
        u, G = _b1_integrand_parts(ctx, z)
        s = z - ctx.y0
        return s * G + 0.5 * ctx.theta * s * s * u

    breaks = np.stack(np.broadcast_arrays(np.zeros_like(d), np.ones_like(d)), axis=-1)
    integral = d_safe * quadrature.integrate_segments(integrand, breaks, tol=tol)
    value = integral / (ctx.theta * d_safe**2)
    _, G0 = _b1_integrand_parts(ctx, np.asarray(ctx.y0))
    return np.where(near, G0 / (2 * ctx.theta), value)


def h_with_b1(ctx, tau, y):
    """h including the first remainder term:

    p/(1+p) * (theta (y-y0)/(1-p) + A(y) + (1-p) b1(y)).
    """
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    p = np.exp(-ctx.theta * tau)
    one_m_p = -np.expm1(-ctx.theta * tau)
    return h_leading(ctx, tau, y) + p / (1 + p) * one_m_p * b1_correction(ctx, y)
