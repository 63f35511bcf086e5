"""Leading-order product approximation in m dimensions.

theta becomes a symmetric positive-definite matrix, q = exp(-2 theta tau),
and the mid-time factor f_inf(y)^{sqrt q/(1+sqrt q)} of the 1D formula is
replaced by Omega(tau, y): the exponential of the line integral of
B A along the straight path from the long-term mean, with
B = sqrt(q) (I + sqrt(q))^{-1}. All functions of theta go through one
symmetric eigendecomposition.
"""

from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import ModelError, NumericalError
from .fisher import theta_for
from .models import as_points


@dataclass(frozen=True, eq=False)
class MatrixKernel:
    theta: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @classmethod
    def from_theta(cls, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        m = theta.shape[0]
        if theta.shape != (m, m):
            raise ModelError("theta must be square")
        if not np.allclose(theta, theta.T, rtol=0, atol=1e-12 * max(1.0, np.abs(theta).max())):
            raise ModelError("theta must be symmetric; non-conservative generators live in exact/extensions")
        theta = 0.5 * (theta + theta.T)
        lam, vec = np.linalg.eigh(theta)
        if lam.min() <= 0:
            raise ModelError("theta must be positive definite")
        return cls(theta=theta, eigvals=lam, eigvecs=vec)

    @property
    def dim(self):
        return len(self.eigvals)

    def apply(self, fun):
        """The matrix V diag(fun(eigvals)) V'."""
        return (self.eigvecs * fun(self.eigvals)) @ self.eigvecs.T

    def q(self, tau):
        return self.apply(lambda lam: np.exp(-2 * lam * tau))

    def mid(self, tau):
        """B = sqrt(q) / (I + sqrt(q))."""
        return self.apply(lambda lam: 1 / (1 + np.exp(lam * tau)))

    def gauss(self, tau):
        """theta sqrt(q) / (I - q)."""
        return self.apply(lambda lam: lam * np.exp(-lam * tau) / -np.expm1(-2 * lam * tau))

    def log_det_one_minus_q(self, tau):
        return float(np.sum(np.log(-np.expm1(-2 * self.eigvals * tau))))


def rho(kernel, tau):
    """(1/m) tr sqrt(q)(I + sqrt(q))^{-1}: 1/2 at tau = 0, tending to 0."""
    if tau < 0:
        raise ModelError("tau must be non-negative")
    return float(np.mean(1 / (1 + np.exp(kernel.eigvals * tau))))


@dataclass(frozen=True, eq=False)
class ApproxNDContext:
    kernel: MatrixKernel
    y0: np.ndarray
    model: object
    mu_inf: np.ndarray
    log_f_inf_mu: float
    use_closed_form: bool = True

    @classmethod
    def from_model(cls, model, y0, theta=None, use_closed_form=True):
        if theta is None:
            theta = theta_for(model).theta
        kernel = MatrixKernel.from_theta(theta)
        if kernel.dim != model.dim:
            raise ModelError(f"theta is {kernel.dim}x{kernel.dim} but model has dim {model.dim}")
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        if y0.shape != (model.dim,):
            raise ModelError(f"y0 must have length {model.dim}")
        mu = np.atleast_1d(np.asarray(model.mean_inf, dtype=float))
        return cls(kernel=kernel, y0=y0, model=model, mu_inf=mu,
                   log_f_inf_mu=float(_log_f_inf(model, mu)),
                   use_closed_form=use_closed_form)

    @property
    def dim(self):
        return self.kernel.dim


# 1D models take scalar points; everything here works with trailing axis m.

def _drift(model, y):
    if model.dim == 1:
        return model.drift(y[..., 0])[..., None]
    return model.drift(y)


def _log_f_inf(model, y):
    y = np.asarray(y, dtype=float)
    if model.dim == 1:
        return model.log_density(y[..., 0])
    return model.log_density(y)


def _points(ctx, y):
    y = np.asarray(y, dtype=float)
    if ctx.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    return as_points(ctx.model, y) if ctx.dim > 1 else y


def _path_breaks(ctx, y):
    """Breakpoints in s along mu + s (y - mu): closest approach to model features."""
    d = y - ctx.mu_inf
    dd = np.sum(d * d, axis=-1)
    cols = [np.zeros(y.shape[:-1]), np.ones(y.shape[:-1])]
    for point in ctx.model.features:
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.sum((point - ctx.mu_inf) * d, axis=-1) / dd
        cols.append(np.clip(np.nan_to_num(s), 0.0, 1.0))
    return np.sort(np.stack(cols, axis=-1), axis=-1)


def log_omega_quadrature(ctx, B, y, tol=1e-11):
    """Line integral of (y - mu) . B A(mu + s (y - mu)) over s in [0, 1]."""
    d = y - ctx.mu_inf
    Bd = d @ B  # B symmetric: d . B A = (B d) . A

    def integrand(s):
        x = ctx.mu_inf + d[..., None, :] * s[..., None]
        A = _drift(ctx.model, x)
        vals = np.sum(Bd[..., None, :] * A, axis=-1)
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise NumericalError(f"non-finite Omega integrand at s={s[tuple(bad)]:.6g}")
        return vals

    return quadrature.integrate_segments(integrand, _path_breaks(ctx, y), tol=tol)


def log_omega(ctx, tau, y):
    y = _points(ctx, y)
    B = ctx.kernel.mid(tau)
    if ctx.use_closed_form:
        if ctx.model.dim == 1:
            return B[0, 0] * (_log_f_inf(ctx.model, y) - ctx.log_f_inf_mu)
        if ctx.model.log_omega is not None:
            val = ctx.model.log_omega(B, y)
            if val is not None:
                return val
    return log_omega_quadrature(ctx, B, y)


def omega(ctx, tau, y):
    """Omega(tau, y) = exp of the straight-line integral of B A from the long-term mean."""
    _check_tau(tau)
    return np.exp(log_omega(ctx, tau, y))


def _check_tau(tau):
    if not np.ndim(tau) == 0:
        raise ModelError("tau must be a scalar here")
    if not tau > 0:
        raise ModelError("tau must be positive")


def log_g_leading_nd(ctx, tau, y):
    _check_tau(tau)
    y = _points(ctx, y)
    k = ctx.kernel
    d = y - ctx.y0
    G = k.gauss(tau)
    log_theta_det = float(np.sum(np.log(k.eigvals / (2 * np.pi))))
    return (-0.5 * k.log_det_one_minus_q(tau)
            - 0.5 * np.einsum("...i,ij,...j->...", d, G, d)
            + rho(k, tau) * (log_theta_det - 2 * ctx.log_f_inf_mu)
            - log_omega(ctx, tau, y) - log_omega(ctx, tau, ctx.y0))


def log_f_leading_nd(ctx, tau, y):
    y = _points(ctx, y)
    return log_g_leading_nd(ctx, tau, y) + _log_f_inf(ctx.model, y)


def _exp_checked(logv):
    if np.any(logv > 700):
        raise NumericalError(f"log density {np.max(logv):.1f} overflows")
    return np.exp(logv)


def f_leading_nd(ctx, tau, y):
    """Leading-order multivariate transition density at points ``y`` (..., m)."""
    return _exp_checked(log_f_leading_nd(ctx, tau, y))


def g_leading_nd(ctx, tau, y):
    return _exp_checked(log_g_leading_nd(ctx, tau, y))


def curl_defect(ctx, tau, y, step=1e-5):
    """max |dB_i/dy_j - dB_j/dy_i| for B(y) = mid(tau) A(y), by central differences."""
    y = _points(ctx, y)
    m = ctx.dim
    B = ctx.kernel.mid(tau)
    J = np.empty(y.shape[:-1] + (m, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = step
        J[..., :, j] = (_drift(ctx.model, y + e) - _drift(ctx.model, y - e)) / (2 * step)
    BJ = np.einsum("ik,...kj->...ij", B, J)
    return np.max(np.abs(BJ - np.swapaxes(BJ, -1, -2)), axis=(-2, -1))
