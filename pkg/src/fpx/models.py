"""Catalog of drift fields and their invariant densities.

All models are in normalised coordinates: the SDE is dY = A(Y) dt + sqrt(2) dW
(time already rescaled), so the forward equation is

    df/dtau = -div(A f) + laplacian(f)

and for a conservative field A = grad log f_inf.

Point conventions: a 1D model takes ``y`` of any shape and returns the same
shape (``jacobian`` gives A'(y)); an m-dimensional model takes ``(..., m)``
and returns ``(..., m)`` for the drift and ``(..., m, m)`` for the Jacobian.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import betaln

from . import quadrature
from .errors import ModelError

# f_inf(edge) / f_inf(peak) below this counts as "negligible" for truncation.
EDGE_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class DriftModel:
    """A drift field together with its invariant density.

    ``log_f_inf`` is unnormalised; ``norm_const`` multiplies ``exp(log_f_inf)``
    to give a probability density. ``log_omega`` optionally supplies a closed
    form for the multivariate interpolating factor: it is called as
    ``log_omega(B, y)`` with B the mid-time matrix and returns ``None`` when it
    does not apply to that B.
    """

    name: str
    dim: int
    drift: Callable
    jacobian: Callable
    log_f_inf: Callable
    norm_const: float
    mean_inf: np.ndarray
    conservative: bool = True
    closed_form_theta: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)
    drift_dd: Optional[Callable] = None
    discontinuities: tuple = ()
    tail_power: Optional[float] = None
    quad_half_width: float = 12.0
    quad_scale: Optional[float] = None
    log_omega: Optional[Callable] = None
    features: tuple = ()

    def log_density(self, y):
        return np.log(self.norm_const) + self.log_f_inf(y)

    def density(self, y):
        return np.exp(self.log_density(y))

    def quad_window(self):
        """Centre and half-width of the truncated normalisation window (1D)."""
        c = float(np.atleast_1d(self.mean_inf)[0]) if self.dim == 1 else None
        return c, self.quad_half_width

    def normalisation_error(self, tol=1e-12):
        """|integral of f_inf - 1| on the model's truncated window."""
        if self.dim == 1:
            c, L = self.quad_window()
            total, _ = quadrature.integrate_line(
                self.density, c, L, tail_power=self.tail_power, tol=tol,
                scale=self.quad_scale, breakpoints=self.discontinuities,
            )
        else:
            total, _ = integrate_nd(self, self.density, tol=tol)
        return abs(float(total) - 1.0)


def as_points(model, y):
    """Coerce ``y`` to an array of points for ``model``."""
    y = np.asarray(y, dtype=float)
    if model.dim > 1 and (y.ndim == 0 or y.shape[-1] != model.dim):
        raise ModelError(f"{model.name}: points need a trailing axis of length {model.dim}")
    return y


def integrate_nd(model, fun, tol=1e-10):
    """Integrate ``fun`` over the model's 2D truncation box."""
    mu = np.asarray(model.mean_inf, dtype=float)
    L = model.quad_half_width
    box = tuple((m - L, m + L) for m in mu)
    return quadrature.integrate_2d(fun, box, tol=tol, center=tuple(mu), scale=model.quad_scale)


def _check_positive(**kw):
    for k, v in kw.items():
        if not np.all(np.asarray(v) > 0) or not np.all(np.isfinite(v)):
            raise ModelError(f"{k} must be positive and finite, got {v!r}")


def _light_tail_width(log_f, center, start=12.0):
    """Smallest doubling of ``start`` with f(edge)/f(peak) < EDGE_RATIO on both sides."""
    grid = np.linspace(center - start, center + start, 2001)
    peak = np.max(log_f(grid))
    L = start
    while max(log_f(center - L), log_f(center + L)) - peak > np.log(EDGE_RATIO):
        L *= 2
        if L > 1e4:
            raise ModelError("invariant density tails too heavy for a light-tail window")
        peak = max(peak, np.max(log_f(np.linspace(center - L, center + L, 2001))))
    return L


def _log_cosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


# --- one-dimensional models ---------------------------------------------------

def make_ou_1d(theta, y_inf=0.0):
    """Ornstein-Uhlenbeck drift A(y) = theta (y_inf - y)."""
    _check_positive(theta=theta)
    theta, y_inf = float(theta), float(y_inf)

    def log_f(y):
        return -0.5 * theta * (np.asarray(y, dtype=float) - y_inf) ** 2

    return DriftModel(
        name="ou",
        dim=1,
        drift=lambda y: theta * (y_inf - np.asarray(y, dtype=float)),
        jacobian=lambda y: np.full(np.shape(y), -theta),
        drift_dd=lambda y: np.zeros(np.shape(y)),
        log_f_inf=log_f,
        norm_const=np.sqrt(theta / (2 * np.pi)),
        mean_inf=np.array([y_inf]),
        closed_form_theta=theta,
        params={"theta": theta, "y_inf": y_inf},
        quad_half_width=_light_tail_width(log_f, y_inf),
    )


def make_sech_power(gamma_hat, delta_hat):
    """A(y) = -(delta/gamma) tanh(gamma y); the invariant density is a sech power."""
    _check_positive(gamma_hat=gamma_hat, delta_hat=delta_hat)
    g, d = float(gamma_hat), float(delta_hat)
    power = d / g**2

    def drift(y):
        return -(d / g) * np.tanh(g * np.asarray(y, dtype=float))

    def jac(y):
        return -d / np.cosh(g * np.asarray(y, dtype=float)) ** 2

    def dd(y):
        gy = g * np.asarray(y, dtype=float)
        return 2 * d * g * np.tanh(gy) / np.cosh(gy) ** 2

    def log_f(y):
        return -power * _log_cosh(g * np.asarray(y, dtype=float))

    return DriftModel(
        name="sech",
        dim=1,
        drift=drift,
        jacobian=jac,
        drift_dd=dd,
        log_f_inf=log_f,
        norm_const=float(np.exp(np.log(g) - betaln(power / 2, 0.5))),
        mean_inf=np.array([0.0]),
        closed_form_theta=d**2 / (d + g**2),
        params={"gamma_hat": g, "delta_hat": d},
        quad_half_width=_light_tail_width(log_f, 0.0),
    )


def make_dry_friction():
    """A(y) = -sgn(y), f_inf = exp(-|y|)/2.

    A' is a delta at the origin, so ``jacobian`` returns 0 and the kink is
    flagged in ``discontinuities``; averages of -A' must use <A^2> instead.
    """
    def log_f(y):
        return -np.abs(np.asarray(y, dtype=float))

    return DriftModel(
        name="dryfric",
        dim=1,
        drift=lambda y: -np.sign(np.asarray(y, dtype=float)),
        jacobian=lambda y: np.zeros(np.shape(y)),
        drift_dd=lambda y: np.zeros(np.shape(y)),
        log_f_inf=log_f,
        norm_const=0.5,
        mean_inf=np.array([0.0]),
        closed_form_theta=1.0,
        discontinuities=(0.0,),
        quad_half_width=_light_tail_width(log_f, 0.0),
    )


def student_nu(gamma_hat):
    """Degrees of freedom of the Student-t invariant density: nu = 1 + 1/gamma^2."""
    return 1.0 + 1.0 / gamma_hat**2


def make_student_t_1d(gamma_hat):
    """A(y) = -y / (1 + gamma^2 y^2), whose invariant density is Student-t."""
    _check_positive(gamma_hat=gamma_hat)
    g = float(gamma_hat)
    nu = student_nu(g)
    if nu <= 2:
        raise ModelError(f"gamma_hat={g} gives nu={nu} <= 2: invariant density not normalisable")
    c = g * g

    def drift(y):
        y = np.asarray(y, dtype=float)
        return -y / (1 + c * y * y)

    def jac(y):
        y2 = c * np.asarray(y, dtype=float) ** 2
        return -(1 - y2) / (1 + y2) ** 2

    def dd(y):
        y = np.asarray(y, dtype=float)
        y2 = c * y * y
        return 2 * c * y * (3 - y2) / (1 + y2) ** 3

    def log_f(y):
        return -np.log1p(c * np.asarray(y, dtype=float) ** 2) / (2 * c)

    return DriftModel(
        name="student1d",
        dim=1,
        drift=drift,
        jacobian=jac,
        drift_dd=dd,
        log_f_inf=log_f,
        norm_const=float(np.exp(np.log(g) - betaln((nu - 2) / 2, 0.5))),
        mean_inf=np.array([0.0]),
        closed_form_theta=(nu - 2) / (nu + 1),
        params={"gamma_hat": g, "nu": nu},
        tail_power=nu - 1,
        quad_half_width=200.0,
        quad_scale=2.0 / g,
    )


def make_double_well_1d(alpha=(2.0, -2.0), beta=(1.0, 1.0), gamma=1 / np.sqrt(2)):
    """Rational-times-Gaussian invariant density with two wells.

    f_inf = K exp(-y^2/2) (y^2 + gamma^2) / prod_j ((y - alpha_j)^2 + beta_j^2),
    K found by quadrature.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.shape != (2,) or beta.shape != (2,):
        raise ModelError("double well needs two alphas and two betas")
    _check_positive(beta=beta, gamma=gamma)
    g2 = float(gamma) ** 2
    b2 = beta**2

    def drift(y):
        y = np.asarray(y, dtype=float)
        out = -y + 2 * y / (y * y + g2)
        for a, bb in zip(alpha, b2):
            u = y - a
            out = out - 2 * u / (u * u + bb)
        return out

    def jac(y):
        y = np.asarray(y, dtype=float)
        out = -1 + 2 * (g2 - y * y) / (y * y + g2) ** 2
        for a, bb in zip(alpha, b2):
            u = y - a
            out = out - 2 * (bb - u * u) / (u * u + bb) ** 2
        return out

    def dd(y):
        y = np.asarray(y, dtype=float)
        out = -4 * y * (3 * g2 - y * y) / (y * y + g2) ** 3
        for a, bb in zip(alpha, b2):
            u = y - a
            out = out + 4 * u * (3 * bb - u * u) / (u * u + bb) ** 3
        return out

    def log_f(y):
        y = np.asarray(y, dtype=float)
        out = -0.5 * y * y + np.log(y * y + g2)
        for a, bb in zip(alpha, b2):
            out = out - np.log((y - a) ** 2 + bb)
        return out

    L = _light_tail_width(log_f, 0.0)
    mass, _ = quadrature.integrate_line(lambda y: np.exp(log_f(y)), 0.0, L, tol=1e-14)
    K = 1.0 / float(mass)
    mean, _ = quadrature.integrate_line(lambda y: y * K * np.exp(log_f(y)), 0.0, L, tol=1e-14)

    return DriftModel(
        name="dwell1d",
        dim=1,
        drift=drift,
        jacobian=jac,
        drift_dd=dd,
        log_f_inf=log_f,
        norm_const=K,
        mean_inf=np.array([float(mean)]),
        params={"alpha": alpha.tolist(), "beta": beta.tolist(), "gamma": float(gamma)},
        quad_half_width=L,
    )


# --- multivariate models ------------------------------------------------------

def _gaussian_log_f(prec, mean):
    def log_f(y):
        d = np.asarray(y, dtype=float) - mean
        return -0.5 * np.einsum("...i,ij,...j->...", d, prec, d)
    return log_f


def make_ou_nd(a, mean=None):
    """Multivariate OU drift A(y) = -a (y - mean).

    Symmetric ``a`` gives a conservative field with invariant covariance a^-1.
    A non-symmetric stable ``a`` is accepted as a non-conservative model whose
    invariant covariance solves the Lyapunov equation.
    """
    from .exact import lyapunov_sigma_inf  # exact does not import models

    a = np.array(a, dtype=float)
    m = a.shape[0]
    if a.shape != (m, m):
        raise ModelError("generator must be square")
    mean = np.zeros(m) if mean is None else np.asarray(mean, dtype=float)
    symmetric = np.allclose(a, a.T, rtol=0, atol=1e-14 * max(1.0, np.abs(a).max()))
    if symmetric:
        a = 0.5 * (a + a.T)
        if np.linalg.eigvalsh(a).min() <= 0:
            raise ModelError("symmetric generator must be positive definite")
        sigma = np.linalg.inv(a)
    else:
        sigma = lyapunov_sigma_inf(a)
    prec = np.linalg.inv(sigma)
    prec = 0.5 * (prec + prec.T)
    sign, logdet = np.linalg.slogdet(prec / (2 * np.pi))

    def log_omega(B, y):
        d = np.asarray(y, dtype=float) - mean
        return -0.5 * np.einsum("...i,ij,...j->...", d, B @ a, d)

    lam_min = np.linalg.eigvalsh(prec).min()
    return DriftModel(
        name="ou",
        dim=m,
        drift=lambda y: -(np.asarray(y, dtype=float) - mean) @ a.T,
        jacobian=lambda y: np.broadcast_to(-a, np.shape(y)[:-1] + (m, m)).copy(),
        log_f_inf=_gaussian_log_f(prec, mean),
        norm_const=float(np.exp(0.5 * logdet)),
        mean_inf=mean,
        conservative=symmetric,
        closed_form_theta=a.copy() if symmetric else None,
        params={"a": a.tolist(), "mean": mean.tolist()},
        quad_half_width=max(12.0, float(np.sqrt(2 * 30 / lam_min))),
        log_omega=log_omega if symmetric else None,
    )


def make_student_t_2d(a1, a2, nu):
    """Bivariate Student-t invariant density with scale weights a1, a2."""
    _check_positive(a1=a1, a2=a2)
    if not nu > 2:
        raise ModelError(f"nu must exceed 2, got {nu}")
    a1, a2, nu = float(a1), float(a2), float(nu)
    w = np.array([a1, a2])
    c = (nu + 2) / nu

    def quad(y):
        return np.einsum("...i,i,...i->...", y, w, y)

    def drift(y):
        y = np.asarray(y, dtype=float)
        s = 1 + quad(y) / nu
        return -c * (w * y) / s[..., None]

    def jac(y):
        y = np.asarray(y, dtype=float)
        s = (1 + quad(y) / nu)[..., None, None]
        wy = w * y
        return -c * np.diag(w) / s + (2 * c / nu) * np.einsum("...i,...j->...ij", wy, wy) / s**2

    def log_f(y):
        return -0.5 * (nu + 2) * np.log1p(quad(np.asarray(y, dtype=float)) / nu)

    def log_omega(B, y):
        # Closed form needs B diagonal (theta diagonal).
        if abs(B[0, 1]) > 1e-14 * np.abs(B).max() or abs(B[1, 0]) > 1e-14 * np.abs(B).max():
            return None
        y = np.asarray(y, dtype=float)
        qy = quad(y)
        qb = np.einsum("...i,i,...i->...", y, w * np.diag(B), y)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(qy > 0, qb / np.where(qy > 0, qy, 1.0), 0.0)
        return ratio * log_f(y)  # log_f(0) = 0

    return DriftModel(
        name="student2d",
        dim=2,
        drift=drift,
        jacobian=jac,
        log_f_inf=log_f,
        norm_const=np.sqrt(a1 * a2) / (2 * np.pi),
        mean_inf=np.zeros(2),
        closed_form_theta=(nu + 2) / (nu + 4) * np.diag(w),
        params={"a1": a1, "a2": a2, "nu": nu},
        tail_power=nu + 2,
        quad_half_width=200.0,
        quad_scale=1.0,
        log_omega=log_omega,
    )


def make_double_well_2d(a, alpha1, alpha2, beta, gamma):
    """Bivariate double well with Gaussian envelope exp(-y'ay/2).

    K and the long-term mean are computed once here by 2D quadrature.
    """
    a = np.array(a, dtype=float)
    if a.shape != (2, 2) or not np.allclose(a, a.T):
        raise ModelError("a must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ModelError("a must be positive definite")
    al = np.array([alpha1, alpha2], dtype=float)
    beta = np.asarray(beta, dtype=float)
    if al.shape != (2, 2) or beta.shape != (2,):
        raise ModelError("need two 2-vectors alpha and two betas")
    _check_positive(beta=beta, gamma=gamma)
    g2 = float(gamma) ** 2
    b2 = beta**2
    eye = np.eye(2)

    def drift(y):
        y = np.asarray(y, dtype=float)
        out = -y @ a.T + 2 * y / (np.sum(y * y, -1) + g2)[..., None]
        for aj, bb in zip(al, b2):
            u = y - aj
            out = out - 2 * u / (np.sum(u * u, -1) + bb)[..., None]
        return out

    def jac(y):
        y = np.asarray(y, dtype=float)
        r = (np.sum(y * y, -1) + g2)[..., None, None]
        out = -a + 2 * eye / r - 4 * np.einsum("...i,...j->...ij", y, y) / r**2
        for aj, bb in zip(al, b2):
            u = y - aj
            s = (np.sum(u * u, -1) + bb)[..., None, None]
            out = out - 2 * eye / s + 4 * np.einsum("...i,...j->...ij", u, u) / s**2
        return out

    def log_f(y):
        y = np.asarray(y, dtype=float)
        out = -0.5 * np.einsum("...i,ij,...j->...", y, a, y) + np.log(np.sum(y * y, -1) + g2)
        for aj, bb in zip(al, b2):
            u = y - aj
            out = out - np.log(np.sum(u * u, -1) + bb)
        return out

    L = max(12.0, float(np.sqrt(2 * 34 / np.linalg.eigvalsh(a).min())))
    box = ((-L, L), (-L, L))
    mass, _ = quadrature.integrate_2d(lambda p: np.exp(log_f(p)), box, tol=1e-13)
    K = 1.0 / float(mass)
    mean, _ = quadrature.integrate_2d(lambda p: p * K * np.exp(log_f(p))[..., None], box, tol=1e-13)

    return DriftModel(
        name="dwell2d",
        dim=2,
        drift=drift,
        jacobian=jac,
        log_f_inf=log_f,
        norm_const=K,
        mean_inf=np.asarray(mean, dtype=float),
        params={"a": a.tolist(), "alpha1": al[0].tolist(), "alpha2": al[1].tolist(),
                "beta": beta.tolist(), "gamma": float(gamma)},
        quad_half_width=L,
        features=(np.zeros(2), al[0].copy(), al[1].copy()),
    )


# --- registry -------------------------------------------------------------------

DWELL2D_CASES = {
    "a": dict(a=np.eye(2), alpha1=(2.0, 0.0), alpha2=(-2.0, 0.0), beta=(1.0, 1.0), gamma=0.5),
    "b": dict(a=np.eye(2), alpha1=(2.0, 2.0), alpha2=(-2.0, -2.0), beta=(1.0, 0.7), gamma=1.0),
}


def _ou_factory(theta=None, y_inf=0.0, a=None, mean=None):
    if a is not None:
        return make_ou_nd(a, mean)
    if theta is None:
        raise ModelError("ou needs 'theta' (1D) or 'a' (matrix)")
    return make_ou_1d(theta, y_inf)


def _dwell2d_factory(case=None, **kw):
    if case is not None:
        if case not in DWELL2D_CASES:
            raise ModelError(f"unknown dwell2d case {case!r}")
        kw = {**DWELL2D_CASES[case], **kw}
    return make_double_well_2d(**kw)


MODELS = {
    "ou": _ou_factory,
    "sech": make_sech_power,
    "dryfric": make_dry_friction,
    "student1d": make_student_t_1d,
    "dwell1d": make_double_well_1d,
    "student2d": make_student_t_2d,
    "dwell2d": _dwell2d_factory,
}


def make_model(model_id, **params):
    """Build a catalog model from its string id and keyword parameters."""
    try:
        factory = MODELS[model_id]
    except KeyError:
        raise ModelError(f"unknown model id {model_id!r}; choose from {sorted(MODELS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {model_id!r}: {exc}") from None
