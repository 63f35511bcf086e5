"""Closed-form transition densities used as references.

Covers the 1D and symmetric multivariate OU processes, dry friction, the
square-root (CIR) process on the half line, and OU with a non-symmetric
generator. Every density has a ``log_`` variant; the plain version is just
its exponential.
"""

import numpy as np
from scipy.linalg import expm
from scipy.special import erfc, gammaln, ive, log_ndtr

from .errors import ModelError, NumericalError


def _check_tau(tau):
    if not np.all(np.asarray(tau) > 0):
        raise ModelError("tau must be positive")


# --- Ornstein-Uhlenbeck ---------------------------------------------------------

def ou_moments_1d(theta, y_inf, tau, y0):
    p = np.exp(-theta * tau)
    mean = y_inf + (y0 - y_inf) * p
    var = -np.expm1(-2 * theta * tau) / theta
    return mean, var


def ou_log_density_1d(theta, y_inf, tau, y, y0):
    if not theta > 0:
        raise ModelError("theta must be positive")
    _check_tau(tau)
    mean, var = ou_moments_1d(theta, y_inf, np.asarray(tau, dtype=float), y0)
    y = np.asarray(y, dtype=float)
    return -0.5 * np.log(2 * np.pi * var) - (y - mean) ** 2 / (2 * var)


def ou_density_1d(theta, y_inf, tau, y, y0):
    """Gaussian with mean y_inf + (y0 - y_inf) e^{-theta tau}, var (1 - e^{-2 theta tau})/theta."""
    return np.exp(ou_log_density_1d(theta, y_inf, tau, y, y0))


def _sym_eig(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError("generator must be a square matrix")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ModelError("ou_density_nd needs a symmetric generator; "
                         "use nonconservative_ou_density otherwise")
    lam, vec = np.linalg.eigh(0.5 * (a + a.T))
    if lam.min() <= 0:
        raise ModelError("generator must be positive definite")
    return lam, vec


def ou_log_density_nd(a, tau, y, y0):
    """Log transition density of dY = -aY dt + sqrt(2) dW for symmetric a."""
    _check_tau(tau)
    lam, vec = _sym_eig(a)
    y = np.asarray(y, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    p = np.exp(-lam * tau)
    var = -np.expm1(-2 * lam * tau) / lam
    # work in the eigenbasis of a
    z = y @ vec - (y0 @ vec) * p
    return (-0.5 * np.sum(np.log(2 * np.pi * var))
            - 0.5 * np.sum(z * z / var, axis=-1))


def ou_density_nd(a, tau, y, y0):
    return np.exp(ou_log_density_nd(a, tau, y, y0))


def ou_log_g_nd(a, tau, y, y0):
    """log(f/f_inf) for the symmetric OU, from its product form.

    Written independently of :func:`ou_log_density_nd` so the two can be
    checked against each other.
    """
    _check_tau(tau)
    lam, vec = _sym_eig(a)
    u = np.asarray(y, dtype=float) @ vec
    u0 = np.asarray(y0, dtype=float) @ vec
    p = np.exp(-lam * tau)
    one_minus_q = -np.expm1(-2 * lam * tau)
    d = u - u0
    return (-0.5 * np.sum(np.log(one_minus_q))
            - 0.5 * np.sum(lam * p / one_minus_q * d * d, axis=-1)
            + 0.5 * np.sum(lam * p / (1 + p) * u * u, axis=-1)
            + 0.5 * np.sum(lam * p / (1 + p) * u0 * u0, axis=-1))


def ou_h_nd(a, tau, y, y0):
    """H = -grad log g for the symmetric OU."""
    lam, vec = _sym_eig(a)
    u = np.asarray(y, dtype=float) @ vec
    u0 = np.asarray(y0, dtype=float) @ vec
    p = np.exp(-lam * tau)
    h = lam * p / (-np.expm1(-2 * lam * tau)) * (u - u0) - lam * p / (1 + p) * u
    return h @ vec.T


# --- dry friction -------------------------------------------------------------------

def _std_normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x) / np.sqrt(2))


def dryfric_density(tau, y, y0):
    """Transition density for A(y) = -sgn(y)."""
    _check_tau(tau)
    tau = np.asarray(tau, dtype=float)
    y, y0 = np.asarray(y, dtype=float), np.asarray(y0, dtype=float)
    heat = np.exp(-((y - y0) ** 2) / (4 * tau)) / np.sqrt(4 * np.pi * tau)
    first = heat * np.exp(-tau / 4 + (np.abs(y0) - np.abs(y)) / 2)
    second = 0.5 * np.exp(-np.abs(y)) * _std_normal_cdf((tau - np.abs(y) - np.abs(y0)) / np.sqrt(2 * tau))
    return first + second


def dryfric_log_density(tau, y, y0):
    _check_tau(tau)
    tau = np.asarray(tau, dtype=float)
    y, y0 = np.asarray(y, dtype=float), np.asarray(y0, dtype=float)
    log_first = (-((y - y0) ** 2) / (4 * tau) - 0.5 * np.log(4 * np.pi * tau)
                 - tau / 4 + (np.abs(y0) - np.abs(y)) / 2)
    log_second = -np.log(2) - np.abs(y) + log_ndtr((tau - np.abs(y) - np.abs(y0)) / np.sqrt(2 * tau))
    return np.logaddexp(log_first, log_second)


def dryfric_g_terms(tau, y, y0):
    """The two terms of g = f/f_inf for dry friction, returned separately.

    The first is the far-field (short-time, outside the V) piece; the second
    governs the approach to equilibrium.
    """
    _check_tau(tau)
    tau = np.asarray(tau, dtype=float)
    y, y0 = np.asarray(y, dtype=float), np.asarray(y0, dtype=float)
    first = (np.exp(-((y - y0) ** 2) / (4 * tau)) / np.sqrt(np.pi * tau)
             * np.exp(-tau / 4) * np.exp((np.abs(y0) + np.abs(y)) / 2))
    second = _std_normal_cdf((tau - np.abs(y) - np.abs(y0)) / np.sqrt(2 * tau))
    return first, second


def dryfric_g(tau, y, y0):
    first, second = dryfric_g_terms(tau, y, y0)
    return first + second


# --- square-root process ------------------------------------------------------------

def _check_half_line(**kw):
    for k, v in kw.items():
        if not np.all(np.asarray(v) > 0):
            raise ModelError(f"{k} must be positive on the half line")


def sqrt_process_log_f_inf(nu, y):
    y = np.asarray(y, dtype=float)
    return (nu - 1) * np.log(y) - y - gammaln(nu)


def _sqrt_z(tau, y, y0):
    return 2 * np.sqrt(y * y0 * np.exp(-tau)) / (-np.expm1(-tau))


def sqrt_process_log_density(nu, tau, y, y0):
    """Log transition density of the rescaled square-root process.

    The Bessel function is used in its exponentially scaled form,
    log I(z) = log ive(z) + z, which stays finite for large z.
    """
    _check_half_line(nu=nu, tau=tau, y=y, y0=y0)
    tau = np.asarray(tau, dtype=float)
    y, y0 = np.asarray(y, dtype=float), np.asarray(y0, dtype=float)
    one_m = -np.expm1(-tau)
    z = _sqrt_z(tau, y, y0)
    log_bessel = np.log(ive(nu - 1, z)) + z
    return (-y - np.log(one_m) + 0.5 * (nu - 1) * (np.log(y) + tau - np.log(y0))
            - (y + y0) * np.exp(-tau) / one_m + log_bessel)


def sqrt_process_density(nu, tau, y, y0):
    return np.exp(sqrt_process_log_density(nu, tau, y, y0))


def sqrt_process_log_g(nu, tau, y, y0):
    return sqrt_process_log_density(nu, tau, y, y0) - sqrt_process_log_f_inf(nu, y)


def sqrt_process_h(nu, tau, y, y0):
    """-d/dy log g for the square-root process, via a Bessel-ratio identity."""
    _check_half_line(nu=nu, tau=tau, y=y, y0=y0)
    tau = np.asarray(tau, dtype=float)
    y, y0 = np.asarray(y, dtype=float), np.asarray(y0, dtype=float)
    z = _sqrt_z(tau, y, y0)
    ratio = ive(nu, z) / ive(nu - 1, z)
    return np.exp(-tau) / (-np.expm1(-tau)) - z * ratio / (2 * y)


# --- non-conservative OU -----------------------------------------------------------

def _check_stable(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError("generator must be a square matrix")
    if np.linalg.eigvals(a).real.min() <= 0:
        raise ModelError("generator is not stable: an eigenvalue has non-positive real part")
    return a


def lyapunov_sigma_inf(a):
    """Solve a s + s a' = 2I for symmetric s as a linear system in its entries."""
    a = _check_stable(a)
    m = a.shape[0]
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    index = {}
    for k, (i, j) in enumerate(pairs):
        index[i, j] = index[j, i] = k
    n = len(pairs)
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    for row, (i, j) in enumerate(pairs):
        # (a s)_ij + (s a')_ij = sum_k a_ik s_kj + s_ik a_jk
        for k in range(m):
            M[row, index[k, j]] += a[i, k]
            M[row, index[i, k]] += a[j, k]
        rhs[row] = 2.0 if i == j else 0.0
    sol = np.linalg.solve(M, rhs)
    sigma = np.empty((m, m))
    for k, (i, j) in enumerate(pairs):
        sigma[i, j] = sigma[j, i] = sol[k]
    resid = np.abs(a @ sigma + sigma @ a.T - 2 * np.eye(m)).max()
    if resid > 1e-10 * max(1.0, np.abs(sigma).max() * np.abs(a).max()):
        raise NumericalError(f"Lyapunov residual {resid:.2e} too large")
    return sigma


def nonconservative_ou_moments(a, tau, y0):
    """Mean e^{-a tau} y0 and covariance s_inf - e^{-a tau} s_inf e^{-a' tau}."""
    a = _check_stable(a)
    _check_tau(tau)
    sigma_inf = lyapunov_sigma_inf(a)
    E = expm(-a * tau)
    cov = sigma_inf - E @ sigma_inf @ E.T
    return E @ np.asarray(y0, dtype=float), 0.5 * (cov + cov.T)


def nonconservative_ou_log_density(a, tau, y, y0):
    mean, cov = nonconservative_ou_moments(a, tau, y0)
    chol = np.linalg.cholesky(cov)
    d = np.asarray(y, dtype=float) - mean
    z = np.linalg.solve(chol, d.reshape(-1, len(mean)).T).T.reshape(d.shape)
    logdet = 2 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (len(mean) * np.log(2 * np.pi) + logdet) - 0.5 * np.sum(z * z, axis=-1)


def nonconservative_ou_density(a, tau, y, y0):
    return np.exp(nonconservative_ou_log_density(a, tau, y, y0))


def symmetric_equivalent(a):
    """The unique symmetric generator with the same invariant covariance."""
    s_inv = np.linalg.inv(lyapunov_sigma_inf(a))
    return 0.5 * (s_inv + s_inv.T)


def equivalence_class_check(a1, a2, tol=1e-8):
    """Whether two stable generators share their invariant covariance.

    Returns ``(equivalent, report)``; the report carries both covariances,
    traces and the max entrywise difference.
    """
    s1 = lyapunov_sigma_inf(a1)
    s2 = lyapunov_sigma_inf(a2)
    diff = float(np.abs(s1 - s2).max())
    report = {
        "sigma_inf_1": s1.tolist(),
        "sigma_inf_2": s2.tolist(),
        "trace_1": float(np.trace(a1)),
        "trace_2": float(np.trace(a2)),
        "max_sigma_difference": diff,
    }
    return diff < tol, report
