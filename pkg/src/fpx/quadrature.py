"""Composite Gauss-Legendre quadrature on panels, 1D and tensor-product 2D.

Every integrator here refines by doubling the panel count and stops once two
successive estimates agree; the integrands in this package are smooth (or
have known kinks that are passed in as breakpoints), so that converges fast.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import QuadratureError

ORDER = 16


@lru_cache(maxsize=8)
def gauss_legendre(order=ORDER):
    """Nodes and weights of the ``order``-point rule on [-1, 1]."""
    x, w = leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_edges(a, b, panels, center=None, scale=None, breakpoints=()):
    """Panel edges for [a, b].

    With ``scale`` set, edges are placed uniformly in asinh((x - center)/scale)
    so panels are narrow near ``center`` and widen geometrically outward; this
    keeps fat-tailed integrands on wide windows cheap. Breakpoints inside
    (a, b) are always added as edges.
    """
    if scale is None:
        edges = np.linspace(a, b, panels + 1)
    else:
        c = 0.5 * (a + b) if center is None else center
        u = np.linspace(np.arcsinh((a - c) / scale), np.arcsinh((b - c) / scale), panels + 1)
        edges = c + scale * np.sinh(u)
        edges[0], edges[-1] = a, b
    extra = [p for p in breakpoints if a < p < b]
    if extra:
        edges = np.unique(np.concatenate([edges, extra]))
    return edges


def panel_rule(edges, order=ORDER):
    """Flattened nodes and weights for Gauss-Legendre on every panel."""
    x, w = gauss_legendre(order)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def _converged(new, old, tol):
    diff = np.max(np.abs(np.asarray(new) - np.asarray(old)))
    return diff <= tol * max(1.0, float(np.max(np.abs(new)))), float(diff)


def integrate(fun, a, b, *, tol=1e-10, panels=8, max_panels=2**15,
              center=None, scale=None, breakpoints=(), order=ORDER):
    """Integrate ``fun`` over [a, b] with panel doubling.

    ``fun`` maps a 1D array of nodes to an array whose leading axis runs over
    the nodes; trailing axes (e.g. a matrix-valued integrand) are preserved.

    Returns ``(value, error_estimate)``.
    """
    def estimate(p):
        nodes, weights = panel_rule(panel_edges(a, b, p, center, scale, breakpoints), order)
        vals = np.asarray(fun(nodes), dtype=float)
        return np.tensordot(weights, vals, axes=(0, 0))

    old = estimate(panels)
    p = panels
    while True:
        p *= 2
        new = estimate(p)
        ok, diff = _converged(new, old, tol)
        if ok:
            return new, diff
        if p >= max_panels:
            raise QuadratureError(
                f"no convergence on [{a}, {b}] after {p} panels (change {diff:.3e})",
                iterates=(old, new),
            )
        old = new


def power_tail(value_at_edge, edge, power):
    """Integral from |edge| to infinity of g(y) ~ g(edge) (edge/y)**power."""
    if power <= 1:
        raise ValueError("tail power must exceed 1 for an integrable tail")
    return np.asarray(value_at_edge) * abs(edge) / (power - 1.0)


def integrate_line(fun, center, half_width, *, tail_power=None, tol=1e-10,
                   scale=None, breakpoints=(), panels=8, max_panels=2**15):
    """Integrate over the real line, truncated to ``center +/- half_width``.

    When ``tail_power`` is given the integrand is assumed to decay like
    |y|**-tail_power beyond the window and both tails are added analytically.
    """
    a, b = center - half_width, center + half_width
    value, err = integrate(fun, a, b, tol=tol, panels=panels, max_panels=max_panels,
                           center=center, scale=scale, breakpoints=breakpoints)
    if tail_power is not None:
        ends = np.array([a, b])
        vals = np.asarray(fun(ends), dtype=float)
        value = value + power_tail(vals[0], a, tail_power) + power_tail(vals[1], b, tail_power)
    return value, err


def integrate_2d(fun, box, *, tol=1e-10, panels=8, max_panels=2048,
                 center=None, scale=None, breakpoints=((), ())):
    """Tensor-product Gauss-Legendre over ``box = ((a1, b1), (a2, b2))``.

    ``fun`` receives points of shape (n1, n2, 2) and returns (n1, n2, ...).
    """
    center = (None, None) if center is None else center

    def estimate(p):
        rules = [
            panel_rule(panel_edges(lo, hi, p, c, scale, bp))
            for (lo, hi), c, bp in zip(box, center, breakpoints)
        ]
        (x1, w1), (x2, w2) = rules
        pts = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
        vals = np.asarray(fun(pts), dtype=float)
        return np.tensordot(w1, np.tensordot(w2, vals, axes=(0, 1)), axes=(0, 0))

    old = estimate(panels)
    p = panels
    while True:
        p *= 2
        new = estimate(p)
        ok, diff = _converged(new, old, tol)
        if ok:
            return new, diff
        if p >= max_panels:
            raise QuadratureError(
                f"2D quadrature did not converge after {p} panels per axis (change {diff:.3e})",
                iterates=(old, new),
            )
        old = new


def integrate_segments(fun, breaks, *, tol=1e-11, panels=2, max_panels=512, order=ORDER):
    """Batched integrals over [breaks[..., 0], breaks[..., -1]].

    ``breaks`` has shape (..., K) with sorted interior breakpoints; each of the
    K-1 segments gets the same number of panels. ``fun`` takes node positions
    of shape (..., n) and returns values of the same shape. Used for line
    integrals evaluated at many endpoints at once.
    """
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(order)

    def estimate(p):
        s = np.linspace(0.0, 1.0, p + 1)
        sn = ((s[:-1, None] + s[1:, None]) / 2 + (np.diff(s)[:, None] / 2) * x).ravel()
        sw = ((np.diff(s)[:, None] / 2) * w).ravel()
        lo = breaks[..., :-1, None]
        width = np.diff(breaks, axis=-1)[..., None]
        nodes = (lo + width * sn).reshape(*breaks.shape[:-1], -1)
        weights = (width * sw).reshape(*breaks.shape[:-1], -1)
        return np.sum(weights * fun(nodes), axis=-1)

    old = estimate(panels)
    p = panels
    while True:
        p *= 2
        new = estimate(p)
        ok, diff = _converged(new, old, tol)
        if ok:
            return new
        if p >= max_panels:
            raise QuadratureError(
                f"line integral did not converge after {p} panels (change {diff:.3e})",
                iterates=(old, new),
            )
        old = new
