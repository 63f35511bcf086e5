"""Densities sampled on uniform tensor grids."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DensityField:
    """Density values on a uniform tensor grid at one time.

    ``grid`` holds one 1D node array per axis. On a periodic grid the last
    node is one spacing short of the right edge, and the trapezoid rule
    reduces to spacing * sum.
    """

    grid: tuple
    values: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)
    periodic: bool = True

    def __post_init__(self):
        self.grid = tuple(np.asarray(g, dtype=float) for g in self.grid)
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(len(g) for g in self.grid)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {shape}")

    @property
    def dim(self):
        return len(self.grid)

    @property
    def spacing(self):
        return tuple(float(g[1] - g[0]) for g in self.grid)

    def points(self):
        """Grid points with a trailing coordinate axis; 1D grids give plain nodes."""
        if self.dim == 1:
            return self.grid[0]
        return np.stack(np.meshgrid(*self.grid, indexing="ij"), axis=-1)

    def same_grid(self, other):
        return (self.periodic == other.periodic and self.dim == other.dim
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(self.grid, other.grid)))

    def integrate(self, values=None):
        """Trapezoid integral of ``values`` (default: the density) over the grid."""
        v = self.values if values is None else np.asarray(values, dtype=float)
        if self.periodic:
            return float(np.sum(v) * np.prod(self.spacing))
        for axis in reversed(range(self.dim)):
            v = np.trapezoid(v, self.grid[axis], axis=axis)
        return float(v)

    def with_values(self, values, **meta):
        return DensityField(self.grid, values, self.tau, {**self.meta, **meta}, self.periodic)


def periodic_grid(half_width, modes):
    """Nodes -L, -L + dx, ..., L - dx with dx = 2L/N, per axis."""
    return tuple(-L + (2 * L / N) * np.arange(N) for L, N in zip(half_width, modes))


def fourier_interpolate(field, points):
    """Evaluate the trigonometric interpolant of a periodic field at arbitrary points.

    ``points`` has shape (n,) in 1D or (n, m). Cost is O(n * N) per axis, so
    this is meant for a modest number of probe points.
    """
    if not field.periodic:
        raise ValueError("Fourier interpolation needs a periodic grid")
    pts = np.asarray(points, dtype=float)
    if field.dim == 1:
        pts = pts.reshape(-1, 1)
    coef = np.fft.fftn(field.values) / field.values.size
    # the solver keeps Nyquist modes at zero; dropping them keeps the interpolant real
    for a, g in enumerate(field.grid):
        n = len(g)
        idx = [slice(None)] * field.dim
        idx[a] = n // 2
        coef[tuple(idx)] = 0.0 if n % 2 == 0 else coef[tuple(idx)]
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        c = coef
        for a, g in enumerate(field.grid):
            n = len(g)
            L = -g[0]
            k = 2 * np.pi * np.fft.fftfreq(n, 2 * L / n)
            phase = np.exp(1j * k * (p[a] - g[0]))
            c = np.tensordot(phase, c, axes=(0, 0))
        out[i] = float(np.real(c))
    return out
