"""Error and diagnostic measures between density fields."""

from dataclasses import asdict, dataclass

import numpy as np

from .fields import DensityField


@dataclass(frozen=True)
class ErrorReport:
    l1: float
    linf: float
    mass1: float
    mass2: float
    grid_id: str
    tau: float
    reciprocity_defect: float = None

    def to_dict(self):
        return asdict(self)


def grid_id(field):
    parts = [f"[{g[0]:.6g},{g[-1]:.6g}]x{len(g)}" for g in field.grid]
    return ("periodic " if field.periodic else "") + " * ".join(parts)


def _check_same(f1, f2):
    if not f1.same_grid(f2):
        raise ValueError(f"grid mismatch: {grid_id(f1)} vs {grid_id(f2)}")


def mass(f):
    """Trapezoid mass of a density field."""
    return f.integrate()


def l1_error(f1, f2):
    """Trapezoid integral of |f1 - f2| over a shared grid."""
    _check_same(f1, f2)
    return f1.integrate(np.abs(f1.values - f2.values))


def linf_error(f1, f2):
    _check_same(f1, f2)
    return float(np.max(np.abs(f1.values - f2.values)))


def compare(f1, f2, reciprocity=None):
    return ErrorReport(l1=l1_error(f1, f2), linf=linf_error(f1, f2), mass1=mass(f1),
                       mass2=mass(f2), grid_id=grid_id(f1), tau=float(f1.tau),
                       reciprocity_defect=reciprocity)


def reciprocity_defect(method, model, tau, sample_pairs):
    """max |g(tau, y | y0) - g(tau, y0 | y)| / max(g, 1e-30) over the pairs.

    ``method(tau, y, y0)`` returns g for one target and one start point.
    """
    worst = 0.0
    for y, y0 in sample_pairs:
        a = float(method(tau, y, y0))
        b = float(method(tau, y0, y))
        worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-30))
    return worst


def field_from_function(fun, grid, tau, periodic=True, **meta):
    """Sample ``fun(points)`` on a tensor grid."""
    proto = DensityField(grid, np.zeros(tuple(len(g) for g in grid)), tau, meta, periodic)
    return proto.with_values(fun(proto.points()))
