"""Experiment specifications, figure presets and the run pipeline.

A run evaluates every requested method at every requested time on one
shared grid (the solver grid), writes one CSV per method and time, and a
JSON summary with theta, masses, errors against a reference method,
reciprocity defects and timings.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import approx1d, approxnd, exact, extensions
from .errors import ModelError, SpecError
from .fields import DensityField, periodic_grid
from .fisher import theta_for
from .metrics import compare, grid_id, mass, reciprocity_defect
from .models import MODELS, make_model
from .solver import SolverConfig, mode_doubling_study, solve_fpe

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

METHODS = ("approx", "approx-b1-h", "exact", "solver", "farfield", "sqrt-approx", "noncons")
H_METHODS = ("approx-b1-h", "sqrt-approx")  # tables of h rather than densities
SQRT_MODEL = "sqrt"
RECIPROCITY_PAIRS = 20


@dataclass
class ExperimentSpec:
    name: str
    model: str
    y0: list
    times: list
    methods: list
    params: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)  # only for the half-line model
    theta: object = None
    reference: str = None
    out: str = "runs"

    @property
    def dim(self):
        return len(self.y0)


# --- validation ----------------------------------------------------------------------

def _as_float_list(value, path):
    vals = value if isinstance(value, (list, tuple)) else [value]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise SpecError(path, f"expected numbers, got {value!r}") from None


_SOLVER_KEYS = set(SolverConfig.__dataclass_fields__)
_SPEC_KEYS = set(ExperimentSpec.__dataclass_fields__)


def spec_from_dict(data, out=None):
    """Validate a plain mapping (e.g. parsed TOML) into an ExperimentSpec."""
    if not isinstance(data, dict):
        raise SpecError("<root>", "spec must be a table")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise SpecError(sorted(unknown)[0], "unknown field")
    for key in ("model", "y0", "times", "methods"):
        if key not in data:
            raise SpecError(key, "missing")
    model = data["model"]
    if model not in MODELS and model != SQRT_MODEL:
        raise SpecError("model", f"unknown model {model!r}; choose from {sorted(MODELS) + [SQRT_MODEL]}")
    y0 = _as_float_list(data["y0"], "y0")
    times = _as_float_list(data["times"], "times")
    if not times:
        raise SpecError("times", "at least one time is required")
    if any(t <= 0 for t in times):
        raise SpecError("times", "times must be positive")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise SpecError("times", "times must be strictly ascending")
    methods = data["methods"]
    if not isinstance(methods, list) or not methods:
        raise SpecError("methods", "at least one method is required")
    for i, m in enumerate(methods):
        if m not in METHODS:
            raise SpecError(f"methods[{i}]", f"unknown method {m!r}; choose from {list(METHODS)}")
    if len(set(methods)) != len(methods):
        raise SpecError("methods", "duplicate method")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise SpecError("params", "must be a table")
    solver = data.get("solver", {})
    if not isinstance(solver, dict):
        raise SpecError("solver", "must be a table")
    for k in solver:
        if k not in _SOLVER_KEYS:
            raise SpecError(f"solver.{k}", "unknown solver setting")
    spec = ExperimentSpec(
        name=str(data.get("name", model)), model=model, y0=y0, times=times, methods=list(methods),
        params=dict(params), solver=dict(solver), grid=dict(data.get("grid", {})),
        theta=data.get("theta"), reference=data.get("reference"),
        out=str(out if out is not None else data.get("out", "runs")),
    )
    _check_model(spec)
    return spec


def _check_model(spec):
    if spec.model == SQRT_MODEL:
        if "nu" not in spec.params:
            raise SpecError("params.nu", "missing")
        if len(spec.y0) != 1 or spec.y0[0] <= 0:
            raise SpecError("y0", "the half-line model needs one positive start point")
        for i, m in enumerate(spec.methods):
            if m not in ("exact", "sqrt-approx"):
                raise SpecError(f"methods[{i}]", f"{m!r} is not available for the half-line model")
        return
    try:
        model = build_model(spec)
    except ModelError as exc:
        raise SpecError("params", str(exc)) from None
    if model.dim != spec.dim:
        raise SpecError("y0", f"model {spec.model!r} has dimension {model.dim}, y0 has {spec.dim}")
    for i, m in enumerate(spec.methods):
        path = f"methods[{i}]"
        if m == "sqrt-approx":
            raise SpecError(path, "sqrt-approx needs model 'sqrt'")
        if m == "approx-b1-h" and (model.dim != 1 or model.drift_dd is None):
            raise SpecError(path, "approx-b1-h needs a 1D model providing A''")
        if m == "exact" and not _has_exact(model):
            raise SpecError(path, f"no closed-form density for {model.name!r}")
        if m == "noncons" and (model.name != "ou" or model.conservative):
            raise SpecError(path, "noncons needs an OU model with a non-symmetric generator")
        if m == "solver" and model.dim > 2:
            raise SpecError(path, "the solver handles one or two dimensions")
    if spec.theta is not None:
        try:
            theta = np.atleast_2d(np.asarray(spec.theta, dtype=float))
        except (TypeError, ValueError):
            raise SpecError("theta", "must be a number or matrix") from None
        if theta.shape != (model.dim, model.dim):
            raise SpecError("theta", f"must be {model.dim}x{model.dim}")
    if spec.reference is not None and spec.reference not in spec.methods:
        raise SpecError("reference", "must be one of the run's methods")
    try:
        solver_config(spec).validate(model.dim)
    except ModelError as exc:
        raise SpecError("solver", str(exc)) from None


def _has_exact(model):
    return model.name in ("ou", "dryfric")


def build_model(spec):
    return make_model(spec.model, **spec.params)


def solver_config(spec):
    return SolverConfig(**spec.solver)


def load_spec(path, out=None):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise SpecError(str(path), f"cannot read spec: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(str(path), f"invalid TOML: {exc}") from None
    return spec_from_dict(data, out=out)


# --- presets ------------------------------------------------------------------------

_FIG_TIMES_1D = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0]
_STUDENT2D = {"a1": 1.0, "a2": 3.0, "nu": 5.0}
_SOLVER_STUDENT2D = {"half_width": 20.0, "modes": 256, "dt": 2e-3,
                     "edge_ratio": 1e-6, "edge_mass_tol": 1e-6}
_SOLVER_DWELL2D = {"half_width": 8.0, "modes": 256, "dt": 2e-3}

# The largest time in each 1D preset is where theta * tau reaches 20.
PRESETS = {
    "fig4": dict(model="sech", params={"gamma_hat": 1.0, "delta_hat": 2.0}, y0=[-2.0],
                 times=_FIG_TIMES_1D + [15.0], methods=["approx", "solver"],
                 solver={"half_width": 16.0, "modes": 512}),
    "fig5a": dict(model="dryfric", y0=[-2.0], times=_FIG_TIMES_1D + [20.0],
                  methods=["approx", "solver", "exact", "farfield"], reference="exact",
                  solver={"half_width": 30.0, "modes": 1024}),
    "fig5b": dict(model="dryfric", y0=[-5.0], times=_FIG_TIMES_1D + [20.0],
                  methods=["approx", "solver", "exact", "farfield"], reference="exact",
                  solver={"half_width": 30.0, "modes": 1024}),
    "fig6": dict(model="student1d", params={"gamma_hat": 0.5}, y0=[-2.0],
                 times=_FIG_TIMES_1D + [40.0], methods=["approx", "solver"],
                 solver={"half_width": 60.0, "modes": 1024, "edge_ratio": 1e-5, "edge_mass_tol": 1e-5}),
    "fig7": dict(model="dwell1d", y0=[0.0], times=_FIG_TIMES_1D + [14.0],
                 methods=["approx", "solver"], solver={"half_width": 8.0, "modes": 256}),
    "fig8": dict(model="dwell1d", y0=[-2.0], times=_FIG_TIMES_1D + [14.0, 30.0],
                 methods=["approx", "solver"], solver={"half_width": 8.0, "modes": 256}),
    "fig-biv-22": dict(model="student2d", params=_STUDENT2D, y0=[-2.0, 2.0],
                       times=[0.1, 0.25, 1.0, 5.0], methods=["approx", "solver"], solver=_SOLVER_STUDENT2D),
    "fig-biv31": dict(model="student2d", params=_STUDENT2D, y0=[3.0, 1.0],
                      times=[0.1, 0.25, 1.0, 5.0], methods=["approx", "solver"], solver=_SOLVER_STUDENT2D),
    "fig-dw1mid": dict(model="dwell2d", params={"case": "a"}, y0=[0.0, 0.5],
                       times=[0.3, 1.0, 1.5, 5.0], methods=["approx", "solver"], solver=_SOLVER_DWELL2D),
    "fig-dw1well": dict(model="dwell2d", params={"case": "a"}, y0=[-1.5, 0.0],
                        times=[0.1, 0.8, 2.0, 5.0], methods=["approx", "solver"], solver=_SOLVER_DWELL2D),
    "fig-dw3mid": dict(model="dwell2d", params={"case": "b"}, y0=[-1.0, 1.0],
                       times=[0.3, 1.0, 2.0, 5.0], methods=["approx", "solver"], solver=_SOLVER_DWELL2D),
    "fig-dw3well": dict(model="dwell2d", params={"case": "b"}, y0=[1.3, 1.3],
                        times=[0.3, 2.0, 5.0, 10.0], methods=["approx", "solver"], solver=_SOLVER_DWELL2D),
}


def preset_spec(name, out=None, **overrides):
    if name not in PRESETS:
        raise SpecError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in PRESETS[name].items()}
    data.update(overrides)
    data.setdefault("name", name)
    return spec_from_dict(data, out=out)


# --- method evaluation ----------------------------------------------------------------

class _Run:
    """Shared state for one experiment: model, grid, theta and approximation contexts."""

    def __init__(self, spec):
        self.spec = spec
        self.y0 = np.asarray(spec.y0, dtype=float)
        self.sqrt = spec.model == SQRT_MODEL
        if self.sqrt:
            self.model = None
            g = spec.grid
            n = int(g.get("n", 400))
            self.nodes = (np.linspace(float(g.get("ymin", 0.05)), float(g.get("ymax", 10.0)), n),)
            self.periodic = False
            return
        self.model = build_model(spec)
        self.cfg = solver_config(spec)
        L, N = self.cfg.axes(self.model.dim)
        self.nodes = periodic_grid(L, N)
        self.periodic = True
        self.points = (self.nodes[0] if self.model.dim == 1
                       else np.stack(np.meshgrid(*self.nodes, indexing="ij"), axis=-1))
        self._theta = None

    @property
    def theta(self):
        if self._theta is None:
            if self.spec.theta is not None:
                self._theta = np.atleast_2d(np.asarray(self.spec.theta, dtype=float))
            else:
                self._theta = theta_for(self.model).matrix()
        return self._theta

    def approx_ctx(self, y0):
        if self.model.dim == 1:
            return approx1d.Approx1DContext.from_model(self.model, float(y0[0]), float(self.theta[0, 0]))
        return approxnd.ApproxNDContext.from_model(self.model, y0, self.theta)

    def field(self, values, tau, method):
        meta = {"model": self.spec.model, "method": method, "y0": list(self.spec.y0)}
        return DensityField(self.nodes, values, tau, meta, self.periodic)

    # each evaluator returns a DensityField (or an h table held in one)

    def approx(self, tau):
        ctx = self.approx_ctx(self.y0)
        if self.model.dim == 1:
            return approx1d.f_leading(ctx, tau, self.points)
        return approxnd.f_leading_nd(ctx, tau, self.points)

    def approx_b1_h(self, tau):
        return approx1d.h_with_b1(self.approx_ctx(self.y0), tau, self.points)

    def exact(self, tau):
        if self.sqrt:
            return exact.sqrt_process_density(float(self.spec.params["nu"]), tau, self.nodes[0], self.y0[0])
        m = self.model
        if m.name == "dryfric":
            return exact.dryfric_density(tau, self.points, self.y0[0])
        if m.dim == 1:
            return exact.ou_density_1d(m.params["theta"], m.params["y_inf"], tau, self.points, self.y0[0])
        a = np.asarray(m.params["a"])
        mean = np.asarray(m.params["mean"])
        if m.conservative:
            return exact.ou_density_nd(a, tau, self.points - mean, self.y0 - mean)
        return exact.nonconservative_ou_density(a, tau, self.points - mean, self.y0 - mean)

    def noncons(self, tau):
        m = self.model
        a = exact.symmetric_equivalent(np.asarray(m.params["a"]))
        mean = np.asarray(m.params["mean"])
        return exact.ou_density_nd(a, tau, self.points - mean, self.y0 - mean)

    def farfield(self, tau):
        ctx = extensions.FarFieldContext(self.model, self.y0)
        return extensions.far_field_f(ctx, tau, self.points)

    def sqrt_approx(self, tau):
        theta = None if self.spec.theta is None else float(np.squeeze(self.spec.theta))
        return extensions.sqrt_h_leading(theta, float(self.spec.params["nu"]), self.y0[0], tau, self.nodes[0])

    def solver(self, times):
        fields = solve_fpe(self.model, self.y0, times, self.cfg)
        return [f.values for f in fields]

    # g(tau, y | y0) for reciprocity checks
    def g_method(self, method):
        if method == "approx":
            def g(tau, y, y0):
                ctx = self.approx_ctx(np.atleast_1d(y0))
                if self.model.dim == 1:
                    return approx1d.g_leading(ctx, tau, float(np.squeeze(y)))
                return approxnd.g_leading_nd(ctx, tau, np.asarray(y))
            return g
        if method == "farfield":
            def g(tau, y, y0):
                ctx = extensions.FarFieldContext(self.model, np.atleast_1d(y0))
                y = float(np.squeeze(y)) if self.model.dim == 1 else np.asarray(y)
                return extensions.far_field_g(ctx, tau, y)
            return g
        if method == "exact" and self.model is not None and self.model.name == "dryfric":
            return lambda tau, y, y0: exact.dryfric_g(tau, y, y0)
        return None


_EVALUATORS = {
    "approx": "approx", "approx-b1-h": "approx_b1_h", "exact": "exact",
    "noncons": "noncons", "farfield": "farfield", "sqrt-approx": "sqrt_approx",
}


# --- output -------------------------------------------------------------------------

def _fmt(x):
    return "%.17g" % x


def _key(t):
    """Shortest round-tripping text for a time, used in file names and JSON keys."""
    return repr(float(t))


def csv_name(method, tau):
    return f"{method}_tau{_key(tau)}.csv"


def write_csv(path, run, method, tau, values):
    spec = run.spec
    y0 = "[" + ", ".join(_fmt(v) for v in spec.y0) + "]"
    value_col = "h" if method in H_METHODS else "f"
    dim = len(run.nodes)
    cols = [f"y{i + 1}" for i in range(dim)] + [value_col]
    if dim == 1:
        table = np.column_stack([run.nodes[0], values])
    else:
        mesh = np.meshgrid(*run.nodes, indexing="ij")
        table = np.column_stack([m.ravel() for m in mesh] + [np.ravel(values)])
    if value_col == "f":
        table[:, -1] = np.maximum(table[:, -1], 0.0)  # spectral undershoot
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# model={spec.model}, method={method}, tau={_key(tau)}, y0={y0}\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, table, fmt="%.17g", delimiter=",")


def _sample_pairs(run, rng):
    m = run.model
    spread = 3.0 / np.sqrt(np.max(np.diag(run.theta)))
    lo = np.maximum(m.mean_inf - spread, [n[0] for n in run.nodes])
    hi = np.minimum(m.mean_inf + spread, [n[-1] for n in run.nodes])
    pts = rng.uniform(lo, hi, size=(RECIPROCITY_PAIRS, 2, m.dim))
    if m.dim == 1:
        return [(float(a[0]), float(b[0])) for a, b in pts]
    return [(a, b) for a, b in pts]


def default_threads():
    env = os.environ.get("FPX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError("FPX_THREADS", f"not an integer: {env!r}") from None
    return 1


def run_experiment(spec, threads=None):
    """Run every method at every time; return the run directory."""
    threads = threads or default_threads()
    run = _Run(spec)
    outdir = Path(spec.out) / spec.name
    outdir.mkdir(parents=True, exist_ok=True)

    results = {}   # (method, tau) -> values
    timings = {}

    def timed(method, fun):
        t0 = time.perf_counter()
        value = fun()
        timings[method] = timings.get(method, 0.0) + time.perf_counter() - t0
        return value

    def point_task(method, tau):
        values = timed(method, lambda: getattr(run, _EVALUATORS[method])(tau))
        write_csv(outdir / csv_name(method, tau), run, method, tau, values)
        results[method, tau] = values

    def solver_task():
        fields = timed("solver", lambda: run.solver(spec.times))
        for tau, values in zip(spec.times, fields):
            write_csv(outdir / csv_name("solver", tau), run, "solver", tau, values)
            results["solver", tau] = values

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = []
        for method in spec.methods:
            if method == "solver":
                futures.append(pool.submit(solver_task))
            else:
                futures.extend(pool.submit(point_task, method, tau) for tau in spec.times)
        for fut in futures:
            fut.result()

    summary = _summary(run, results, timings)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return outdir


def reference_method(spec):
    if spec.reference is not None:
        return spec.reference
    for m in ("solver", "exact"):
        if m in spec.methods:
            return m
    return None


def _summary(run, results, timings):
    spec = run.spec
    ref = reference_method(spec)
    summary = {
        "name": spec.name, "model": spec.model, "params": spec.params, "y0": spec.y0,
        "times": spec.times, "methods": spec.methods, "reference": ref,
        "timings_s": timings, "solver": spec.solver,
    }
    density_methods = [m for m in spec.methods if m not in H_METHODS]
    if run.sqrt:
        if "sqrt-approx" in spec.methods:
            nu = float(spec.params["nu"])
            summary["h_max_abs_diff_vs_exact"] = {
                _key(t): float(np.max(np.abs(results["sqrt-approx", t]
                                             - exact.sqrt_process_h(nu, t, run.nodes[0], run.y0[0]))))
                for t in spec.times}
        summary["masses"] = {m: {_key(t): run.field(results[m, t], t, m).integrate() for t in spec.times}
                             for m in density_methods}
        return summary

    summary["grid"] = grid_id(run.field(np.zeros(tuple(len(n) for n in run.nodes)), 0.0, ""))
    if run.model.conservative or spec.theta is not None:
        summary["theta"] = run.theta.tolist()
        if run.model.dim > 1:
            kernel = approxnd.MatrixKernel.from_theta(run.theta)
            summary["rho"] = {_key(t): approxnd.rho(kernel, t) for t in spec.times}
    summary["masses"] = {m: {_key(t): mass(run.field(results[m, t], t, m)) for t in spec.times}
                         for m in density_methods}
    if ref is not None and ref not in H_METHODS:
        errors = {}
        for m in density_methods:
            if m == ref:
                continue
            errors[m] = {_key(t): compare(run.field(results[m, t], t, m),
                                          run.field(results[ref, t], t, ref)).to_dict()
                         for t in spec.times}
        summary["errors_vs_reference"] = errors
    rng = np.random.default_rng(12345)
    pairs = _sample_pairs(run, rng) if "theta" in summary else None
    recip = {}
    for m in spec.methods:
        g = run.g_method(m)
        if g is None or pairs is None:
            continue
        recip[m] = {_key(t): reciprocity_defect(g, run.model, t, pairs) for t in spec.times}
    summary["reciprocity_defect"] = recip
    return summary


def converge(spec):
    """Mode-doubling study at each time of an experiment spec; returns JSON-ready reports."""
    model = build_model(spec)
    cfg = solver_config(spec)
    out = []
    for tau in spec.times:
        rep = mode_doubling_study(model, spec.y0, tau, cfg)
        out.append({"tau": tau, "modes": [list(m) for m in rep.modes],
                    "differences": rep.differences, "converged": rep.converged})
    return out
