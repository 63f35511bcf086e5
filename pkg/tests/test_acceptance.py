"""Acceptance suite: one test group per numbered criterion.

Each criterion prints a PASS/FAIL line at the end of the pytest run (see
conftest.py). A criterion is PASS only if every one of its checks passes;
checks that are known not to hold are marked as strict xfails and make the
criterion FAIL.
"""

import json
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from fpx import exact
from fpx.approx1d import Approx1DContext, f_leading, g_leading
from fpx.approxnd import ApproxNDContext, f_leading_nd, g_leading_nd
from fpx.experiment import csv_name, preset_spec, run_experiment
from fpx.extensions import FarFieldContext, far_field_g, sqrt_h_leading
from fpx.fisher import estimate_theta
from fpx import quadrature
from fpx.metrics import reciprocity_defect
from fpx.models import make_model
from fpx.solver import SolverConfig, mode_doubling_study, solve_fpe

TITLES = {
    1: "OU exactness (1D)",
    2: "OU exactness (2D)",
    3: "closed-form theta",
    4: "bivariate double-well theta and K",
    5: "Lyapunov worked example",
    6: "dry-friction far-field identity",
    7: "spectral solver validation",
    8: "figure-level agreement",
    9: "reciprocity",
    10: "square-root process",
    11: "determinism",
}
RESULTS = {}


@contextmanager
def criterion(number, label):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        RESULTS.setdefault(number, []).append((label, False, f"{type(exc).__name__}: {exc}".splitlines()[0]))
        raise
    RESULTS.setdefault(number, []).append((label, True, f"{time.perf_counter() - t0:.2f}s"))


def summary_lines():
    lines = []
    for n, title in TITLES.items():
        checks = RESULTS.get(n)
        if not checks:
            lines.append(f"criterion {n:2d} NOT RUN  {title}")
            continue
        ok = all(c[1] for c in checks)
        failed = [f"{c[0]} ({c[2]})" for c in checks if not c[1]]
        detail = f"{len(checks)} checks" if ok else "failed: " + "; ".join(failed)
        lines.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    return lines


# --- 1 -----------------------------------------------------------------------------

def test_c1_ou_exact_1d():
    with criterion(1, "f_leading vs exact OU"):
        t0 = time.perf_counter()
        ctx = Approx1DContext.from_model(make_model("ou", theta=1.0), 2.0)
        y = np.linspace(-8, 8, 321)
        worst = 0.0
        for tau in (0.01, 0.1, 1.0, 5.0):
            a = f_leading(ctx, tau, y)
            e = exact.ou_density_1d(1.0, 0.0, tau, y, 2.0)
            pos = e > 0
            assert np.array_equal(a > 0, pos)
            worst = max(worst, float(np.max(np.abs(a[pos] / e[pos] - 1))))
        assert worst < 1e-12, worst
        assert time.perf_counter() - t0 < 1.0


# --- 2 -----------------------------------------------------------------------------

@pytest.mark.parametrize("a", [np.diag([1.0, 2.0]), np.array([[1.5, -0.6], [-0.6, 0.8]])],
                         ids=["diagonal", "non-diagonal"])
def test_c2_ou_exact_2d(a):
    with criterion(2, f"f_leading_nd vs exact OU, a={a.tolist()}"):
        t0 = time.perf_counter()
        y0 = np.array([1.0, -1.0])
        ctx = ApproxNDContext.from_model(make_model("ou", a=a), y0)
        g = np.linspace(-4, 4, 101)
        y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
        worst = 0.0
        for tau in (0.01, 0.1, 1.0, 5.0):
            f = f_leading_nd(ctx, tau, y)
            e = exact.ou_density_nd(a, tau, y, y0)
            pos = e > 0
            assert np.array_equal(f > 0, pos)
            worst = max(worst, float(np.max(np.abs(f[pos] / e[pos] - 1))))
        assert worst < 1e-12, worst
        assert time.perf_counter() - t0 < 5.0


# --- 3 -----------------------------------------------------------------------------

@pytest.mark.parametrize("mid, params, value", [
    ("sech", dict(gamma_hat=1.0, delta_hat=2.0), 4 / 3),
    ("dryfric", {}, 1.0),
    ("student1d", dict(gamma_hat=0.5), 0.5),
], ids=["sech", "dryfric", "student"])
def test_c3_closed_form_theta(mid, params, value):
    with criterion(3, f"{mid} theta"):
        model = make_model(mid, **params)
        assert float(model.closed_form_theta) == pytest.approx(value, rel=1e-15)
        assert estimate_theta(model).theta == pytest.approx(value, abs=1e-6)


# --- 4 -----------------------------------------------------------------------------

def test_c4_double_well_2d():
    with criterion(4, "Fisher theta and K for cases (a) and (b)"):
        t0 = time.perf_counter()
        a = make_model("dwell2d", case="a")
        th = estimate_theta(a).matrix()
        np.testing.assert_allclose([th[0, 0], th[1, 1]], [1.2633, 1.2774], atol=1e-3)
        assert abs(th[0, 1]) < 1e-3
        assert a.norm_const == pytest.approx(2.5352, abs=1e-3)
        b = make_model("dwell2d", case="b")
        th = estimate_theta(b).matrix()
        assert th[0, 1] == pytest.approx(-0.1990, abs=1e-3)
        assert b.norm_const == pytest.approx(4.0767, abs=1e-3)
        assert time.perf_counter() - t0 < 30.0


# --- 5 -----------------------------------------------------------------------------

def test_c5_lyapunov_example():
    with criterion(5, "sigma_inf, residual, equivalence class"):
        t0 = time.perf_counter()
        c = 1.0
        a1 = np.array([[1.0, c], [0.0, 1.0]])
        s = exact.lyapunov_sigma_inf(a1)
        np.testing.assert_allclose(s, [[1.5, -0.5], [-0.5, 1.0]], atol=1e-15)
        assert np.abs(a1 @ s + s @ a1.T - 2 * np.eye(2)).max() < 1e-10
        a2 = np.array([[1.0, c / 2], [c / 2, 1 + c * c / 2]]) / (1 + c * c / 4)
        ok, report = exact.equivalence_class_check(a1, a2)
        assert ok
        assert np.trace(a1) == pytest.approx(2.0) and np.trace(a2) == pytest.approx(2.0)
        assert report["trace_1"] == pytest.approx(report["trace_2"])
        assert time.perf_counter() - t0 < 1.0


# --- 6 -----------------------------------------------------------------------------

def test_c6_dry_friction_identity():
    with criterion(6, "far_field_g equals the first term of the exact g"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        y = rng.uniform(-10, 10, 1000)
        y0 = rng.uniform(-10, 10, 1000)
        tau = rng.uniform(0.01, 3.0, 1000)
        # the identity needs |y| + |y0| > tau; y = 0 exactly is avoided (sgn(0) = 0)
        keep = (np.abs(y) + np.abs(y0) > tau) & (y != 0)
        model = make_model("dryfric")
        worst = 0.0
        for yi, y0i, ti in zip(y[keep], y0[keep], tau[keep]):
            ff = far_field_g(FarFieldContext(model, y0i), ti, yi)
            first, _ = exact.dryfric_g_terms(ti, yi, y0i)
            if first > 0:
                worst = max(worst, abs(ff / first - 1))
        assert keep.sum() > 900
        assert worst < 1e-12, worst
        assert time.perf_counter() - t0 < 1.0


# --- 7 -----------------------------------------------------------------------------

def _ou_ic(y, tau, y0, eps):
    q = np.exp(-2 * tau)
    var = 1 - q + eps * eps * q
    return np.exp(-(y - y0 * np.exp(-tau)) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)


def test_c7_solver_validation():
    with criterion(7, "solver vs exact OU, mode doubling, RK4 order"):
        t0 = time.perf_counter()
        ou = make_model("ou", theta=1.0)
        cfg = SolverConfig(half_width=10.0, modes=256, dt=1e-3, ic_width=0.05)
        for f in solve_fpe(ou, 2.0, [0.1, 1.0, 5.0], cfg):
            err = np.sum(np.abs(f.values - _ou_ic(f.grid[0], f.tau, 2.0, 0.05))) * f.spacing[0]
            assert err < 1e-6, (f.tau, err)
        rep = mode_doubling_study(ou, 2.0, 1.0, cfg)
        assert rep.converged and rep.differences[0] < 1e-8
        fields = [solve_fpe(ou, 2.0, [1.0], SolverConfig(dt=dt))[0].values
                  for dt in (1e-2, 5e-3, 2.5e-3)]
        d1 = np.sum(np.abs(fields[0] - fields[1]))
        d2 = np.sum(np.abs(fields[1] - fields[2]))
        assert 14 <= d1 / d2 <= 18, d1 / d2
        assert time.perf_counter() - t0 < 60.0


# --- 8 -----------------------------------------------------------------------------

# L1(approx, solver) per plotted time, frozen from the first validated run
FROZEN_L1 = {
    "fig4": {0.1: 0.01670571, 0.25: 0.04686065, 0.5: 0.076378, 1.0: 0.07787541,
             2.0: 0.03926647, 5.0: 0.00330307, 15.0: 1.5e-07},
    "fig6": {0.1: 0.0190355, 0.25: 0.03887987, 0.5: 0.0616909, 1.0: 0.0787457,
             2.0: 0.07097161, 5.0: 0.02717709, 40.0: 0.00216307},
    "fig7": {0.1: 0.09611264, 0.25: 0.16822989, 0.5: 0.19870869, 1.0: 0.14737664,
             2.0: 0.04567549, 5.0: 0.00062555, 14.0: 0.0},
    "fig8": {0.1: 0.07375478, 0.25: 0.14888271, 0.5: 0.23159372, 1.0: 0.34156059,
             2.0: 0.4585105, 5.0: 0.25244077, 14.0: 0.01700499, 30.0: 0.0001384},
}
PRESETS_1D = ("fig4", "fig6", "fig7", "fig8")


@pytest.fixture(scope="module")
def figure_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("figures")
    runs, start = {}, time.perf_counter()
    for name in PRESETS_1D:
        spec = preset_spec(name, out=str(out))
        path = run_experiment(spec)
        summary = json.loads((path / "summary.json").read_text())
        theta = float(np.squeeze(summary["theta"]))
        l1 = {float(t): r["l1"] for t, r in summary["errors_vs_reference"]["approx"].items()}
        runs[name] = dict(theta=theta, l1=l1, path=path)
    runs["_elapsed"] = time.perf_counter() - start
    return runs


def _late(run):
    return max(t for t in run["l1"] if run["theta"] * t >= 20 - 1e-9)


def test_c8_runtime_and_regression(figure_runs):
    with criterion(8, "runtime and frozen regression values"):
        assert figure_runs["_elapsed"] < 300, figure_runs["_elapsed"]
        for name in PRESETS_1D:
            got = figure_runs[name]["l1"]
            assert set(got) == set(FROZEN_L1[name])
            for t, ref in FROZEN_L1[name].items():
                assert np.isfinite(got[t])
                assert got[t] == pytest.approx(ref, rel=1e-3, abs=1e-7), (name, t)


@pytest.mark.parametrize("name", ["fig4", "fig6"])
def test_c8_bounded_at_every_time(figure_runs, name):
    with criterion(8, f"{name} L1 < 0.15"):
        assert max(figure_runs[name]["l1"].values()) < 0.15


@pytest.mark.xfail(strict=True, reason="approx vs solver peaks at L1 0.199 (tau 0.5); the "
                   "solver is independently verified, so the bound does not hold for this model")
def test_c8_fig7_bounded_at_every_time(figure_runs):
    with criterion(8, "fig7 L1 < 0.15"):
        assert max(figure_runs["fig7"]["l1"].values()) < 0.15


@pytest.mark.parametrize("name", ["fig4", "fig7"])
def test_c8_converges_by_theta_tau_20(figure_runs, name):
    with criterion(8, f"{name} L1 < 1e-3 at theta tau = 20"):
        run = figure_runs[name]
        assert run["l1"][_late(run)] < 1e-3


@pytest.mark.xfail(strict=True, reason="Student-t relaxes algebraically: L1(solver, f_inf) "
                   "is 2.2e-3 at theta tau = 20 independent of the domain size")
def test_c8_fig6_converges_by_theta_tau_20(figure_runs):
    with criterion(8, "fig6 L1 < 1e-3 at theta tau = 20"):
        run = figure_runs["fig6"]
        assert run["l1"][_late(run)] < 1e-3


def test_c8_fig8_eventually_small(figure_runs):
    with criterion(8, "fig8 L1 tends to 0"):
        l1 = figure_runs["fig8"]["l1"]
        ts = sorted(l1)
        assert all(np.isfinite(v) for v in l1.values())
        peak = int(np.argmax([l1[t] for t in ts]))
        tail = [l1[t] for t in ts[peak:]]
        assert all(b < a for a, b in zip(tail, tail[1:]))
        assert tail[-1] < 1e-3


# --- 9 -----------------------------------------------------------------------------

CATALOG = [
    ("ou", dict(theta=1.0)), ("sech", dict(gamma_hat=1.0, delta_hat=2.0)), ("dryfric", {}),
    ("student1d", dict(gamma_hat=0.5)), ("dwell1d", {}),
    ("ou", dict(a=[[1.5, -0.6], [-0.6, 0.8]])), ("student2d", dict(a1=1.0, a2=3.0, nu=5.0)),
    ("dwell2d", dict(case="a")), ("dwell2d", dict(case="b")),
]


def test_c9_reciprocity():
    with criterion(9, "approx1d/approxnd, 100 pairs per model"):
        models = [make_model(mid, **p) for mid, p in CATALOG]  # construction is not timed
        t0 = time.perf_counter()
        rng = np.random.default_rng(99)
        for model in models:
            m = model.dim
            if m == 1:
                theta = Approx1DContext.from_model(model, 0.0).theta

                def g(tau, y, y0, model=model, theta=theta):
                    return g_leading(Approx1DContext.from_model(model, y0, theta), tau, y)
            else:
                theta = ApproxNDContext.from_model(model, np.zeros(m)).kernel.theta

                def g(tau, y, y0, model=model, theta=theta):
                    return g_leading_nd(ApproxNDContext.from_model(model, y0, theta), tau, y)
            pts = rng.uniform(-4, 4, size=(100, 2, m))
            pairs = [(p[0], p[1]) if m > 1 else (p[0, 0], p[1, 0]) for p in pts]
            tau = float(rng.uniform(0.05, 5))
            assert reciprocity_defect(g, model, tau, pairs) < 1e-10, model.name
        assert time.perf_counter() - t0 < 5.0


# --- 10 ----------------------------------------------------------------------------

def test_c10_square_root_process():
    with criterion(10, "normalisation and short-time h"):
        t0 = time.perf_counter()
        nu = 1.5
        edges = [1e-12, 0.5, 1.0, 2.0, 4.0, 60.0]
        for tau in (0.1, 1.0):
            total = sum(quadrature.integrate(
                lambda y: exact.sqrt_process_density(nu, tau, y, 1.0), a, b,
                tol=1e-11, max_panels=2**16)[0] for a, b in zip(edges, edges[1:]))
            assert abs(total - 1) < 1e-7
        tau, y, y0 = 1e-3, 1.3, 1.0
        approx = sqrt_h_leading(0.5, nu, y0, tau, y)
        ref = exact.sqrt_process_h(nu, tau, y, y0)
        assert abs(approx) > 100 and abs(ref) > 100
        assert abs(approx - ref) < 1e-2, (approx, ref)
        assert time.perf_counter() - t0 < 5.0


# --- 11 ----------------------------------------------------------------------------

def test_c11_determinism(figure_runs, tmp_path):
    with criterion(11, "fig4 twice gives identical CSVs"):
        first = figure_runs["fig4"]["path"]
        second = run_experiment(preset_spec("fig4", out=str(tmp_path)))
        spec = preset_spec("fig4")
        names = [csv_name(m, t) for m in spec.methods for t in spec.times]
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-rxX"]))
