import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpx import quadrature
from fpx.errors import QuadratureError


def test_gauss_legendre_integrates_polynomials_exactly():
    x, w = quadrature.gauss_legendre(16)
    for k in range(0, 31, 2):
        assert np.sum(w * x**k) == pytest.approx(2 / (k + 1), rel=1e-13)


def test_integrate_gaussian():
    val, err = quadrature.integrate(lambda x: np.exp(-x * x), -10, 10, tol=1e-13)
    assert val == pytest.approx(np.sqrt(np.pi), rel=1e-13)
    assert err < 1e-10


def test_integrate_keeps_trailing_axes():
    val, _ = quadrature.integrate(lambda x: np.stack([x, x * x], axis=-1), 0.0, 1.0)
    np.testing.assert_allclose(val, [0.5, 1 / 3], rtol=1e-13)


def test_breakpoint_handles_kink():
    val, _ = quadrature.integrate(np.abs, -1.0, 2.0, breakpoints=(0.0,), tol=1e-13)
    assert val == pytest.approx(2.5, rel=1e-13)


def test_nonconvergence_reports_iterates():
    with pytest.raises(QuadratureError) as info:
        quadrature.integrate(lambda x: np.sin(1e4 * x**2) / np.sqrt(np.abs(x) + 1e-12),
                             -1, 1, tol=1e-15, max_panels=16)
    assert len(info.value.iterates) == 2


def test_power_tail_matches_analytic_tail():
    # int_{5}^inf y^-3 dy = 1/(2*25)
    assert quadrature.power_tail(5.0**-3, 5.0, 3) == pytest.approx(1 / 50)
    with pytest.raises(ValueError):
        quadrature.power_tail(1.0, 1.0, 1.0)


def test_integrate_line_with_tails():
    fun = lambda y: 1 / (1 + y * y) ** 2  # noqa: E731
    val, _ = quadrature.integrate_line(fun, 0.0, 200.0, tail_power=4, tol=1e-12)
    assert val == pytest.approx(np.pi / 2, rel=1e-9)


def test_integrate_2d_product():
    val, _ = quadrature.integrate_2d(
        lambda p: np.exp(-p[..., 0] ** 2 - 2 * p[..., 1] ** 2), ((-9, 9), (-9, 9)), tol=1e-12)
    assert val == pytest.approx(np.pi / np.sqrt(2), rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 4))
def test_segments_match_antiderivative(a, width):
    b = a + width
    breaks = np.array([[a, (a + b) / 2, b]])
    val = quadrature.integrate_segments(lambda x: np.cos(x), breaks)
    assert val[0] == pytest.approx(np.sin(b) - np.sin(a), abs=1e-12)
