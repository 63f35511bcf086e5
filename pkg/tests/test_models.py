import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpx.errors import ModelError
from fpx.models import make_model, student_nu

SMOOTH_1D = [
    ("ou", dict(theta=1.3, y_inf=0.4)),
    ("sech", dict(gamma_hat=1.0, delta_hat=2.0)),
    ("student1d", dict(gamma_hat=0.5)),
    ("dwell1d", {}),
]
ALL_2D = [
    ("ou", dict(a=[[2.0, 0.5], [0.5, 1.0]])),
    ("student2d", dict(a1=1.0, a2=3.0, nu=5.0)),
    ("dwell2d", dict(case="a")),
    ("dwell2d", dict(case="b")),
]


def test_ou_basics():
    m = make_model("ou", theta=1.0)
    assert m.drift(2.0) == -2.0
    y = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(m.density(y), np.exp(-y * y / 2) / np.sqrt(2 * np.pi), rtol=1e-14)
    m2 = make_model("ou", theta=2.0, y_inf=1.0)
    np.testing.assert_array_equal(m2.jacobian(np.linspace(-5, 5, 11)), -2.0)
    with pytest.raises(ModelError):
        make_model("ou", theta=-1.0)


def test_sech_power():
    m = make_model("sech", gamma_hat=1.0, delta_hat=2.0)
    assert m.closed_form_theta == pytest.approx(4 / 3)
    assert m.drift(0.0) == 0.0
    with pytest.raises(ModelError):
        make_model("sech", gamma_hat=0.0, delta_hat=1.0)


def test_sech_tends_to_ou():
    y = np.linspace(-3, 3, 61)
    devs = []
    for g in (0.1, 0.05, 0.025):
        m = make_model("sech", gamma_hat=g, delta_hat=2.0)
        devs.append(np.max(np.abs(m.drift(y) + 2.0 * y)) / g**2)
    # |A + delta y| <= C gamma^2 with C stable as gamma shrinks
    assert max(devs) < 1.05 * min(devs)
    assert max(devs) < 20


def test_dry_friction():
    m = make_model("dryfric")
    assert m.closed_form_theta == 1.0
    assert m.density(0.0) == pytest.approx(0.5)
    assert m.drift(-3.0) == 1.0 and m.drift(3.0) == -1.0
    assert m.jacobian(2.0) == 0.0
    assert m.discontinuities == (0.0,)


def test_student_1d():
    assert student_nu(0.5) == pytest.approx(5.0)
    m = make_model("student1d", gamma_hat=0.5)
    assert m.closed_form_theta == pytest.approx(0.5)
    assert m.drift(0.0) == 0.0
    assert abs(m.drift(100.0) + 1 / (0.25 * 100)) < 1e-3
    with pytest.raises(ModelError):
        make_model("student1d", gamma_hat=1.0)


def test_double_well_1d_shape():
    m = make_model("dwell1d")
    assert m.drift(0.0) == pytest.approx(0.0, abs=1e-15)
    y = np.linspace(-5, 5, 2001)
    f = m.density(y)
    peaks = y[1:-1][(f[1:-1] > f[:-2]) & (f[1:-1] > f[2:])]
    assert len(peaks) == 2
    np.testing.assert_allclose(np.sort(peaks), [-peaks.max(), peaks.max()], atol=1e-12)
    # the -y term pulls the maxima inside the pole abscissae +/-2
    assert 1.0 < peaks.max() < 2.0
    with pytest.raises(ModelError):
        make_model("dwell1d", beta=(1.0, -1.0))


def test_student_2d():
    m = make_model("student2d", a1=1.0, a2=3.0, nu=5.0)
    np.testing.assert_array_equal(m.drift(np.zeros(2)), [0.0, 0.0])
    with pytest.raises(ModelError):
        make_model("student2d", a1=1.0, a2=1.0, nu=2.0)


def test_double_well_2d_odd_symmetry():
    m = make_model("dwell2d", case="a")
    rng = np.random.default_rng(0)
    p = rng.uniform(-4, 4, size=(50, 2))
    np.testing.assert_allclose(m.drift(p), -m.drift(-p), atol=1e-13)
    with pytest.raises(ModelError):
        make_model("dwell2d", case="a", a=[[1.0, 2.0], [2.0, 1.0]])


def test_unknown_model_and_bad_params():
    with pytest.raises(ModelError):
        make_model("nope")
    with pytest.raises(ModelError):
        make_model("sech", gamma=1.0)


@pytest.mark.parametrize("mid, params", SMOOTH_1D)
def test_gradient_of_log_density_is_drift_1d(mid, params):
    m = make_model(mid, **params)
    y = np.linspace(-3.1, 3.3, 17)
    errs = []
    steps = [1e-2, 5e-3, 2.5e-3]
    for h in steps:
        fd = (m.log_f_inf(y + h) - m.log_f_inf(y - h)) / (2 * h)
        errs.append(np.max(np.abs(fd - m.drift(y))))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    if errs[0] > 1e-10:
        assert 1.9 < slope < 2.1
    # Jacobian against differences of the drift
    h = 1e-5
    np.testing.assert_allclose((m.drift(y + h) - m.drift(y - h)) / (2 * h), m.jacobian(y),
                               atol=1e-7)


@pytest.mark.parametrize("mid, params", ALL_2D)
def test_gradient_and_symmetric_jacobian_2d(mid, params):
    m = make_model(mid, **params)
    p = np.array([[0.3, -0.7], [1.2, 0.4], [-1.5, 1.1]])
    h = 1e-5
    J = m.jacobian(p)
    np.testing.assert_array_equal(J, np.swapaxes(J, -1, -2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (m.log_f_inf(p + e) - m.log_f_inf(p - e)) / (2 * h)
        np.testing.assert_allclose(fd, m.drift(p)[:, i], atol=1e-8)
        np.testing.assert_allclose((m.drift(p + e) - m.drift(p - e)) / (2 * h), J[..., :, i],
                                   atol=1e-7)


@pytest.mark.parametrize("mid, params", SMOOTH_1D + [("dryfric", {})] + ALL_2D)
def test_invariant_density_normalised(mid, params):
    m = make_model(mid, **params)
    assert abs(m.normalisation_error()) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-4, 4))
def test_sech_drift_odd_and_bounded(g, d, y):
    m = make_model("sech", gamma_hat=g, delta_hat=d)
    assert m.drift(y) == pytest.approx(-m.drift(-y), abs=1e-15)
    assert abs(m.drift(y)) <= d / g + 1e-12
