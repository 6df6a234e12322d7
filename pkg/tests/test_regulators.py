import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from nussnash.regulators import (
    ComponentLinear,
    CustomPhi,
    Linear,
    NussbaumFn,
    Zero,
    backstepping_control,
    first_order_control,
    first_order_control_no_uncertainty,
    make_phi,
    nussbaum,
    nussbaum_code,
    nussbaum_integral,
    nussbaum_prime,
    second_order_control,
)

HALF_PI_SQ = (np.pi / 2) ** 2
val = st.floats(-3, 3, allow_nan=False)
gain = st.one_of(st.floats(-4, -0.25), st.floats(0.25, 4))


# --- Nussbaum function --------------------------------------------------------

def test_nussbaum_values():
    assert nussbaum(0.0) == 0.0 and nussbaum_prime(0.0) == 0.0
    assert nussbaum(np.pi / 2) == pytest.approx(2.46740110, abs=1e-8)
    assert nussbaum(np.pi / 2, 1) == pytest.approx(0.0, abs=1e-12)
    assert nussbaum_prime(np.pi / 2) == pytest.approx(np.pi)


def test_nussbaum_integral_closed_form():
    assert nussbaum_integral(np.pi) == pytest.approx(np.pi ** 2 - 4, rel=1e-12)
    assert nussbaum_integral(2 * np.pi) == pytest.approx(-4 * np.pi ** 2, rel=1e-12)
    for kind, code in (("sin", 0), ("cos", 1)):
        for q in (0.3, 2.0, 7.5, 31.0):
            num, _ = quad(lambda s: nussbaum(s, code), 0, q, limit=200, epsabs=0, epsrel=1e-12)
            assert nussbaum_integral(q, kind) == pytest.approx(num, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("m", range(1, 11))
def test_nussbaum_running_average(m):
    odd, even = (2 * m + 1) * np.pi, 2 * m * np.pi
    assert nussbaum_integral(odd) / odd == pytest.approx((odd ** 2 - 4) / odd, rel=1e-12)
    assert nussbaum_integral(even) / even == pytest.approx(-even, rel=1e-12)
    for q, target in ((odd, (odd ** 2 - 4) / odd), (even, -even)):
        num, _ = quad(lambda s: s * s * np.sin(s), 0, q, limit=400, epsabs=0, epsrel=1e-12)
        assert num / q == pytest.approx(target, rel=1e-6)


def test_nussbaum_derivative_finite_differences():
    ks = np.linspace(-20, 20, 200)
    for code in (0, 1):
        fd = (nussbaum(ks + 1e-6, code) - nussbaum(ks - 1e-6, code)) / 2e-6
        np.testing.assert_allclose(nussbaum_prime(ks, code), fd, rtol=1e-6, atol=1e-6)


def test_nussbaum_kinds():
    assert nussbaum_code("sin") == 0 and nussbaum_code("cos") == 1 and nussbaum_code(1) == 1
    with pytest.raises(ValueError):
        nussbaum_code("tanh")
    with pytest.raises(ValueError):
        nussbaum_code(7)
    f = NussbaumFn("cos")
    assert f(2.0) == pytest.approx(4 * np.cos(2.0))
    assert f.derivative(2.0) == pytest.approx(4 * np.cos(2.0) - 4 * np.sin(2.0))
    assert f.integral(0.0) == pytest.approx(0.0)


# --- first-order families -------------------------------------------------------

def test_first_order_examples():
    u, dk, dth = first_order_control(1.0, 0.0, 0.0, np.pi / 2, 0.5, 2.0)
    assert (u, dk, dth) == pytest.approx((HALF_PI_SQ * 2, 2.0, 2.0))
    u, dk, dth = first_order_control(0.7, 0.7, 0.0, 1.3, 0.4, 2.0)
    assert dk == 0 and dth == 0 and u == pytest.approx(nussbaum(1.3) * 0.8)
    assert first_order_control(5.0, -1.0, 0.0, 0.0, 3.0, 2.0)[0] == 0.0


def test_no_uncertainty_examples():
    assert first_order_control_no_uncertainty(0.3, 0.3, 2.0) == (0.0, 0.0)
    u, dk = first_order_control_no_uncertainty(2.0, 0.0, np.pi / 2)
    assert u == pytest.approx(HALF_PI_SQ * 2) and dk == pytest.approx(4.0)


@given(val, val, val)
def test_no_uncertainty_rate_nonnegative(x, y, k):
    assert first_order_control_no_uncertainty(x, y, k)[1] >= 0


@settings(max_examples=200)
@given(x=val, y=val, ydot=val, k=st.floats(-8, 8), th_hat=val, c=val, b=gain, theta=val)
def test_first_order_energy_identity(x, y, ydot, k, th_hat, c, b, theta):
    # V = e^2/2 + (th_hat - theta)^2/2 along dx = b u + phi theta
    phi = c * x
    u, dk, dth = first_order_control(x, y, ydot, k, th_hat, phi)
    e = x - y
    vdot = e * (b * u + phi * theta - ydot) + (th_hat - theta) * dth
    expected = (b * nussbaum(k) + 1) * dk - e * e - e * ydot
    assert vdot == pytest.approx(expected, rel=1e-9, abs=1e-9)


# --- second-order family ------------------------------------------------------------

def test_second_order_examples():
    u, dk, dth = second_order_control(1.0, 0.0, 1.0, 0.0, 0.0, np.pi / 2, 0.0, 0.0)
    assert u == pytest.approx(HALF_PI_SQ * 2) and dk == pytest.approx(4.0) and dth == 0.0
    assert second_order_control(0.4, 0.4, 0.0, 0.2, 0.2, 0.0, 1.7, 0.0) == (0.0, 0.0, 0.0)
    # xi = 0 but w != 0
    u, dk, dth = second_order_control(1.0, 0.0, -1.0, 0.0, 2.0, 1.0, 1.0, 1.0)
    assert dk == 0.0 and dth == 0.0 and u != 0.0


@settings(max_examples=200)
@given(x=val, y=val, v=val, ydot=val, k=st.floats(-8, 8), th_hat=val, c=val, b=gain, theta=val)
def test_second_order_energy_identity(x, y, v, ydot, k, th_hat, c, b, theta):
    # V = xi^2/2 + (th_hat - theta)^2/2 along dx = v, dv = b u + phi theta
    phi = c * x
    u, dk, dth = second_order_control(x, y, v, ydot, v, k, th_hat, phi)
    xi = x - y + v
    vdot = xi * (v - ydot + b * u + phi * theta) + (th_hat - theta) * dth
    expected = (b * nussbaum(k) + 1) * dk - xi * xi
    assert vdot == pytest.approx(expected, rel=1e-9, abs=1e-9)


# --- backstepping --------------------------------------------------------------------

def test_backstepping_zero_state():
    out = backstepping_control(0.0, 0.0, 0.0, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    u, alpha, beta = out[:3]
    assert u == 0.0 and alpha == 0.0 and beta == 0.7


def test_backstepping_hand_example():
    # e = 1, phi1 = 1, th_hat1 = 1, k1 = pi/2, v = 0, ydot = 0, dphi1 = 1
    out = backstepping_control(1.0, 0.0, 0.0, 0.0, np.pi / 2, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0)
    u, alpha, beta, dk1, dth1, dk2 = out[:6]
    assert alpha == pytest.approx(HALF_PI_SQ * 2)
    assert dk1 == pytest.approx(2.0) and dth1 == pytest.approx(1.0)
    # with the second-stage estimates at zero, w2 = beta + psi2
    w2 = dk2 / beta
    assert w2 - beta == pytest.approx(-4 * np.pi - np.pi ** 2 / 4, abs=1e-9)


def test_backstepping_beta_zero_freezes_second_stage():
    k1, th1, e = 0.9, 0.3, 0.5
    alpha = nussbaum(k1) * (e + 0.4 * th1)
    out = backstepping_control(e, 0.0, 0.2, alpha, k1, 2.0, th1, 1.0, 1.0, 1.0, 0.4, 1.0, 0.3)
    assert out[2] == pytest.approx(0.0, abs=1e-15)
    assert all(abs(d) < 1e-14 for d in out[5:])


@settings(max_examples=200, deadline=None)
@given(x=val, y=val, ydot=val, v=val, k1=st.floats(-6, 6), k2=st.floats(-6, 6), th1=val, tb1=val, tb2=val,
       bb1=val, c=st.floats(-2, 2), phi2=val, b1=gain, b2=gain, theta1=val, theta2=val)
def test_backstepping_second_stage_energy_identity(x, y, ydot, v, k1, k2, th1, tb1, tb2, bb1, c, phi2,
                                                   b1, b2, theta1, theta2):
    """dV1/dt = (b2 N0(k2) + 1) dk2 - beta^2 holds exactly when the
    compensation terms cancel d(alpha)/dt.  alpha's rate along the true
    dynamics comes from a complex-step derivative, exact to round-off."""
    out = backstepping_control(x, y, ydot, v, k1, k2, th1, tb1, tb2, bb1, c * x, c, phi2)
    u, alpha, beta, dk1, dth1, dk2, dtb1, dtb2, dbb1 = out

    def alpha_at(eps):
        xs = x + eps * (b1 * v + c * x * theta1)
        ys = y + eps * ydot
        return backstepping_control(xs, ys, ydot, v, k1 + eps * dk1, k2, th1 + eps * dth1,
                                    tb1, tb2, bb1, c * xs, c, phi2)[1]

    h = 1e-30
    alpha_dot = alpha_at(1j * h).imag / h
    beta_dot = b2 * u + phi2 * theta2 - alpha_dot
    vdot = beta * beta_dot + (tb2 - theta2) * dtb2 + (tb1 - theta1) * dtb1 + (bb1 - b1) * dbb1
    expected = (b2 * nussbaum(k2) + 1) * dk2 - beta * beta
    scale = 1 + abs(beta) * (abs(b2 * u) + abs(alpha_dot)) + abs(expected)
    assert abs(vdot - expected) < 1e-9 * scale


@given(x=val, y=val, ydot=val, v=val, k=st.floats(-6, 6), th=val, phi=val)
def test_zero_error_freezes_adaptation(x, y, ydot, v, k, th, phi):
    assert first_order_control(x, x, ydot, k, th, phi)[1:] == (0.0, 0.0)
    assert first_order_control_no_uncertainty(x, x, k)[1] == 0.0
    # second order: regulation error is xi = x - y + v, zero at y = x + v
    assert second_order_control(x, x + v, v, ydot, v, k, th, phi)[1:] == pytest.approx((0.0, 0.0), abs=1e-12)
    out = backstepping_control(x, x, ydot, v, k, k, th, th, th, th, phi, 1.0, phi)
    assert out[3] == 0.0 and out[4] == 0.0


def test_laws_accept_arrays():
    x = np.array([1.0, 2.0])
    u, dk, dth = first_order_control(x, np.zeros(2), np.zeros(2), np.full(2, np.pi / 2), np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(u, HALF_PI_SQ * x)
    np.testing.assert_allclose(dk, x * x)


# --- regressors ---------------------------------------------------------------------

def test_phi_families():
    x, v = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    np.testing.assert_array_equal(Zero()(x), [0, 0])
    np.testing.assert_array_equal(Linear(7.0)(x), [7, -14])
    np.testing.assert_array_equal(Linear(7.0).dx_diag(x), [7, 7])
    np.testing.assert_array_equal(ComponentLinear(7.0)(x, v), [-14, 21])
    np.testing.assert_array_equal(ComponentLinear(7.0).dx_diag(x), [0, 0])
    np.testing.assert_array_equal(ComponentLinear(7.0, index=0).dx_diag(x), [7, 0])
    with pytest.raises(ValueError):
        ComponentLinear(1.0)(np.zeros(3))


def test_phi_encodings_reproduce_values():
    rng = np.random.default_rng(0)
    for phi in (Zero(), Linear(2.5), ComponentLinear(7.0), ComponentLinear(-1.0, index=0)):
        coef, src, from_v = phi.encode(2)
        for _ in range(5):
            x, v = rng.normal(size=2), rng.normal(size=2)
            enc = coef * np.where(from_v, v[src], x[src])
            np.testing.assert_allclose(enc, phi(x, v))
    assert CustomPhi(lambda x, v: x ** 2).encode(2) is None


def test_make_phi():
    assert isinstance(make_phi(None), Zero)
    assert make_phi({"name": "linear", "c": 3}) == Linear(3)
    assert make_phi("zero") == Zero()
    with pytest.raises(ValueError):
        make_phi({"name": "cubic"})
    custom = CustomPhi(lambda x, v: np.sin(x))
    assert make_phi(custom) is custom
    with pytest.raises(ValueError):
        custom.dx_diag(np.zeros(2))
