import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvloc.coupling import CouplingEstimate, ResonatorParams, coupling_constant, detection_time, estimate
from nvloc.errors import ValidationError
from nvloc.spin_model import SpinConstants


def test_quoted_gradient_gives_about_1_3_khz():
    g = coupling_constant(1.9)
    # gamma_e * alpha * delta_i / sqrt(2), written out by hand
    assert g.g_over_2pi == pytest.approx(28e9 * 1.9 * 35e-9 / math.sqrt(2), rel=1e-3)
    assert g.g_over_2pi == pytest.approx(1.32e3, abs=10)


def test_zero_gradient_gives_zero_coupling_and_infinite_time():
    assert coupling_constant(0.0).g_over_2pi == 0
    assert estimate(0.0).detection_time == math.inf
    with pytest.raises(ZeroDivisionError):
        detection_time(CouplingEstimate(0.0))


@given(st.floats(0.01, 10), st.floats(0.1, 10))
def test_coupling_is_linear_in_gradient(alpha, k):
    assert coupling_constant(k * alpha).g_over_2pi == pytest.approx(k * coupling_constant(alpha).g_over_2pi, rel=1e-12)


def test_coupling_scales_with_current_noise():
    a = coupling_constant(1.9, ResonatorParams(delta_i=35e-9)).g_over_2pi
    b = coupling_constant(1.9, ResonatorParams(delta_i=70e-9)).g_over_2pi
    assert b == pytest.approx(2 * a)


def test_detection_time_examples():
    assert detection_time(CouplingEstimate(1e3)) == pytest.approx(0.64, abs=0.01)
    assert detection_time(CouplingEstimate(0.6e3)) == pytest.approx(4.9, abs=0.1)


def test_angular_units_are_used():
    # forgetting the 2 pi would inflate the time by (2 pi)^4 ~ 1559
    t = detection_time(CouplingEstimate(1e3))
    naive = 1e5**2 * 1e5 / (1e3) ** 4
    assert naive / t == pytest.approx((2 * math.pi) ** 4)


def test_halving_coupling_multiplies_time_by_16():
    assert detection_time(CouplingEstimate(500.0)) == pytest.approx(16 * detection_time(CouplingEstimate(1e3)))


@given(st.floats(0.05, 10), st.floats(0.2, 5))
def test_time_scales_as_inverse_fourth_power(alpha, k):
    t1 = estimate(alpha).detection_time
    t2 = estimate(k * alpha).detection_time
    assert t2 == pytest.approx(t1 / k**4, rel=1e-9)


def test_efficiency_and_rates_enter_as_written():
    g = CouplingEstimate(1e3)
    base = detection_time(g)
    assert detection_time(g, ResonatorParams(eta=0.5)) == pytest.approx(2 * base)
    assert detection_time(g, ResonatorParams(kappa=2e5)) == pytest.approx(4 * base)
    assert detection_time(g, ResonatorParams(gamma2=2e5)) == pytest.approx(2 * base)


def test_custom_constants_propagate():
    c = SpinConstants(gamma_e=14e9)
    assert coupling_constant(1.9, c=c).g_over_2pi == pytest.approx(coupling_constant(1.9).g_over_2pi / 2, rel=2e-3)


@pytest.mark.parametrize(
    "kwargs", [dict(delta_i=0), dict(kappa=-1), dict(gamma2=0), dict(eta=0), dict(eta=1.5)]
)
def test_resonator_validation(kwargs):
    with pytest.raises(ValidationError):
        ResonatorParams(**kwargs)


def test_negative_gradient_rejected():
    with pytest.raises(ValidationError):
        coupling_constant(-0.1)


def test_to_dict():
    d = estimate(1.9).to_dict()
    assert set(d) == {"g_over_2pi_hz", "g_angular_rad_per_s", "detection_time_s"}
    assert d["g_angular_rad_per_s"] == pytest.approx(2 * math.pi * d["g_over_2pi_hz"])
