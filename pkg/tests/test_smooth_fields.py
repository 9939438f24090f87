import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symplug import _closed_forms as cf
from symplug.errors import ConfigError, ConstructionError, InvalidParameterError
from symplug.smooth_fields import (
    PlugParams,
    analytic_f_bound,
    build_bump,
    build_plug_profile,
    check_plug_conditions,
    invert_H,
    params_from_ini,
    params_to_ini,
    sup_norm,
)

# frozen oracle values (mpmath, 30 digits)
BUMP_HALF = 0.716531310573789250425  # exp(1 - 1/(1 - 1/4)) = exp(-1/3)
BUMP_MASS = float(mpmath.quad(lambda v: mpmath.e ** (1 - 1 / (1 - v * v)), [-1, 0, 1]))


def test_bump_value_against_mpmath():
    assert float(cf.std_bump(0.5)) == pytest.approx(BUMP_HALF, abs=1e-15)
    assert float(mpmath.exp(mpmath.mpf(-1) / 3)) == pytest.approx(BUMP_HALF, abs=1e-15)
    assert cf.std_bump(1.0) == 0.0 and cf.std_bump(-1.2) == 0.0


def test_bump_integral_against_quadrature():
    # antiderivative normalised to vanish at 0
    assert float(cf.std_bump_integral(1.0)) == pytest.approx(BUMP_MASS / 2, rel=1e-12)
    for v in (-0.7, -0.2, 0.3, 0.9):
        ref = float(mpmath.quad(lambda u: mpmath.e ** (1 - 1 / (1 - u * u)), [0, v]))
        assert float(cf.std_bump_integral(v)) == pytest.approx(ref, abs=1e-13)


def test_bump_derivatives_by_differences():
    v = np.linspace(-0.95, 0.95, 41)
    h = 1e-6
    d1 = (cf.std_bump(v + h) - cf.std_bump(v - h)) / (2 * h)
    d2 = (cf.std_bump_d1(v + h) - cf.std_bump_d1(v - h)) / (2 * h)
    assert np.max(np.abs(d1 - cf.std_bump_d1(v))) < 1e-8
    assert np.max(np.abs(d2 - cf.std_bump_d2(v))) < 1e-6


@given(st.floats(-3, 3), st.floats(0.05, 1.0))
def test_plateau_range_and_support(u, r):
    val, _ = cf.plateau(u, r)
    assert 0.0 <= float(val) <= 1.0
    if abs(u) <= r:
        assert float(val) == 1.0
    if abs(u) >= 2 * r:
        assert float(val) == 0.0


def test_core_profile_lobes_cancel():
    B, b = cf.core_profile(np.array([-1.0, -0.6, 0.6, 1.0]), 0.6)
    assert np.max(np.abs(B)) < 1e-15
    _, b0 = cf.core_profile(np.array([0.0]), 0.6)
    assert float(b0[0]) == 1.0


def test_build_bump_validation():
    with pytest.raises(InvalidParameterError):
        build_bump(0.0, -1.0)


def test_default_conditions_pass(profile):
    rep = check_plug_conditions(profile)
    assert rep.passed, str(rep)
    assert rep["P4"].residual <= 1e-12


def test_even_s_breaks_parity():
    rep = check_plug_conditions(build_plug_profile(parity=+1.0))
    assert not rep["P4"].passed


def test_degenerate_fails_nondegeneracy(flat_profile):
    rep = check_plug_conditions(flat_profile)
    assert rep["P2"].passed and rep["P4"].passed
    assert not rep["P3"].passed or not rep["nondegenerate"].passed


def test_sup_norm_matches_closed_form(profile):
    assert sup_norm(profile.f) == pytest.approx(analytic_f_bound(profile.vector), rel=1e-9)


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        PlugParams(collar=0.2)
    with pytest.raises(InvalidParameterError):
        PlugParams(amp=0.5)
    with pytest.raises(InvalidParameterError):
        PlugParams(tau=0.95)


def test_construction_error_reports_attained():
    with pytest.raises(ConstructionError) as ei:
        # wide x-range: sup|f| ~ amp * 0.36 * (bump radius) exceeds y_half
        build_plug_profile(PlugParams(delta=4.0, t_half=1.0, y_half=0.1, amp=0.099, collar=0.2))
    assert ei.value.attained > 0.1


def test_ini_round_trip():
    p = PlugParams(delta=0.4, t_half=1.2, y_half=0.25, tau=0.6, collar=0.09, amp=0.07)
    assert params_from_ini(params_to_ini(p)) == p
    with pytest.raises(ConfigError):
        params_from_ini("[other]\nx = 1\n")
    with pytest.raises(ConfigError):
        params_from_ini("[plug]\ndelta = big\n")


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-1.0, 1.0))
def test_parity_symmetry(x, t):
    p = build_plug_profile()
    a = p.evaluate(np.array([x]), np.array([t]))
    b = p.evaluate(np.array([x]), np.array([-t]))
    assert abs(a["H"][0] - b["H"][0]) <= 1e-15
    assert abs(a["f"][0] + b["f"][0]) <= 1e-15


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.49, 0.49), st.floats(-1.0, 1.0))
def test_invert_H_round_trip(x, t):
    p = build_plug_profile()
    level = p.H.eval(np.array([x]), np.array([t]))
    xr = invert_H(p, level, np.array([t]))
    assert abs(float(p.H.eval(xr, np.array([t]))[0] - level[0])) < 1e-13


def test_H_monotone_in_x(profile):
    xs = np.linspace(-profile.delta, profile.delta, 401)
    for t in np.linspace(-1, 1, 21):
        assert np.all(np.diff(profile.H.eval(xs, np.full_like(xs, t))) >= 0)


def test_core_derivative_nonzero(profile):
    v = profile.evaluate(np.array([0.0, 0.0]), np.array([profile.p_plus[1], profile.p_minus[1]]))
    assert np.all(np.abs(v["fx"]) > 1e-6)
    assert np.max(np.abs(v["Hx"])) < 1e-15 and np.max(np.abs(v["Ht"])) < 1e-15
    assert math.copysign(1, v["fx"][0]) == -math.copysign(1, v["fx"][1])
