import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symplug import _pykernels, kernels
from symplug.errors import InvalidParameterError
from symplug.plug_dynamics import (
    PlugPoint,
    angle_gap,
    characteristic_field,
    exit_map,
    exit_map_batch,
    find_trapped,
    integrate_orbit,
    stability_obstruction,
    trapping_distance,
)
from symplug.smooth_fields import build_plug_profile


def test_field_is_hamiltonian_part(profile):
    fld = characteristic_field(profile)
    x, t = np.array([0.1, -0.2]), np.array([0.3, -0.4])
    v = profile.evaluate(x, t)
    X = fld(0.0, x, t)
    assert np.allclose(X[:, 0], v["fx"]) and np.allclose(X[:, 1], -v["Ht"]) and np.allclose(X[:, 2], v["Hx"])


def test_flat_plug_is_vertical(flat_profile):
    fld = characteristic_field(flat_profile)
    out = exit_map(fld, (1.0, 0.2))
    assert out == pytest.approx((1.0, 0.2), abs=1e-14)


def test_exit_equals_entrance_small_batch(profile, rng):
    fld = characteristic_field(profile)
    th = rng.uniform(0, 2 * math.pi, 64)
    xs = rng.uniform(-profile.delta, profile.delta, 64)
    th_e, x_e, ok = exit_map_batch(fld, th, xs)
    assert ok.sum() >= 60
    err = angle_gap(th_e[ok], th[ok]) + np.abs(x_e[ok] - xs[ok])
    assert err.max() < 1e-6


def test_orbit_entry_exit_fields(profile):
    orb = integrate_orbit(characteristic_field(profile), PlugPoint(0.5, 0.3, -profile.t_half))
    assert orb.kind == "traversing"
    assert orb.entry.t == -profile.t_half and abs(orb.exit.t - profile.t_half) < 1e-12
    assert orb.to_csv().startswith("time,theta_unreduced,x,t")


def test_backward_orbit_reverses(profile):
    fld = characteristic_field(profile)
    a = integrate_orbit(fld, PlugPoint(0.2, 0.25, -profile.t_half), 1, rtol=1e-12, atol=1e-12, record=False)
    b = integrate_orbit(fld, PlugPoint(*a.final), -1, rtol=1e-12, atol=1e-12, record=False)
    assert b.kind == "traversing"
    assert abs(math.remainder(b.final[0] - 0.2, 2 * math.pi)) < 1e-8 and abs(b.final[1] - 0.25) < 1e-8


def test_trapped_entry_converges(profile):
    fld = characteristic_field(profile)
    trapped = find_trapped(fld)
    assert len(trapped) >= 1
    for p in trapped:
        assert abs(float(profile.H.eval(np.array([p.x]), np.array([p.t]))[0])) < 1e-12
        orb = integrate_orbit(fld, p, 1, 200.0, record=False)
        assert orb.kind == "trapped_forward"
        assert trapping_distance(orb, profile) < 1e-3


def test_core_is_periodic(profile):
    fld = characteristic_field(profile)
    orb = integrate_orbit(fld, PlugPoint(0.0, *profile.p_plus), 1, 5.0, record=False)
    assert orb.kind == "periodic" and orb.limit == "p_plus"


def test_obstruction_opposite_signs(profile):
    rep = stability_obstruction(profile)
    assert rep.opposite and rep.winding_sign_plus == -rep.winding_sign_minus
    even = stability_obstruction(build_plug_profile(parity=+1.0))
    assert not even.opposite


def test_bad_seed_and_direction(profile):
    fld = characteristic_field(profile)
    with pytest.raises(InvalidParameterError):
        integrate_orbit(fld, PlugPoint(0, 2.0, 0), 1)
    with pytest.raises(InvalidParameterError):
        integrate_orbit(fld, PlugPoint(0, 0.1, 0), 2)
    with pytest.raises(InvalidParameterError):
        find_trapped(fld, n_seeds=0)


def test_generic_profile_path_matches_kernel(profile):
    """A profile outside the closed family runs through the Python integrator loop."""
    generic = profile.with_fields()
    assert generic.vector is None
    a = integrate_orbit(characteristic_field(profile), PlugPoint(1.0, 0.2, -1.0), record=False)
    b = integrate_orbit(characteristic_field(generic), PlugPoint(1.0, 0.2, -1.0), record=False)
    assert np.allclose(a.final, b.final, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(-0.95, 0.95))
def test_kernels_agree_pointwise(x, t):
    p = build_plug_profile()
    a = kernels.field_values(p.vector, np.array([x]), np.array([t]))
    b = _pykernels.field_values(p.vector, np.array([x]), np.array([t]))
    assert np.allclose(np.asarray(a), np.asarray(b), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.45, 0.45), st.floats(-0.95, 0.95))
def test_H_conserved_along_orbits(x, t):
    p = build_plug_profile()
    orb = integrate_orbit(characteristic_field(p), PlugPoint(0.0, x, t), 1, 3.0, 1e-11, 1e-11, record=False)
    h0 = p.H.eval(np.array([x]), np.array([t]))[0]
    h1 = p.H.eval(np.array([orb.final[1]]), np.array([orb.final[2]]))[0]
    assert abs(h1 - h0) < 1e-8
