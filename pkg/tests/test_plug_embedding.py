import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symplug.errors import ChartExtentError, InvalidParameterError
from symplug.plug_dynamics import PlugPoint
from symplug.plug_embedding import (
    SIGMA_PRIME,
    build_pole_chart,
    chart_extents_for,
    displaced_neighborhood_check,
    embed,
    injectivity_check,
    plug_embedding_j,
    pullback_residual,
)
from symplug.smooth_fields import PlugParams


def test_embedding_formula(profile):
    b = plug_embedding_j(profile, PlugPoint(1.0, 0.1, 0.4))
    v = profile.evaluate(np.array([0.1]), np.array([0.4]))
    assert (b.theta, b.t) == (1.0, 0.4)
    assert b.x == pytest.approx(v["H"][0]) and b.y == pytest.approx(-v["f"][0])


def test_pullback_default_and_flat(profile, flat_profile):
    assert pullback_residual(profile) < 1e-6
    # the flat plug has j*sigma = dx^dtheta exactly; what remains is difference roundoff
    assert pullback_residual(flat_profile) < 1e-9


def test_pullback_detects_wrong_sign(profile):
    flipped = profile.with_fields(f=type(profile.f)(lambda x, t: -profile.f.eval(x, t), profile.f.d_x, profile.f.d_t,
                                                    profile.delta, profile.t_half))
    assert pullback_residual(flipped) > 1e-3


def test_injectivity(profile):
    rep = injectivity_check(profile, n_pairs=1000, n_points=4000)
    assert rep.passed and rep.min_minor > 0.05


def test_embed_shapes(profile):
    out = embed(profile, np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)))
    assert out.shape == (3, 2, 4)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(-0.039, 0.039), st.floats(-0.049, 0.049), st.floats(-0.0024, 0.0024),
       st.sampled_from(["north", "south"]))
def test_chart_round_trip_and_level(theta, x, t, y, pole):
    ch = build_pole_chart(pole)
    z = ch.forward(theta, x, t, y)
    c = ch.inverse(z)
    assert abs(math.remainder(c[0] - theta, 2 * math.pi)) < 1e-12
    assert np.allclose(c[1:], [x, t, y], atol=1e-13)
    assert abs(0.5 * (z @ z - 1.0) - y) < 1e-15


def test_chart_is_symplectic(rng):
    for pole in ("north", "south"):
        ch = build_pole_chart(pole)
        pts = np.column_stack([rng.uniform(0, 6.28, 50), rng.uniform(-0.03, 0.03, 50), rng.uniform(-0.04, 0.04, 50),
                               rng.uniform(-0.002, 0.002, 50)])
        M = ch.pullback_matrix(pts)
        assert np.max(np.abs(M - SIGMA_PRIME)) < 1e-7


def test_north_chart_hits_pole():
    z = build_pole_chart("north").forward(0.0, 0.0, 0.0, 0.0)
    assert np.allclose(z, [1, 0, 0, 0], atol=1e-15)
    z = build_pole_chart("south").forward(0.0, 0.0, 0.0, 0.0)
    assert np.allclose(z, [-1, 0, 0, 0], atol=1e-15)


def test_chart_extent_errors():
    with pytest.raises(ChartExtentError):
        build_pole_chart(extents=(0.12, 0.05, 0.0025))  # rho0^2 = 0.09 < 2 delta'
    with pytest.raises(ChartExtentError):
        build_pole_chart(extents=(0.04, 1.6, 0.0025))
    with pytest.raises(ChartExtentError):
        build_pole_chart(kappa=1.0, plug=PlugParams())
    with pytest.raises(InvalidParameterError):
        build_pole_chart("east")


def test_extents_scale():
    assert chart_extents_for(0.2) == pytest.approx((0.04, 0.05, 0.0025), abs=1e-18)


def test_displacement():
    ch = build_pole_chart("north", extents=chart_extents_for(0.2))
    assert displaced_neighborhood_check(ch, 0.2).passed
    assert not displaced_neighborhood_check(ch, 0.0).passed
    big = build_pole_chart("north", extents=(0.04, 1.0, 0.0025))
    assert not displaced_neighborhood_check(big, 0.2).passed
