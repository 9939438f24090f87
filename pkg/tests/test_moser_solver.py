import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symplug import moser_solver as ms
from symplug.errors import InfeasibleTargetError, InvalidParameterError, RefinementRequired
from symplug.smooth_fields import build_plug_profile, check_plug_conditions, sup_norm


def test_trivial_family(profile):
    fam = ms.build_shrinking_family(profile, 2 * sup_norm(profile.f))
    assert fam.m == 1.0
    x, t = np.linspace(-0.4, 0.4, 9), np.linspace(-0.9, 0.9, 9)
    v = fam.evaluate(0.7, x, t)
    assert np.max(np.abs(v["F"])) == 0 and np.allclose(v["f"], profile.evaluate(x, t)["f"], atol=1e-17)
    g, _, _ = ms.transport_values(fam, 1.0, x, t)
    assert np.max(np.abs(g)) == 0


def test_family_shrinks_and_keeps_conditions(family):
    assert ms.family_sup(family) <= 0.01
    for s, rep in family.check_conditions().items():
        assert rep.passed, (s, str(rep))


def test_source_vanishes_on_W_and_is_odd(family, rng):
    p = family.base
    r = family.w_radius
    for core in (p.p_plus, p.p_minus):
        x = rng.uniform(-r, r, 200)
        t = core[1] + rng.uniform(-r, r, 200)
        v = family.evaluate(0.5, x, t)
        assert np.max(np.abs(v["F"])) == 0.0 and np.max(np.abs(v["fs"])) == 0.0
    x = rng.uniform(-0.5, 0.5, 300)
    t = rng.uniform(-1, 1, 300)
    a, b = family.evaluate(1.0, x, t), family.evaluate(1.0, x, -t)
    assert np.max(np.abs(a["F"] + b["F"])) < 1e-16 and np.max(np.abs(a["f"] + b["f"])) < 1e-16


def test_core_slopes_unchanged(family):
    p = family.base
    c = np.array([p.p_plus, p.p_minus])
    assert np.allclose(family.evaluate(1.0, c[:, 0], c[:, 1])["fx"], p.evaluate(c[:, 0], c[:, 1])["fx"], rtol=0, atol=0)


def test_infeasible_target_reports_floor(profile):
    with pytest.raises(InfeasibleTargetError) as ei:
        ms.build_shrinking_family(profile, 0.001, w_radius=0.09)
    assert ei.value.floor > 0.001
    with pytest.raises(InvalidParameterError):
        ms.build_shrinking_family(profile, -1.0)


def test_transport_even_and_collar(family):
    sol = ms.solve_transport(family, 1.0, (33, 33))
    p = family.base.params
    assert np.max(np.abs(sol.g - sol.g[:, ::-1])) <= 1e-8
    col = (np.abs(sol.xs)[:, None] >= p.delta - p.collar) | (np.abs(sol.ts)[None, :] >= p.t_half - p.collar)
    assert np.max(np.abs(sol.g[col])) <= 1e-10
    sym = ms.solve_transport(family, 1.0, (33, 33), symmetric=True)
    assert np.max(np.abs(sym.g - sol.g)) < 1e-9
    assert sol.to_csv().count("\n") == 33 * 33 + 1


def test_transport_residual_interior(family):
    xs = np.linspace(-0.5, 0.5, 34)[1:-1]
    ts = np.linspace(-1, 1, 34)[1:-1]
    X, T = (a.ravel() for a in np.meshgrid(xs, ts, indexing="ij"))
    assert ms.transport_residual(family, 1.0, X, T).max() < 1e-5


def test_level_set_consistency_near_core(family):
    """Near a core g is a function of the H-level: equal levels give equal values."""
    p = family.base
    r = family.w_radius
    t1, t2 = p.p_minus[1] + 0.3 * r, p.p_minus[1] - 0.3 * r
    x1 = np.array([0.2 * r, -0.3 * r])
    level = p.H.eval(x1, np.full(2, t1))
    from symplug.smooth_fields import invert_H

    x2 = invert_H(p, level, np.full(2, t2))
    g1, _, _ = ms.transport_values(family, 1.0, x1, np.full(2, t1))
    g2, _, _ = ms.transport_values(family, 1.0, x2, np.full(2, t2))
    assert np.max(np.abs(g1 - g2)) < 1e-7


def test_moser_identity_and_fault_injection(family):
    assert ms.verify_moser(family, 0.0, grid=16).residual == 0.0
    good = ms.verify_moser(family, 0.5, grid=24)
    assert good.residual < 1e-5
    bad = ms.verify_moser(family, 0.5, grid=24, g_override=lambda s, x, t: np.zeros(np.shape(x)))
    assert bad.residual > 1e-3


def test_moser_refinement_shrinks(family):
    coarse = ms.verify_moser(family, 0.5, grid=16, h=1e-4)
    fine = ms.verify_moser(family, 0.5, grid=16, h=1e-5)
    assert fine.residual < coarse.residual


def test_isotopy(family):
    psi = ms.isotopy_psi(family, 0.0)
    out = psi(np.array([1.0]), np.array([0.1]), np.array([0.2]))
    assert np.allclose(out, [[1.0, 0.1, 0.2]])
    psi1 = ms.isotopy_psi(family, 1.0)
    p = family.base.params
    edge = psi1(np.zeros(3), np.array([p.delta - 0.5 * p.collar, 0.0, 0.1]), np.array([0.0, p.t_half - 0.5 * p.collar, -0.99]))
    assert np.max(np.abs(edge[:, 0])) < 1e-10
    wiggly = ms.isotopy_psi(family, 1.0, g_override=lambda s, x, t: np.sin(40 * s) * np.ones(np.shape(x)), nodes=5)
    with pytest.raises(RefinementRequired):
        wiggly.G(np.array([0.0]), np.array([0.0]))
    with pytest.raises(InvalidParameterError):
        ms.isotopy_psi(family, 1.5)


def test_simpson_weights():
    w = ms.simpson_weights(5)
    assert w.sum() == pytest.approx(1.0) and np.allclose(w * 12, [1, 4, 2, 4, 1])
    with pytest.raises(InvalidParameterError):
        ms.simpson_weights(4)


def test_trivial_family_has_zero_hamiltonian(profile):
    fam = ms.build_shrinking_family(profile, 2 * sup_norm(profile.f))
    mh = ms.moser_hamiltonian(fam, grid=(17, 17))
    P = np.array([[0.3, 0.1, 0.2, 0.0], [1.0, -0.2, -0.5, 0.01]])
    assert np.max(np.abs(mh.K(P))) == 0.0


def test_loop_integrals_closedness(family):
    mh = ms.moser_hamiltonian(family, grid=(17, 17))
    vals, loops = mh.loop_integrals(n_loops=6, n_nodes=1024)
    assert len(loops) == 6 and np.max(np.abs(vals)) < 1e-5
    circ, _ = mh.circle_integrals(n_circles=8)
    assert np.max(np.abs(circ)) < 1e-12


def test_rescale_identity_kappa_zero(profile):
    r = ms.hyperbolic_rescale(profile, 0.0)
    assert r.identity_residual == 0.0 and r.f_hat_norm == pytest.approx(r.f_norm, rel=1e-14)


def test_rescale_log2(profile):
    r = ms.hyperbolic_rescale(profile, math.log(2), conjugacy=True)
    assert r.identity_residual <= 1e-12
    assert r.support_half_width == pytest.approx(0.5 * ms.support_half_width(profile), rel=1e-14)
    assert r.f_hat_norm <= 2 * r.f_norm * (1 + 1e-12)
    assert r.conditions.passed
    assert r.conjugacy_residual <= 1e-6


def test_rescale_precondition(profile):
    with pytest.raises(InvalidParameterError, match="admissible kappa"):
        ms.hyperbolic_rescale(profile, 4.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2.5))
def test_rescale_support_scales(kappa):
    p = build_plug_profile()
    r = ms.hyperbolic_rescale(p, kappa, check=False)
    assert r.support_half_width == pytest.approx(math.exp(-kappa) * ms.support_half_width(p), rel=1e-12)
    assert r.support_half_width <= r.support_bound


def test_rescale_flow_generator(profile):
    r = ms.hyperbolic_rescale(profile, 0.5, flow=True, check=False)
    assert r.flow_residual < 1e-8


def test_sequence_single_target_is_identity(profile):
    seq = ms.plug_sequence(profile, [(1.01 * sup_norm(profile.f), profile.t_half)])
    assert len(seq.stages) == 1 and seq.stages[0].kappa == 0.0
    P = np.array([[0.1, 0.2, 0.3, 0.01]])
    assert np.array_equal(seq.stages[0].eta(P), P)


def test_sequence_rejects_increasing(profile):
    with pytest.raises(InvalidParameterError):
        ms.plug_sequence(profile, [(0.01, 0.5), (0.05, 0.25)])


def test_sequence_stage_error_index(profile):
    with pytest.raises(InvalidParameterError, match="stage 0"):
        ms.plug_sequence(profile, [(0.01, 2.0)])
