"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import math
import os
import time

import numpy as np
import pytest

from symplug import moser_solver as ms
from symplug.plug_dynamics import (
    PlugPoint,
    angle_gap,
    characteristic_field,
    exit_map_batch,
    find_trapped,
    integrate_orbit,
    stability_obstruction,
)
from symplug.plug_embedding import pullback_residual
from symplug.smooth_fields import build_plug_profile, check_plug_conditions, sup_norm
from symplug.sphere_lab import (
    DegenerateCase,
    convergence_metrics,
    hopf_circle_distance,
    leafwise_search,
    shrinking_plug_models,
    sphere_leafwise_oracle,
    sphere_model,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(n, name, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return emit


def test_c01_plug_conditions(profile, verdict):
    t0 = time.perf_counter()
    rep = check_plug_conditions(profile, grid=200, tol=1e-10, exact_tol=1e-12)
    dt = time.perf_counter() - t0
    worst = max(r.residual for r in rep.rows)
    ok = rep.passed and dt < 5.0
    verdict(1, "plug conditions on 200x200", ok, f"worst residual {worst:.2e}, {dt:.2f}s")
    assert rep.passed, str(rep)
    assert dt < 5.0


def test_c02_pullback(profile, verdict):
    t0 = time.perf_counter()
    r = pullback_residual(profile, grid=(50, 50, 8), h=1e-5)
    dt = time.perf_counter() - t0
    verdict(2, "pullback of sigma equals omega", r < 1e-6 and dt < 5.0, f"{r:.2e} in {dt:.2f}s")
    assert r < 1e-6 and dt < 5.0


def test_c03_entrance_exit(profile, verdict):
    rng = np.random.default_rng(2024)
    fld = characteristic_field(profile)
    t0 = time.perf_counter()
    th = rng.uniform(0, 2 * math.pi, 4000)
    xs = rng.uniform(-profile.delta, profile.delta, 4000)
    th_e, x_e, ok = exit_map_batch(fld, th, xs, 1e-10, 1e-10)
    idx = np.flatnonzero(ok)[:1000]
    err = angle_gap(th_e[idx], th[idx]) + np.abs(x_e[idx] - xs[idx])
    dt = time.perf_counter() - t0
    good = idx.size == 1000 and err.max() < 1e-6 and dt < 60
    verdict(3, "entrance equals exit", good, f"{idx.size} orbits, max {err.max():.2e}, {dt:.1f}s")
    assert idx.size == 1000
    assert err.max() < 1e-6 and dt < 60


def test_c04_trapped_orbits(profile, verdict):
    fld = characteristic_field(profile)
    trapped = find_trapped(fld)
    T, tau = profile.t_half, profile.params.tau
    worst = 0.0
    for p in trapped:
        assert abs(profile.evaluate(np.array([p.x]), np.array([-T]))["H"][0]) < 1e-12
        orb = integrate_orbit(fld, p, 1, 100 * 2 * T, record=False)
        assert orb.kind == "trapped_forward"
        assert orb.elapsed == pytest.approx(100 * 2 * T)
        worst = max(worst, abs(abs(orb.final[2]) - tau))
    ok = len(trapped) > 0 and worst < 1e-3
    verdict(4, "trapped orbits", ok, f"{len(trapped)} entries, |t - tau| {worst:.2e}")
    assert trapped and worst < 1e-3


def test_c05_opposite_winding(profile, verdict):
    obs = stability_obstruction(profile)
    fld = characteristic_field(profile)
    turns = []
    for core in (profile.p_plus, profile.p_minus):
        orb = integrate_orbit(fld, PlugPoint(0.0, core[0], core[1]), 1, 5.0)
        assert orb.kind == "periodic"
        turns.append(orb.samples[-1, 1] - orb.samples[0, 1])
    ok = obs.winding_sign_plus == -obs.winding_sign_minus != 0 and turns[0] * turns[1] < 0
    verdict(5, "opposite winding", ok, f"signs {obs.winding_sign_plus:+d}/{obs.winding_sign_minus:+d}, "
                                       f"theta advance {turns[0]:+.3g}/{turns[1]:+.3g}")
    assert ok


def test_c06_sphere_oracle(verdict):
    eps = 0.2
    hits = sphere_leafwise_oracle(eps)
    r = math.sqrt(1 - eps**2 / 4)
    expected = np.array([[r, -eps / 2, 0, 0], [-r, -eps / 2, 0, 0]])
    got = np.array([h.z for h in hits])
    gap = max(np.min(np.linalg.norm(got - e, axis=1)) for e in expected)
    w = np.array([0.0, eps, 0.0, 0.0])
    same_leaf = max(float(hopf_circle_distance(z, z + w)) for z in got)
    degenerate = sphere_leafwise_oracle(0.0)
    ok = len(hits) == 2 and gap < 1e-6 and same_leaf < 1e-6 and isinstance(degenerate, DegenerateCase)
    verdict(6, "sphere oracle", ok, f"{len(hits)} hits, offset {gap:.1e}, eps=0 degenerate")
    assert ok


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_c07_no_leafwise_intersections(eps, verdict):
    workers = min(8, os.cpu_count() or 1)
    model = sphere_model(eps)
    t0 = time.perf_counter()
    res = leafwise_search(model, resolution=10_000, arc_budget=50 * 2 * math.pi, hit_threshold=1e-4,
                          workers=workers)
    dt = time.perf_counter() - t0
    res2 = leafwise_search(model, resolution=20_000, arc_budget=100 * 2 * math.pi, hit_threshold=1e-4,
                           workers=workers)
    ok = len(res.hits) == 0 and len(res2.hits) == 0 and res.min_clearance > 1e-2 and dt <= 600
    verdict(7, f"no leafwise intersections eps={eps:g}", ok,
            f"hits {len(res.hits)}/{len(res2.hits)} (doubled), min clearance {res.min_clearance:.2e} "
            f"(doubled {res2.min_clearance:.2e}), {dt:.0f}s on {workers} worker(s)")
    assert len(res.hits) == 0 and len(res2.hits) == 0
    assert dt <= 600
    assert res.min_clearance > 1e-2


def test_c08_moser_pipeline(family, verdict):
    p = family.base.params
    pull = {s: ms.verify_moser(family, s, grid=64).residual for s in (0.25, 0.5, 1.0)}
    sol = ms.solve_transport(family, 1.0, (65, 65))
    mirror, _, _ = ms.transport_values(family, 1.0, sol.xs[:, None], -sol.ts[None, :], rtol=1e-13)
    even = float(np.max(np.abs(sol.g - mirror)))
    col = (np.abs(sol.xs)[:, None] >= p.delta - p.collar) | (np.abs(sol.ts)[None, :] >= p.t_half - p.collar)
    collar = float(np.max(np.abs(sol.g[col])))
    loops, image = 0.0, 0.0
    for s in (0.25, 0.5, 1.0):
        mh = ms.moser_hamiltonian(family, s)
        circ, _ = mh.circle_integrals(s, n_circles=64)
        loops = max(loops, float(np.max(np.abs(circ))))
        image = max(image, mh.image_check(s)[0])
    ok = max(pull.values()) < 1e-5 and even <= 1e-8 and collar <= 1e-10 and loops < 1e-8 and image < 1e-4
    verdict(8, "Moser pipeline", ok, f"pullback {max(pull.values()):.1e}, even {even:.1e}, collar {collar:.1e}, "
                                     f"loops {loops:.1e}, image {image:.1e}")
    assert ok


def test_c09_rescale(profile, verdict):
    kappa = math.log(2.0)
    lam = math.exp(kappa)
    r = ms.hyperbolic_rescale(profile, kappa, conjugacy=True)
    rng = np.random.default_rng(9)
    x = rng.uniform(-profile.delta, profile.delta, 4000)
    t = rng.uniform(-profile.t_half, profile.t_half, 4000) / lam
    hat, base = r.profile.evaluate(x, t), profile.evaluate(x, lam * t)
    ident = max(float(np.max(np.abs(hat["H"] - base["H"]))), float(np.max(np.abs(hat["f"] - lam * base["f"]))))
    f_norm, f_hat_norm = sup_norm(profile.f), sup_norm(r.profile.f)
    strict = f_hat_norm < lam * f_norm * (1 - 1e-12)
    bound = math.exp(-kappa) * profile.t_half
    scan = ms.scanned_support(r.profile)
    support_ok = max(r.support_half_width, scan) <= bound * (1 + 1e-12)
    ok = ident <= 1e-12 and strict and support_ok and r.conjugacy_residual <= 1e-6
    verdict(9, "rescale identities", ok,
            f"identity {ident:.1e}, |f_hat|/(e^k|f|) = {f_hat_norm / (lam * f_norm):.15f} (strict < required), "
            f"support {max(r.support_half_width, scan):.4g} <= {bound:.4g}, conjugacy {r.conjugacy_residual:.1e}")
    assert ident <= 1e-12
    assert support_ok
    assert r.conjugacy_residual <= 1e-6
    assert strict, "sup|f_hat| equals e^kappa sup|f| exactly; a strict inequality cannot hold"


def test_c10_plug_sequence(profile, verdict):
    T = profile.t_half
    targets = [(0.05, T / 2), (0.01, T / 4)]
    seq = ms.plug_sequence(profile, targets)
    rows, ok = [], True
    for st, (sup_t, t_t) in zip(seq.stages, targets):
        norm = sup_norm(st.profile.f)
        supp = max(st.support, ms.scanned_support(st.profile))
        ok &= norm <= sup_t and supp <= t_t
        rows.append(f"|f|={norm:.4g}<= {sup_t:g} supp={supp:.4g}<= {t_t:g}")
    collar = seq.collar_residual()
    ok &= collar <= 1e-9
    verdict(10, "plug sequence", ok, "; ".join(rows) + f"; collar {collar:.1e}")
    assert ok


def test_c11_theorem3_diagnostics(verdict):
    models, _ = shrinking_plug_models(0.2, 5)
    rows = convergence_metrics(models)
    hd = [r.hausdorff for r in rows]
    ld = [r.l_distance for r in rows]
    dec = all(b < a for a, b in zip(hd, hd[1:]))
    bounded = all(r.hausdorff <= r.height for r in rows)
    ldec = all(b < a for a, b in zip(ld, ld[1:]))
    ang = min(r.min_tangent_angle for r in rows)
    ok = len(rows) == 5 and dec and bounded and ldec and ang > 10
    verdict(11, "shrinking-plug diagnostics", ok,
            f"Hausdorff {hd[0]:.1e} -> {hd[-1]:.1e}, L distance {ld[0]:.1e} -> {ld[-1]:.1e}, angle {ang:.1f} deg")
    assert ok
