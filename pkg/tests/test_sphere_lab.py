import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symplug import sphere_lab as sl
from symplug.errors import AssemblyError, ChartExtentError, DomainError, InvalidParameterError


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_z_pm_formula():
    z = sl.z_pm(0.2)
    r = math.sqrt(1 - 0.01)
    assert np.allclose(z, [[r, -0.1, 0, 0], [-r, -0.1, 0, 0]], atol=0)
    assert np.allclose(np.sum(z * z, axis=1), 1.0) and np.allclose(np.sum((z + [0, 0.2, 0, 0]) ** 2, axis=1), 1.0)


def test_oracle_and_degenerate():
    hits = sl.sphere_leafwise_oracle(0.2)
    assert len(hits) == 2
    for h, z in zip(hits, sl.z_pm(0.2)):
        assert np.linalg.norm(h.z - z) < 1e-12 and h.residual < 1e-12
    assert isinstance(sl.sphere_leafwise_oracle(0.0), sl.DegenerateCase)
    with pytest.raises(InvalidParameterError):
        sl.sphere_leafwise_oracle(2.5)


def test_hopf_field_is_iz():
    z = _unit([0.3, -0.2, 0.5, 0.1])
    assert np.allclose(sl.hamiltonian_vector(z), sl.from_complex(1j * sl.to_complex(z)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.floats(0.0, 6.28))
def test_arc_distance_matches_dense_polyline(a, b, length):
    if np.linalg.norm(a) < 0.1:
        return
    z0 = _unit(a)
    p = np.asarray(b, dtype=float)
    phis = np.linspace(0, length, 20001)
    pts = sl.hopf_rotate(np.broadcast_to(z0, (len(phis), 4)), phis)
    ref = np.min(np.linalg.norm(pts - p, axis=1))
    assert abs(float(sl.arc_distance(z0, length, 1, p)) - ref) < 1e-6


def test_hopf_leaf_checks_sphere():
    with pytest.raises(DomainError):
        sl.hopf_leaf(np.array([2.0, 0, 0, 0]))
    leaf = sl.hopf_leaf(_unit([1, 1, 0, 0]))
    assert leaf.closed and np.allclose(np.sum(leaf.samples**2, axis=1), 1)


def test_translation_map():
    F = sl.translation_hamiltonian(0.2)
    z = _unit([0.2, 0.4, -0.3, 0.5])
    assert np.allclose(F(z), z + F.w)
    assert np.allclose(F.vector_field(z), F.w, atol=1e-8)
    with pytest.raises(InvalidParameterError):
        sl.translation_hamiltonian(0.2, shell=(0.9, 1.1))
    with pytest.raises(InvalidParameterError):
        sl.translation_hamiltonian(1.5)


@pytest.fixture(scope="module")
def model():
    return sl.sphere_model(0.2)


def test_model_defining_function(model):
    ch = model.charts[0]
    th = np.linspace(0, 6, 7)
    x = np.linspace(-0.9 * model.profile.delta, 0.9 * model.profile.delta, 7)
    t = np.linspace(-0.8, 0.8, 7)
    z = model.plug_image(ch, th, x, t)
    assert np.max(np.abs(model.phi(z))) < 1e-12
    far = _unit([0.1, 0.2, 0.9, 0.3])
    assert abs(model.phi(far)[0]) < 1e-15


def test_model_gradient_by_differences(model, rng):
    ch = model.charts[1]
    c = np.column_stack([rng.uniform(0, 6, 20), rng.uniform(-0.03, 0.03, 20), rng.uniform(-0.04, 0.04, 20),
                         rng.uniform(-5e-4, 5e-4, 20)])
    z = ch.forward(*c.T)
    g = model.grad(z)
    h = 1e-7
    fd = np.stack([(model.phi(z + h * e) - model.phi(z - h * e)) / (2 * h) for e in np.eye(4)], axis=1)
    assert np.max(np.abs(g - fd)) < 1e-5


def test_trapped_leaf(model):
    w = model.w
    y = sl.z_pm(0.2)[0] + w
    fwd = sl.trace_leaf(model, y, direction=1)
    bwd = sl.trace_leaf(model, y, direction=-1)
    assert fwd.trapped or bwd.trapped
    z = y - w
    assert min(fwd.distance_to(z), bwd.distance_to(z)) > 1e-4


def test_leaf_far_from_boxes_is_hopf_circle(model):
    y = _unit([0.1, 0.3, 0.8, -0.4])
    leaf = sl.trace_leaf(model, y)
    assert leaf.closed and abs(leaf.arc_used - 2 * math.pi) < 1e-12


def test_hybrid_matches_ambient(model):
    y = model.charts[0].forward(0.3, 0.01, -0.045, 0.0)
    hyb = sl.trace_leaf(model, y, arc_budget=0.2)
    amb = sl.trace_leaf(model, y, arc_budget=0.2, mode="ambient", step=1e-3)
    pts = amb.polyline()
    d = max(hyb.distance_to(p) for p in pts[::20])
    assert d < 1e-4


def test_seed_off_surface(model):
    with pytest.raises(DomainError):
        sl.trace_leaf(model, np.array([1.1, 0, 0, 0]))


def test_small_search_perturbed_vs_sphere(model):
    res = sl.leafwise_search(model, resolution=400)
    assert len(res.hits) == 0
    flat = sl.sphere_model(0.2, degenerate=True)
    res0 = sl.leafwise_search(flat, resolution=400)
    assert len(res0.hits) == 2
    assert res.to_csv().startswith("index,")
    assert isinstance(sl.leafwise_search(model, eps=0.0), sl.DegenerateCase)


def test_assembly_guards():
    with pytest.raises(InvalidParameterError):
        sl.assemble_M(0.0)
    params, kappa, _ = sl.sphere_plug_params(0.2)
    with pytest.raises((AssemblyError, ChartExtentError)):
        sl.assemble_M(0.2, kappa=10 * kappa)


def test_tangent_angles():
    ch = sl.build_pole_chart("north")
    assert sl.tangent_angles(sl.band_circle(ch)).min() > 10
    hopf = sl.hopf_leaf(_unit([1, 0, 0, 0]), 256).samples
    assert sl.tangent_angles(hopf).max() < 1e-6


def test_point_set_hausdorff():
    a = np.zeros((1, 4))
    b = np.array([[0, 0, 0, 1.0], [0, 0, 0, 2.0]])
    assert sl.point_set_hausdorff(a, b) == 2.0
