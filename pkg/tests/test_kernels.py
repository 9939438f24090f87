import os
import subprocess
import sys

import numpy as np
import pytest

from symplug import _pykernels, kernels


def test_backend_constants_match():
    assert (kernels.EXIT_TOP, kernels.BUDGET, kernels.T_EXTENDED) == (_pykernels.EXIT_TOP, _pykernels.BUDGET, _pykernels.T_EXTENDED)


def test_orbit_batch_twins(profile, rng):
    th = rng.uniform(0, 6, 12)
    xs = rng.uniform(-0.5, 0.5, 12)
    t0 = np.full(12, -1.0)
    a = kernels.orbit_batch(profile.vector, th, xs, t0, 1.0, 200.0, 1e-10, 1e-10)
    b = _pykernels.orbit_batch(profile.vector, th, xs, t0, 1.0, 200.0, 1e-10, 1e-10)
    assert np.array_equal(np.asarray(a[0]), np.asarray(b[0]))
    assert np.max(np.abs(np.asarray(a[2]) - np.asarray(b[2]))) < 1e-12


def test_transport_twins(family):
    xs = np.array([-0.3, -0.05, 0.0, 0.1, 0.4])
    ts = np.array([0.2, 0.6, -0.5, 0.9, -0.1])
    v = family.vector(1.0)
    a = kernels.transport(v, xs, ts, family.gamma_offset, 1e-7, 1e-12, 1e-12, 1e4)
    b = _pykernels.transport(v, xs, ts, family.gamma_offset, 1e-7, 1e-12, 1e-12, 1e4)
    assert np.max(np.abs(np.asarray(a[0]) - np.asarray(b[0]))) < 1e-12
    assert np.array_equal(np.asarray(a[2]), np.asarray(b[2]))


@pytest.mark.parametrize("flag,expected", [("1", "python"), ("0", None)])
def test_backend_selection_env(flag, expected):
    env = dict(os.environ, SYMPLUG_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "import symplug; print(symplug.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or kernels.BACKEND)
