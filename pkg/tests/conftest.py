import numpy as np
import pytest

from symplug.moser_solver import build_shrinking_family
from symplug.smooth_fields import build_plug_profile, degenerate_profile


@pytest.fixture(scope="session")
def profile():
    return build_plug_profile()


@pytest.fixture(scope="session")
def flat_profile():
    return degenerate_profile()


@pytest.fixture(scope="session")
def family(profile):
    return build_shrinking_family(profile, 0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
