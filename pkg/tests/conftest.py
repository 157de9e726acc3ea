import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from solitonlab.models import ModelSpec, build_model

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def cigar():
    return build_model(ModelSpec("cigar"))


@pytest.fixture(scope="session")
def cigar_r():
    return build_model(ModelSpec("cigar_product", k=1))


@pytest.fixture(scope="session")
def cigar_fd():
    return build_model(ModelSpec("cigar", jets="fd"))


@pytest.fixture(scope="session")
def flat():
    """R^2 with phi = 0.25."""
    return build_model(ModelSpec("euclidean", n=2, phi=("const", 0.25)))


@pytest.fixture(scope="session")
def flat_quad():
    """R^2 with phi = (1 + |x|^2) / 2."""
    return build_model(ModelSpec("euclidean", n=2, phi=("quadratic",)))


@pytest.fixture(scope="session")
def bryant3():
    return build_model(ModelSpec("bryant", n=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
