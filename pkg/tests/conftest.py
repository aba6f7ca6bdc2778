import numpy as np
import pytest

from ncrflow import mesh
from ncrflow.stokes import SchemeOperators


@pytest.fixture(scope="session")
def small_mesh():
    return mesh.generate_structured(6, "alternating")


@pytest.fixture(scope="session")
def kershaw_mesh():
    return mesh.generate_kershaw(8, 0.6, "alternating")


@pytest.fixture(scope="session")
def small_ops(small_mesh):
    return SchemeOperators(small_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
