import numpy as np
import pytest

from penshape.mesh import build_structured_mesh


@pytest.fixture(scope="session")
def mesh9():
    return build_structured_mesh(9)


@pytest.fixture(scope="session")
def mesh17():
    return build_structured_mesh(17)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
