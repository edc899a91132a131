import numpy as np
import pytest

from pshenvelope.domain import ball
from pshenvelope.grid import build_grid


@pytest.fixture(scope="session")
def disc():
    return ball(radius=1.0, n=1)


@pytest.fixture(scope="session")
def disc16(disc):
    return build_grid(disc, 1 / 16)


@pytest.fixture(scope="session")
def ball2_4():
    return build_grid(ball(radius=1.0, n=2), 1 / 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
