import numpy as np
import pytest
from hypothesis import settings

from pacresp.core import construct_secret_space
from pacresp.learners import make_synthetic_universe, train_pool

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_world():
    """n=200 blobs, m=8 subsets, nearest-centroid pool."""
    u = make_synthetic_universe(200, 3, 2, 3.0, seed=0)
    space = construct_secret_space(u, 8, 0)
    return u, space, train_pool(u, space)


def random_one_hot_mech(rng, m, d):
    from pacresp.calibration import MechanismMatrix

    return MechanismMatrix(np.eye(d)[rng.integers(d, size=m)])
