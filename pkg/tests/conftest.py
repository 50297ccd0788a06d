import numpy as np
import pytest

from irsloc.geometry import Scenario
from irsloc.scenario import generate_scenario


def small_scenario(irs, targets, **kw):
    return Scenario(bs_position=(0.0, 0.0, 50.0), irs_positions=irs,
                    target_positions=targets, **kw)


@pytest.fixture
def line_scenario():
    """Two IRSs on the x axis with one target straight below the first."""
    return small_scenario([(0, 0, 30), (40, 0, 30)], [(0, 0, 0)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_scenario():
    return generate_scenario(3, n_irs=6, n_targets=1)
