import numpy as np
import pytest

from omas_topology.preset import gen_paper_preset
from omas_topology.simulator import simulate_scenario


@pytest.fixture(scope="session")
def preset():
    return gen_paper_preset(0)


@pytest.fixture(scope="session")
def preset_sim(preset):
    return simulate_scenario(preset)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
