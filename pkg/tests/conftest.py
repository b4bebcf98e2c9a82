import numpy as np
import pytest

from nnopf.devices import synthesize_fleet
from nnopf.grid import synthesize_feeder
from nnopf.scenarios import ScenarioConfig, compute_norm_stats, generate_dataset
from nnopf.surrogate import TrainConfig, train


@pytest.fixture(scope="session")
def desk_net():
    return synthesize_feeder(7)


@pytest.fixture(scope="session")
def desk_fleet(desk_net):
    return synthesize_fleet(desk_net, 7)


@pytest.fixture(scope="session")
def desk_dataset(desk_net, desk_fleet):
    return generate_dataset(desk_net, desk_fleet, ScenarioConfig(n_samples=2000, seed=7))


@pytest.fixture(scope="session")
def small_surrogate(desk_dataset):
    stats = compute_norm_stats(desk_dataset)
    params = train(desk_dataset, stats, 8, TrainConfig(epochs=150, seed=0))
    return params, stats


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
