import numpy as np
import pytest

from mtrouter.domain import RouterConfig
from mtrouter.simulation import (
    CorpusParams,
    build_backends,
    default_simulation,
    generate_corpus,
)


@pytest.fixture(scope="session")
def small_corpus():
    params = CorpusParams(
        n_requests=120, n_domains=4, n_engines=4, feature_dim=16,
        feature_signal=3.0, feature_noise_sigma=0.3, seed=5,
    )
    return generate_corpus(params)


@pytest.fixture(scope="session")
def sim_config():
    return default_simulation(n_engines=4, n_domains=4)


@pytest.fixture()
def backends(sim_config, small_corpus):
    return build_backends(sim_config, small_corpus)


@pytest.fixture()
def router_config():
    return RouterConfig(max_mts=4, alpha=0.2, learning_rate=0.3)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
