import numpy as np
import pytest

from pamlab import EnvConfig
from pamlab.environment import sample_env


@pytest.fixture(scope="session")
def spin_traj():
    """Small symmetric two-state environment shared across tests."""
    cfg = EnvConfig(kind="spin-markov", d=1, L=6, T=4.0, seed=314)
    return sample_env(cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260823)
