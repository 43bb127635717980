import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dfm_mse import DfmParameters, ScenarioConfig  # noqa: E402


@pytest.fixture
def two_series():
    """Lambda = (1, 1)', equicorrelated Sigma with unit variances."""
    return DfmParameters.build(np.ones((2, 1)), np.array([[1.0, 0.5], [0.5, 1.0]]))


@pytest.fixture
def small_config():
    return ScenarioConfig(phi=0.7, hetero_mode="uniform", tau=0.5, sigma2_star=1.0,
                          n=30, t_len=60, replications=50, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
