import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nbbsim.config import ArrayConfig, SimConfig, with_zero_noise
from nbbsim.device import DeviceParams


@pytest.fixture
def quiet_params():
    """Device parameters with every variability source off."""
    return DeviceParams(sigma_c2c=0.0, sigma_d2d=0.0, sigma_read=0.0)


@pytest.fixture
def small_config():
    return SimConfig(seed=1234, array=ArrayConfig(rows=4, cols=4))


@pytest.fixture
def ideal_config(small_config):
    """Zero noise and zero parasitics: quantization is the only error."""
    return with_zero_noise(small_config, zero_parasitics=True)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
