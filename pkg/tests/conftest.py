from __future__ import annotations

import numpy as np
import pytest

from app.models import GmmSpec, RegressionSystem
from app.schemas import ScenarioConfig
from app.tlpe import build_system, generate_scenario, line_params_to_y, simulate_measurements

from .factories import noise_free_config, zero_noise


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def clean_config():
    return noise_free_config()


@pytest.fixture
def clean_records(clean_config):
    return simulate_measurements(clean_config)


@pytest.fixture
def y_true(clean_config):
    return line_params_to_y(clean_config.true_params.to_params()).as_array()


@pytest.fixture
def clean_system(clean_records):
    return build_system(clean_records)


@pytest.fixture
def current_noise_scenario():
    """Two-component noise on the currents only, voltages exact."""
    config = ScenarioConfig(s=100, seed=3, noise_D=zero_noise())
    return generate_scenario(config)


@pytest.fixture
def random_system(rng):
    D = rng.normal(size=(40, 3))
    x = np.array([1.5, -0.5, 2.0])
    return RegressionSystem(D=D, c=D @ x), x


@pytest.fixture
def unit_spec():
    return GmmSpec.single(0.0, 1.0)
