"""
Shared fixtures for the test suite.
"""

import numpy as np
import pytest

from cpcanet.app.config import get_settings
from cpcanet.app.schemas.training import TrainerConfig
from cpcanet.app.services import data


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; tests that set env vars need a fresh read."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def commuting_ensemble():
    return data.gen_common_ensemble(6, 3, seed=7)


@pytest.fixture
def toy_config():
    """Small trainer config that runs a handful of steps in well under a second."""
    return TrainerConfig(
        input_dim=8,
        feature_dim=12,
        proj_dim=4,
        stages=2,
        n_domains=2,
        n_classes=3,
        backbone_hidden=16,
        hyper_hidden=8,
        batch_per_domain=10,
        steps=4,
        lambda_cpca=5e-3,
        eval_interval=2,
    )


@pytest.fixture
def toy_dataset():
    return data.gen_toy_dg(8, 3, 3, 60, 2.0, seed=3)
