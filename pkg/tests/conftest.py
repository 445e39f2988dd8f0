"""
Shared fixtures: one trained source model per test session.
"""

import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.streams.synth import synth_source
from src.toynet.train import TrainConfig, train_source


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment (deselect with -m 'not slow')")


@pytest.fixture(scope="session")
def source_data():
    """Clean training data with the default layout."""
    return synth_source(seed=TrainConfig().seed)


@pytest.fixture(scope="session")
def trained_model(source_data):
    """Source model trained with the default settings."""
    return train_source(source_data, verbose=False)


@pytest.fixture
def model(trained_model):
    """Private copy of the trained model for tests that could touch it."""
    return trained_model.copy()
