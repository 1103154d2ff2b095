import numpy as np
import pytest

from churnlab.config import ExperimentConfig
from churnlab.pipeline import synthetic_dataset
from churnlab.synth import SynthConfig


def small_config(seed: int = 0, players: int = 1500, **kw) -> ExperimentConfig:
    return ExperimentConfig(seed=seed, synth=SynthConfig(player_count=players), **kw)


@pytest.fixture(scope="session")
def small_dataset():
    """A few thousand labelled samples from a 1500-player population."""
    return synthetic_dataset(small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
