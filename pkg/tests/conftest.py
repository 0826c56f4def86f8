import numpy as np
import pytest

from threeg.data import BOS, EOS, FeatureRecord
from threeg.model import ModelConfig, init_params


def random_store(config, seed, scale=None):
    """Initialized parameters; with ``scale`` every entry is redrawn from N(0, scale^2)."""
    store = init_params(config, seed=seed)
    if scale is not None:
        rng = np.random.default_rng(seed + 1000)
        for name in store:
            store[name][...] = rng.normal(0.0, scale, store[name].shape)
    return store


def random_features(config, rng, image_id="img"):
    return FeatureRecord(image_id, rng.standard_normal(config.l), rng.standard_normal((config.C, config.D)))


def random_caption(config, rng, length):
    return [BOS] + rng.integers(4, config.N0, size=length - 1).tolist() + [EOS]


@pytest.fixture
def small_config():
    return ModelConfig(h=8, N0=12, l=10, C=4, D=6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
