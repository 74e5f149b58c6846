import numpy as np
import pytest

from config import parse_config
from data.datasets import make_blobs
from model.split_model import SplitModel


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run the slow trend reproductions"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model(rng):
    """4 -> 8 -> 3 MLP cut after the first layer (d_c = 40, d_s = 27)."""
    return SplitModel.init([4, 8, 3], cut_layer=1, rng=rng)


@pytest.fixture
def deep_model(rng):
    return SplitModel.init([4, 6, 5, 3], cut_layer=2, rng=rng, activation="tanh")


@pytest.fixture
def blobs():
    return make_blobs(num_classes=3, dim=4, samples_per_class=20, spread=0.5, seed=7)


def tiny_config_dict(**training) -> dict:
    base = {
        "rounds": 6,
        "tau": 2,
        "num_clients": 3,
        "participation": 1.0,
        "batch_size": 8,
        "eval_interval": 2,
    }
    base.update(training)
    return {
        "seed": 11,
        "model": {"widths": [4, 6, 3], "cut_layer": 1},
        "training": base,
        "dataset": {"num_classes": 3, "dim": 4, "samples_per_class": 20},
    }


@pytest.fixture
def tiny_config():
    return parse_config(tiny_config_dict())
