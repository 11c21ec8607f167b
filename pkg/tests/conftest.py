"""
Shared fixtures for the negmm test suite
"""

from pathlib import Path

import numpy as np
import pytest

from negmm import scoring
from negmm.datasets import gen_example1
from negmm.mixture import MixtureParams
from negmm.models import NetworkSpec, TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def std_normal():
    return MixtureParams([1.0], [0.0], [1.0])


@pytest.fixture
def two_component():
    return MixtureParams([0.3, 0.7], [-1.0, 2.0], [0.5, 1.5])


@pytest.fixture
def mixture_batch(rng):
    """Eight random three-component mixtures"""
    weights = rng.dirichlet(np.full(3, 2.0), size=8)
    means = rng.normal(0.0, 2.0, size=(8, 3))
    stds = rng.uniform(0.3, 2.0, size=(8, 3))
    return MixtureParams(weights, means, stds)


@pytest.fixture
def tiny_spec():
    return NetworkSpec(input_dim=2, hidden_layers=[4, 3], k_components=2, seed=3)


@pytest.fixture
def small_toy():
    """Example 1 with 40 train, 8 validation and 20 test rows"""
    return gen_example1(40, seed=0, n_test=20)


@pytest.fixture
def quick_train():
    return TrainConfig(eta=0.5, epochs_max=5, batch_size=16, learning_rate=0.01, patience=3, seed=1)


@pytest.fixture(autouse=True)
def reset_call_counts():
    scoring.call_counts.clear()
    yield
    scoring.call_counts.clear()


@pytest.fixture
def write_config(tmp_path):
    """Write a TOML experiment file and return its path"""

    def _write(body: str, name: str = "experiment.toml") -> Path:
        path = tmp_path / name
        path.write_text(body, encoding="utf-8")
        return path

    return _write


QUICK_TOML = """
[data]
source = "ex1"
n = 30
n_test = 20
seed = 4

[network]
hidden_layers = [6]
k = 1
seed = 2

[training]
eta = 0.5
epochs_max = 4
batch_size = 16
learning_rate = 0.01
patience = 2
seed = 3

[output]
dir = "{out}"
"""


@pytest.fixture
def quick_config(write_config, tmp_path):
    """Small ex1 experiment writing to tmp_path/run"""
    return write_config(QUICK_TOML.format(out=(tmp_path / "run").as_posix()))


@pytest.fixture
def quick_variant(write_config, tmp_path):
    """Quick experiment writing to tmp_path/<name>, with extra TOML appended"""

    def _variant(name: str, extra: str = "", eta: float = 0.5) -> Path:
        body = QUICK_TOML.format(out=(tmp_path / name).as_posix()).replace("eta = 0.5", f"eta = {eta}")
        return write_config(body + extra, f"{name}.toml")

    return _variant
