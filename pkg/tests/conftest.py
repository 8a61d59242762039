import numpy as np
import pytest

from ptcmil.data import BagRecord, SyntheticClassConfig, SyntheticSurvConfig, gen_classification_bags, gen_survival_bags
from ptcmil.heads import SurvivalLabel
from ptcmil.model import PTCMIL, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(input_dim=6, embed_dim=8, clusters=3, heads=2)


@pytest.fixture
def tiny_survival_config():
    return ModelConfig(input_dim=6, embed_dim=8, clusters=3, heads=2, task="survival", num_bins=4)


@pytest.fixture
def tiny_model(tiny_config):
    return PTCMIL(tiny_config, rng=7)


@pytest.fixture
def tiny_bag(rng):
    return BagRecord("bag-0", rng.normal(size=(9, 6)), 1)


@pytest.fixture
def tiny_bags():
    rng = np.random.default_rng(99)
    return [BagRecord(f"bag-{i}", rng.normal(size=(int(rng.integers(4, 10)), 6)), i % 2) for i in range(8)]


@pytest.fixture
def tiny_survival_bags():
    rng = np.random.default_rng(98)
    labels = [SurvivalLabel(i % 4, int(i % 3 == 0)) for i in range(10)]
    return [BagRecord(f"surv-{i}", rng.normal(size=(int(rng.integers(4, 10)), 6)), y) for i, y in enumerate(labels)]


@pytest.fixture
def witness_bags():
    config = SyntheticClassConfig(bags_per_class=6, min_instances=8, max_instances=12, input_dim=6, witness_rate=0.2, seed=3)
    return gen_classification_bags(config)


@pytest.fixture
def survival_bags():
    config = SyntheticSurvConfig(patients=24, min_instances=6, max_instances=10, input_dim=6, seed=4)
    return gen_survival_bags(config)
