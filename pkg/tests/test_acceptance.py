"""Desk-scale learning experiments. They take minutes, run them with ``pytest -m slow``."""

import numpy as np
import pytest

from ptcmil import PTCMIL, ModelConfig
from ptcmil.cli.app import GRADCHECK_THRESHOLD, model_gradient_errors
from ptcmil.data import SyntheticClassConfig, SyntheticSurvConfig, gen_classification_bags, gen_survival_bags, split_records
from ptcmil.training import (
    AdaptationPlan,
    Checkpoint,
    TrainConfig,
    evaluate,
    evaluate_checkpoint,
    few_shot_adapt,
    fit,
    fit_mean_pool_probe,
    select_shots,
)

pytestmark = pytest.mark.slow


def _witness_splits(seed):
    bags = gen_classification_bags(SyntheticClassConfig(seed=seed))
    return split_records(bags, 200, 50, np.random.default_rng(seed))


@pytest.fixture(scope="module")
def witness_splits():
    return _witness_splits(0)


@pytest.fixture(scope="module")
def trained_witness_model(witness_splits):
    model = PTCMIL(ModelConfig(), rng=0)
    result = fit(model, witness_splits["train"], witness_splits["val"], TrainConfig(epochs=30, lr=2e-4, seed=0))
    return model, result


def test_witness_task_is_learned(witness_splits, trained_witness_model):
    model, _ = trained_witness_model
    report = evaluate(model, witness_splits["test"])
    assert report.auc is not None and report.auc >= 0.95

    probe = fit_mean_pool_probe(witness_splits["train"])
    assert probe.auc(witness_splits["test"]) <= report.auc - 0.05


def test_survival_task_is_learned():
    bags = gen_survival_bags(SyntheticSurvConfig(patients=300, censor_rate=0.3, seed=1))
    splits = split_records(bags, 200, 50, np.random.default_rng(1))
    model = PTCMIL(ModelConfig(task="survival"), rng=1)
    fit(model, splits["train"], splits["val"], TrainConfig(epochs=30, lr=2e-4, seed=1))
    report = evaluate(model, splits["test"])
    assert report.c_index is not None and report.c_index >= 0.65


@pytest.mark.parametrize("task", ["classification", "survival"])
def test_default_gradient_check(task):
    config = ModelConfig(input_dim=8, embed_dim=16, clusters=3, heads=2, task=task)
    errors = model_gradient_errors(config, instances=12)
    assert max(errors.values()) < GRADCHECK_THRESHOLD


def test_permutation_invariance_over_random_bags():
    model = PTCMIL(ModelConfig(), rng=2)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=(int(rng.integers(30, 81)), 16))
        base = model.forward(x)
        for _ in range(20):
            other = model.forward(x[rng.permutation(x.shape[0])])
            assert np.abs(other.logits - base.logits).max() < 1e-6
            assert other.prediction == base.prediction


def test_ablations_train_and_report():
    bags = gen_classification_bags(SyntheticClassConfig(bags_per_class=30, min_instances=20, max_instances=30, seed=3))
    splits = split_records(bags, 30, 15, np.random.default_rng(3))
    variants = [
        {},
        {"pooling": "pro"},
        {"pooling": "cls"},
        {"clustering": False},
        {"merging": False},
    ]
    labels = []
    for changes in variants:
        config = ModelConfig(**changes)
        model = PTCMIL(config, rng=3)
        result = fit(model, splits["train"], splits["val"], TrainConfig(epochs=2, lr=2e-4, seed=3))
        assert len(result.history) == 2
        report = evaluate(model, splits["test"])
        assert np.isfinite(report.loss)
        labels.append(config.label)
    assert labels == ["full", "pooling=pro", "pooling=cls", "w/o clustering", "w/o merging"]


def test_few_shot_adaptation_improves_a_reset_head(trained_witness_model):
    _, result = trained_witness_model
    target = _witness_splits(11)

    improved = 0
    for trial in range(10):
        model = result.checkpoint.build_model()
        model.reset_head(2, np.random.default_rng(100 + trial))
        source = Checkpoint.capture(model)

        plan = AdaptationPlan(shots=20, epochs=10, lr=1e-3, seed=trial)
        shots = select_shots(target["train"], plan.shots, np.random.default_rng(trial))
        assert sorted(b.label for b in shots) == [0] * 10 + [1] * 10

        adapted = few_shot_adapt(source, shots, plan)
        for name, values in source.params.items():
            if not name.startswith(("head.", "score_head.")):
                assert adapted.checkpoint.params[name].tobytes() == values.tobytes()

        before = evaluate_checkpoint(source, target["val"]).auc
        after = evaluate_checkpoint(adapted.checkpoint, target["val"]).auc
        improved += int(after > before)

    assert improved >= 8
