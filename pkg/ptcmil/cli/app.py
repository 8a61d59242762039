"""
The MIT License (MIT)

Copyright (c) 2025-present Developer Anonymous

Permission is hereby granted, free of charge, to any person obtaining a
copy of this software and associated documentation files (the "Software"),
to deal in the Software without restriction, including without limitation
the rights to use, copy, modify, merge, publish, distribute, sublicense,
and/or sell copies of the Software, and to permit persons to whom the
Software is furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in
all copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS
OR IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING
FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
DEALINGS IN THE SOFTWARE.
"""

from __future__ import annotations

import csv
import logging
import sys
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Literal

import numpy as np

from ptcmil.data import SPLITS, BagRecord, gen_classification_bags, gen_survival_bags, load_split, split_paths, split_records
from ptcmil.data.splits import kfold, write_split
from ptcmil.enums import Task
from ptcmil.errors import ConfigError, NumericFailure, PtcmilException
from ptcmil.heads import SurvivalLabel
from ptcmil.model import PTCMIL, ModelConfig, parameter_count
from ptcmil.tensor import Tensor, finite_diff_errors
from ptcmil.training import (
    Checkpoint,
    EvalReport,
    FitResult,
    TrainingEvents,
    compare_reports,
    evaluate,
    evaluate_checkpoint,
    few_shot_adapt,
    fit,
    select_shots,
    training_objective,
    write_history_csv,
)

from .commands import CommandTree, Context
from .config import RunConfig

_log = logging.getLogger(__name__)

__all__ = (
    "tree",
    "main",
    "setup_logging",
    "write_report",
    "model_gradient_errors",
    "GRADCHECK_THRESHOLD",
)

GRADCHECK_THRESHOLD = 1e-4
GRADCHECK_FLOOR = 1e-8

_handler: logging.Handler | None = None

tree = CommandTree("ptcmil", "Prompt token clustering for multiple instance learning on bags of instance features.")


def setup_logging(level: str | int = logging.INFO) -> None:
    """Installs a stream handler on the root logger, replacing one installed earlier."""
    global _handler

    if isinstance(level, str):
        level = logging.getLevelName(level.upper())

    root = logging.getLogger()
    if _handler is not None:
        root.removeHandler(_handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("[{asctime}] [{levelname:<8}] {name}: {message}", "%Y-%m-%d %H:%M:%S", style="{"))
    root.addHandler(handler)
    root.setLevel(level)
    _handler = handler


def write_report(path: Path, fields: Mapping[str, str]) -> None:
    """Writes ``key: value`` lines."""
    path.write_text("".join(f"{k}: {v}\n" for k, v in fields.items()), encoding="utf-8")
    _log.info("Wrote report to %s", path)


def _echo(fields: Mapping[str, str]) -> None:
    for key, value in fields.items():
        print(f"{key}: {value}")


def _directory(config: RunConfig, key: str, flag: str) -> Path:
    value = config[key]
    if not value:
        raise ConfigError([f"{key}: no directory given, pass {flag} or set it in the configuration"])
    return Path(value)


def _output(config: RunConfig) -> Path:
    out = _directory(config, "out_dir", "--out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _optional_split(directory: Path, name: str) -> list[BagRecord] | None:
    bags, _ = split_paths(directory, name)
    return load_split(directory, name) if bags.exists() else None


def _check_input_dim(config: ModelConfig, bags: Sequence[BagRecord]) -> None:
    if bags and bags[0].input_dim != config.input_dim:
        raise ConfigError([f"input_dim: the model expects {config.input_dim} features, the data has {bags[0].input_dim}"])


def _fmt(value: float | None) -> str:
    return "nan" if value is None else repr(value)


def _train_run(
    config: RunConfig,
    train: Sequence[BagRecord],
    val: Sequence[BagRecord],
    test: Sequence[BagRecord] | None,
    out: Path,
) -> tuple[FitResult, EvalReport | None, dict[str, str]]:
    model_config = config.model_config()
    _check_input_dim(model_config, train)
    model = PTCMIL(model_config, rng=config.seed)

    events = TrainingEvents()

    @events.listener()
    def on_best(epoch: int, metric: float) -> None:
        _log.info("New best validation metric %.4f at epoch %d", metric, epoch)

    result = fit(model, train, val, config.train_config(), events=events)
    test_report = evaluate(model, test) if test else None

    out.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(out / "checkpoint.ptck")
    write_history_csv(out / "history.csv", result.history)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")

    fields = {
        "run": model_config.label,
        "task": str(model_config.task),
        "seed": str(config.seed),
        "parameters": str(parameter_count(model_config)),
        "epochs": str(config.epochs),
        "best_epoch": str(result.best_epoch),
        "best_val_metric": _fmt(result.best_metric),
    }
    for prefix, report in (("train_", result.train_report), ("val_", result.val_report), ("test_", test_report)):
        if report is not None:
            fields.update(report.fields(prefix))
    write_report(out / "report.txt", fields)
    return result, test_report, fields


@tree.command(
    help={
        "task": "the task to generate bags for, overrides the task key",
        "out": "the directory the splits are written to",
    }
)
def gen_data(ctx: Context, task: Literal["classification", "survival"] | None = None, out: Path | None = None) -> int:
    """Generates a synthetic dataset and writes its train, val and test splits."""
    config = ctx.config(task=task, out_dir=out)
    directory = _output(config)

    if config.task is Task.classification:
        records = gen_classification_bags(config.classification_data())
    else:
        records = gen_survival_bags(config.survival_data())

    splits = split_records(records, config.train_size, config.val_size, np.random.default_rng(config.seed))
    for name in SPLITS:
        write_split(directory, name, splits[name], input_dim=config.input_dim)
    (directory / "config.txt").write_text(config.to_text(), encoding="utf-8")

    _echo({f"{name}_bags": str(len(splits[name])) for name in SPLITS})
    return 0


@tree.command(
    help={
        "data": "the directory holding the train, val and optional test splits",
        "out": "the directory the checkpoint, history and report are written to",
    }
)
def train(ctx: Context, data: Path | None = None, out: Path | None = None) -> int:
    """Trains a model and keeps the checkpoint of the best validation epoch."""
    config = ctx.config(data_dir=data, out_dir=out)
    directory = _directory(config, "data_dir", "--data")
    bags = load_split(directory, "train")
    val = load_split(directory, "val")
    test = _optional_split(directory, "test")

    _, _, fields = _train_run(config, bags, val, test, _output(config))
    _echo(fields)
    return 0


@tree.command(
    name="eval",
    help={
        "checkpoint": "the checkpoint to evaluate",
        "data": "the directory holding the split",
        "split": "the split to score",
        "out": "the directory the report is written to, printed only when unset",
    },
)
def evaluate_command(
    ctx: Context, checkpoint: Path, data: Path | None = None, split: str = "test", out: Path | None = None
) -> int:
    """Scores a checkpoint on a split."""
    config = ctx.config(required=(), data_dir=data, out_dir=out)
    model = Checkpoint.load(checkpoint).build_model()
    bags = load_split(_directory(config, "data_dir", "--data"), split)
    _check_input_dim(model.config, bags)

    report = evaluate(model, bags)
    fields = {"run": model.config.label, "task": str(model.config.task), "split": split}
    fields.update(report.fields(f"{split}_"))
    if config.out_dir:
        write_report(_output(config) / f"eval-{split}.txt", fields)
    _echo(fields)
    return 0


@tree.command(
    help={
        "checkpoint": "the checkpoint to adapt",
        "data": "the directory holding the train split the shots are drawn from and the val split",
        "shots": "the number of adaptation bags, overrides the shots key",
        "num_classes": "the class count of the target task, re-initializes the head when it differs",
        "out": "the directory the adapted checkpoint and report are written to",
    }
)
def adapt(
    ctx: Context,
    checkpoint: Path,
    data: Path | None = None,
    shots: int | None = None,
    num_classes: int | None = None,
    out: Path | None = None,
) -> int:
    """Fine-tunes the head and merge scorer of a checkpoint on a few labelled bags."""
    config = ctx.config(required=(), data_dir=data, out_dir=out, shots=shots)
    directory = _directory(config, "data_dir", "--data")
    source = Checkpoint.load(checkpoint)
    pool = load_split(directory, "train")
    val = load_split(directory, "val")
    source_config = ModelConfig.from_dict(source.config)
    _check_input_dim(source_config, pool)
    _check_input_dim(source_config, val)

    plan = config.adaptation_plan()
    chosen = select_shots(pool, plan.shots, np.random.default_rng(plan.seed))
    result = few_shot_adapt(source, chosen, plan, num_classes=num_classes)
    before = None if result.head_reset else evaluate_checkpoint(source, val)
    after = evaluate_checkpoint(result.checkpoint, val)

    output = _output(config)
    result.checkpoint.save(output / "adapted.ptck")

    counts: dict[str, int] = {}
    for bag in chosen:
        key = str(bag.label.time_bin if isinstance(bag.label, SurvivalLabel) else bag.label)
        counts[key] = counts.get(key, 0) + 1

    fields = {
        "shots": str(len(chosen)),
        "shot_labels": ",".join(f"{k}:{v}" for k, v in sorted(counts.items())),
        "trainable": ",".join(plan.trainable.names()),
        "steps": str(result.steps),
        "head_reset": str(result.head_reset).lower(),
        "frozen_arrays": str(len(result.frozen)),
        "frozen_verified": "true",
    }
    if before is not None:
        fields.update(before.fields("before_"))
    fields.update(after.fields("after_"))
    if before is not None:
        fields["metric_change"] = _fmt(compare_reports(before, after))
    write_report(output / "adapt_report.txt", fields)
    (output / "shots.txt").write_text("".join(f"{b.bag_id}\n" for b in chosen), encoding="utf-8")
    _echo(fields)
    return 0


@tree.command(
    help={
        "checkpoint": "the checkpoint whose cluster assignments are exported",
        "data": "the directory holding the split",
        "split": "the split to export",
        "out": "the directory clusters.csv and cluster_sizes.csv are written to",
    }
)
def export_clusters(
    ctx: Context, checkpoint: Path, data: Path | None = None, split: str = "test", out: Path | None = None
) -> int:
    """Writes the cluster of every patch, and the cluster sizes of every bag, as CSV."""
    config = ctx.config(required=(), data_dir=data, out_dir=out)
    model = Checkpoint.load(checkpoint).build_model()
    if model.bank is None:
        raise ConfigError(["clustering: the checkpoint was trained without clustering, there are no clusters to export"])
    bags = load_split(_directory(config, "data_dir", "--data"), split)
    _check_input_dim(model.config, bags)
    output = _output(config)

    empty = 0
    with open(output / "clusters.csv", "w", newline="", encoding="utf-8") as patches, open(
        output / "cluster_sizes.csv", "w", newline="", encoding="utf-8"
    ) as sizes:
        patch_writer = csv.writer(patches, lineterminator="\n")
        size_writer = csv.writer(sizes, lineterminator="\n")
        patch_writer.writerow(("bag_id", "patch_index", "cluster_index", "max_probability"))
        size_writer.writerow(("bag_id", "cluster_index", "size", "empty"))

        for bag in bags:
            forward = model.forward(bag.features)
            assert forward.labels is not None and forward.max_probability is not None
            for index, (cluster, probability) in enumerate(zip(forward.labels, forward.max_probability)):
                patch_writer.writerow((bag.bag_id, index, int(cluster), repr(float(probability))))
            counts = np.bincount(forward.labels, minlength=model.config.clusters)
            for cluster, count in enumerate(counts):
                size_writer.writerow((bag.bag_id, cluster, int(count), int(count == 0)))
            empty += int(np.sum(counts == 0))

    if empty:
        _log.warning("%d empty clusters over %d bags", empty, len(bags))
    _echo({"bags": str(len(bags)), "patches": str(sum(b.instances for b in bags)), "empty_clusters": str(empty)})
    return 0


def model_gradient_errors(
    config: ModelConfig,
    *,
    instances: int = 12,
    seed: int = 0,
    inject_fault: bool = False,
) -> dict[str, float]:
    """Checks the gradients of the full training objective of a fresh model on a random bag.

    The prompts and their shadow are moved off the orthonormal start, where the
    regularizer has a kink. With ``inject_fault`` one gradient is doubled before the
    comparison.
    """
    rng = np.random.default_rng(seed)
    model = PTCMIL(config, rng)
    if model.bank is not None:
        model.bank.prompts.values += 0.1 * rng.normal(size=model.bank.prompts.shape)
        model.bank.shadow = model.bank.prompts.values + 0.1 * rng.normal(size=model.bank.prompts.shape)

    label = 1 if config.task is Task.classification else SurvivalLabel(config.num_bins // 2, 0)
    bag = BagRecord("gradcheck", rng.normal(size=(instances, config.input_dim)), label)
    params = model.params.trainable()

    def objective(_: Sequence[Tensor]) -> Tensor:
        total, _, _ = training_objective(model, bag, commit=False)
        return total

    def fault(grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        name = "head.weight"
        grads[name] = grads[name] * 2.0
        return grads

    return finite_diff_errors(objective, params, 1e-5, floor=GRADCHECK_FLOOR, grad_hook=fault if inject_fault else None)


@tree.command(
    help={
        "task": "the task heads to check",
        "embed_dim": "the token dimension of the checked model",
        "clusters": "the number of prompt tokens of the checked model",
        "heads": "the number of attention heads of the checked model",
        "input_dim": "the instance feature dimension of the checked model",
        "instances": "the number of instances of the checked bag",
        "threshold": "the largest accepted relative error",
        "inject_fault": "double one gradient to verify the check fails",
        "out": "the directory the report is written to, printed only when unset",
    }
)
def gradcheck(
    ctx: Context,
    task: Literal["classification", "survival", "all"] = "all",
    embed_dim: int = 16,
    clusters: int = 3,
    heads: int = 2,
    input_dim: int = 8,
    instances: int = 12,
    threshold: float = GRADCHECK_THRESHOLD,
    inject_fault: bool = False,
    out: Path | None = None,
) -> int:
    """Compares reverse-mode gradients with central finite differences over every trainable scalar."""
    config = ctx.config(required=(), out_dir=out)
    tasks = [Task.classification, Task.survival] if task == "all" else [Task(task)]

    fields: dict[str, str] = {}
    worst = 0.0
    for current in tasks:
        model_config = config.replace(
            task=current, embed_dim=embed_dim, clusters=clusters, heads=heads, input_dim=input_dim
        ).model_config()
        errors = model_gradient_errors(model_config, instances=instances, seed=config.seed, inject_fault=inject_fault)
        largest = max(errors.values(), default=0.0)
        worst = max(worst, largest)
        fields[f"{current}_max_error"] = repr(largest)
        fields[f"{current}_worst_parameter"] = max(errors, key=errors.__getitem__) if errors else ""
        _log.info("Gradient check of the %s objective: max relative error %.3e", current, largest)

    passed = worst < threshold
    fields["threshold"] = repr(threshold)
    fields["status"] = "pass" if passed else "fail"
    if config.out_dir:
        write_report(_output(config) / "gradcheck.txt", fields)
    _echo(fields)

    if not passed:
        raise NumericFailure(f"gradient check failed: max relative error {worst:.3e} exceeds {threshold:.1e}")
    return 0


def _summary(values: Sequence[float | None]) -> tuple[str, str]:
    known = [v for v in values if v is not None]
    if not known:
        return "nan", "nan"
    return repr(float(np.mean(known))), repr(float(np.std(known)))


@tree.command(
    help={
        "data": "the directory holding the train, val and optional test splits",
        "folds": "the number of folds, overrides the folds key",
        "out": "the directory the per-fold runs and the summary are written to",
    }
)
def crossval(ctx: Context, data: Path | None = None, folds: int | None = None, out: Path | None = None) -> int:
    """Trains one model per seeded fold of the train and val bags and summarizes the folds."""
    config = ctx.config(data_dir=data, out_dir=out, folds=folds)
    directory = _directory(config, "data_dir", "--data")
    pool = load_split(directory, "train") + load_split(directory, "val")
    test = _optional_split(directory, "test")
    output = _output(config)

    rows: list[tuple[int, int, float | None, float | None]] = []
    for k, (fold_train, fold_val) in enumerate(kfold(pool, config.folds, np.random.default_rng(config.seed))):
        _log.info("Fold %d/%d: %d train, %d val bags", k + 1, config.folds, len(fold_train), len(fold_val))
        result, test_report, _ = _train_run(config, fold_train, fold_val, test, output / f"fold-{k}")
        rows.append((k, result.best_epoch, result.best_metric, test_report.metric if test_report else None))

    with open(output / "crossval.csv", "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(("fold", "best_epoch", "val_metric", "test_metric"))
        for fold, epoch, val_metric, test_metric in rows:
            writer.writerow((fold, epoch, _fmt(val_metric), _fmt(test_metric)))

    val_mean, val_std = _summary([r[2] for r in rows])
    test_mean, test_std = _summary([r[3] for r in rows])
    fields = {
        "folds": str(len(rows)),
        "val_metric_mean": val_mean,
        "val_metric_std": val_std,
        "test_metric_mean": test_mean,
        "test_metric_std": test_std,
    }
    write_report(output / "summary.txt", fields)
    _echo(fields)
    return 0


def _cluster_counts(raw: str) -> list[int]:
    try:
        counts = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError([f"clusters: expected a comma separated list of integers, got {raw!r}"]) from None
    if not counts:
        raise ConfigError(["clusters: no cluster count given"])
    return counts


@tree.command(
    help={
        "data": "the directory holding the train, val and optional test splits",
        "clusters": "the comma separated cluster counts to train",
        "out": "the directory the per-count runs and sweep.csv are written to",
    }
)
def sweep_clusters(ctx: Context, data: Path | None = None, clusters: str = "3,5,7,9", out: Path | None = None) -> int:
    """Trains one model per cluster count and tabulates the validation and test metrics."""
    config = ctx.config(data_dir=data, out_dir=out)
    counts = _cluster_counts(clusters)
    directory = _directory(config, "data_dir", "--data")
    bags = load_split(directory, "train")
    val = load_split(directory, "val")
    test = _optional_split(directory, "test")
    output = _output(config)

    rows: list[tuple[int, float | None, float | None]] = []
    for count in counts:
        result, test_report, _ = _train_run(config.replace(clusters=count), bags, val, test, output / f"clusters-{count}")
        rows.append((count, result.best_metric, test_report.metric if test_report else None))

    with open(output / "sweep.csv", "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(("clusters", "val_metric", "test_metric"))
        for count, val_metric, test_metric in rows:
            writer.writerow((count, _fmt(val_metric), _fmt(test_metric)))

    _echo({f"clusters_{c}": f"val {_fmt(v)} test {_fmt(t)}" for c, v, t in rows})
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    """Runs the command named in ``argv`` and returns the process exit code."""
    try:
        command, context, namespace = tree.dispatch(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except PtcmilException as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code

    setup_logging(context.log_level)
    try:
        return command.invoke(context, namespace)
    except PtcmilException as exc:
        _log.error("%s failed: %s", command.name, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
