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
import math
import numbers
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ptcmil.clustering import ema_update, reg_loss
from ptcmil.enums import Task
from ptcmil.errors import ConfigError, DataError, MetricError
from ptcmil.heads import SurvivalLabel
from ptcmil.metrics import accuracy, auc, c_index
from ptcmil.tensor import Tensor, backward

from .checkpoint import Checkpoint
from .events import TrainingEvents
from .optim import AdamW, CosineSchedule

if TYPE_CHECKING:
    from ptcmil.data.records import BagRecord
    from ptcmil.model import PTCMIL

_log = logging.getLogger(__name__)

__all__ = (
    "TrainConfig",
    "LossBreakdown",
    "EpochRecord",
    "EvalReport",
    "FitResult",
    "training_objective",
    "train_step",
    "evaluate",
    "fit",
    "write_history_csv",
    "HISTORY_COLUMNS",
)

HISTORY_COLUMNS = ("epoch", "train_loss", "task_loss", "reg_loss", "val_metric", "lr")


class TrainConfig:
    """The optimization settings of a run.

    Parameters
    ----------
    epochs: :class:`int`
        The number of passes over the training bags.
    lr: :class:`float`
        The starting learning rate of the cosine schedule.
    weight_decay: :class:`float`
        The decoupled weight decay.
    min_lr: :class:`float`
        The learning rate the schedule ends at.
    seed: :class:`int`
        The seed of the per-epoch shuffling.
    """

    __slots__ = ("epochs", "lr", "weight_decay", "min_lr", "seed")

    def __init__(
        self,
        *,
        epochs: int = 30,
        lr: float = 2e-4,
        weight_decay: float = 1e-5,
        min_lr: float = 0.0,
        seed: int = 0,
    ) -> None:
        self.epochs: int = int(epochs)
        self.lr: float = float(lr)
        self.weight_decay: float = float(weight_decay)
        self.min_lr: float = float(min_lr)
        self.seed: int = int(seed)

        problems: list[str] = []
        if self.epochs < 0:
            problems.append(f"epochs: must be non-negative, got {self.epochs}")
        if not self.lr >= 0:
            problems.append(f"lr: must be non-negative, got {self.lr}")
        if not self.weight_decay >= 0:
            problems.append(f"weight_decay: must be non-negative, got {self.weight_decay}")
        if not 0 <= self.min_lr <= max(self.lr, 0.0):
            problems.append(f"min_lr: must lie in [0, lr], got {self.min_lr}")
        if problems:
            raise ConfigError(problems)

    def __repr__(self) -> str:
        return f"<TrainConfig epochs={self.epochs} lr={self.lr} weight_decay={self.weight_decay} seed={self.seed}>"


class LossBreakdown:
    """The loss components of one training step."""

    __slots__ = ("total", "task", "reg", "lr")

    def __init__(self, total: float, task: float, reg: float, lr: float) -> None:
        self.total: float = total
        """The optimized objective."""
        self.task: float = task
        """The cross-entropy or survival likelihood term."""
        self.reg: float = reg
        """The unweighted prompt regularizer."""
        self.lr: float = lr
        """The learning rate the step was taken with."""

    def __repr__(self) -> str:
        return f"<LossBreakdown total={self.total:.6f} task={self.task:.6f} reg={self.reg:.6f}>"


class EpochRecord:
    __slots__ = HISTORY_COLUMNS

    def __init__(self, epoch: int, train_loss: float, task_loss: float, reg_loss: float, val_metric: float, lr: float) -> None:
        self.epoch: int = epoch
        self.train_loss: float = train_loss
        self.task_loss: float = task_loss
        self.reg_loss: float = reg_loss
        self.val_metric: float = val_metric
        self.lr: float = lr

    def __repr__(self) -> str:
        return f"<EpochRecord epoch={self.epoch} train_loss={self.train_loss:.6f} val_metric={self.val_metric:.6f}>"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EpochRecord) and self.row() == other.row()

    def row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, c))) for c in HISTORY_COLUMNS[1:]]


class EvalReport:
    """Metrics of a model over a set of bags.

    Attributes
    ----------
    task: :class:`Task`
        The task of the model.
    count: :class:`int`
        The number of bags scored.
    loss: :class:`float`
        The mean task loss, without the regularizer.
    accuracy: :class:`float` | :data:`None`
        The fraction of correctly classified bags.
    auc: :class:`float` | :data:`None`
        The area under the ROC curve of the class 1 probability, ``None`` when undefined.
    c_index: :class:`float` | :data:`None`
        The concordance of the cumulative hazard with the time bins, ``None`` when undefined.
    scores: list[:class:`float`]
        The ranking score of every bag, in input order.
    """

    __slots__ = ("task", "count", "loss", "accuracy", "auc", "c_index", "scores")

    def __init__(
        self,
        task: Task,
        count: int,
        loss: float,
        scores: list[float],
        *,
        accuracy: float | None = None,
        auc: float | None = None,
        c_index: float | None = None,
    ) -> None:
        self.task: Task = task
        self.count: int = count
        self.loss: float = loss
        self.scores: list[float] = scores
        self.accuracy: float | None = accuracy
        self.auc: float | None = auc
        self.c_index: float | None = c_index

    def __repr__(self) -> str:
        return f"<EvalReport task={self.task} count={self.count} metric={self.metric}>"

    @property
    def metric_name(self) -> str:
        return "auc" if self.task is Task.classification else "c_index"

    @property
    def metric(self) -> float | None:
        """The model selection metric: AUC for classification, c-index for survival."""
        return self.auc if self.task is Task.classification else self.c_index

    def fields(self, prefix: str = "") -> dict[str, str]:
        """Returns the report as ordered ``key: value`` fields, every key prefixed by ``prefix``."""
        out = {f"{prefix}count": str(self.count), f"{prefix}loss": repr(self.loss)}
        if self.task is Task.classification:
            out[f"{prefix}accuracy"] = _fmt(self.accuracy)
            out[f"{prefix}auc"] = _fmt(self.auc)
        else:
            out[f"{prefix}c_index"] = _fmt(self.c_index)
        return out


def _fmt(value: float | None) -> str:
    return "nan" if value is None else repr(value)


class FitResult:
    """The outcome of :func:`fit`.

    Attributes
    ----------
    checkpoint: :class:`Checkpoint`
        The state of the best validation epoch, or the initial state without epochs.
    history: list[:class:`EpochRecord`]
        One record per epoch.
    best_epoch: :class:`int`
        The epoch of :attr:`checkpoint`, ``0`` for the initial state.
    best_metric: :class:`float` | :data:`None`
        The validation metric of :attr:`checkpoint`.
    train_report: :class:`EvalReport` | :data:`None`
        The metrics of :attr:`checkpoint` on the training bags.
    val_report: :class:`EvalReport` | :data:`None`
        The metrics of :attr:`checkpoint` on the validation bags.
    """

    __slots__ = ("checkpoint", "history", "best_epoch", "best_metric", "train_report", "val_report")

    def __init__(
        self,
        checkpoint: Checkpoint,
        history: list[EpochRecord],
        best_epoch: int,
        best_metric: float | None,
        train_report: EvalReport | None = None,
        val_report: EvalReport | None = None,
    ) -> None:
        self.checkpoint: Checkpoint = checkpoint
        self.history: list[EpochRecord] = history
        self.best_epoch: int = best_epoch
        self.best_metric: float | None = best_metric
        self.train_report: EvalReport | None = train_report
        self.val_report: EvalReport | None = val_report


def training_objective(model: PTCMIL, bag: BagRecord, *, commit: bool = True) -> tuple[Tensor, Tensor, Tensor | None]:
    """Builds the training loss of ``bag`` on the tape.

    The prompt shadow moves towards the current prompts first and the regularizer is taken
    on the moved shadow, so its gradient reaches the prompts through the current term only.
    The shadow stays put while the prompts are frozen. Without ``commit`` the shadow is not
    written back, which keeps repeated evaluations identical.

    Returns
    -------
    tuple[:class:`Tensor`, :class:`Tensor`, :class:`Tensor` | :data:`None`]
        The total loss, the task loss and the regularizer.
    """
    if bag.label is None:
        raise DataError(f"bag {bag.bag_id!r} has no label")

    trace = model.trace(bag.features, training=True)
    reg: Tensor | None = None
    if model.bank is not None:
        if model.params.is_frozen("prompts"):
            reg = model.reg_value()
        else:
            reg = reg_loss(ema_update(model.bank, model.bank.prompts, commit=commit), model.config.gram)

    total = model.task_loss(trace.logits, bag.label, reg if reg is not None else 0.0)
    task = model.task_loss(trace.logits, bag.label, 0.0, 0.0)
    return total, task, reg


def train_step(model: PTCMIL, bag: BagRecord, optimizer: AdamW, lr: float | None = None) -> LossBreakdown:
    """Takes one batch-size-1 optimization step on ``bag``.

    Gradients are zeroed, the objective is built and differentiated, and the optimizer
    updates every unfrozen parameter.
    """
    model.params.zero_grad()
    total, task, reg = training_objective(model, bag)
    backward(total, model.params.trainable())
    step_lr = optimizer.lr if lr is None else lr
    optimizer.step(step_lr)

    breakdown = LossBreakdown(total.item(), task.item(), reg.item() if reg is not None else 0.0, step_lr)
    _log.debug("Step on %s: %r", bag.bag_id, breakdown)
    return breakdown


def evaluate(model: PTCMIL, bags: Sequence[BagRecord]) -> EvalReport:
    """Scores ``bags`` in inference mode.

    Metrics that are undefined for the bags, like the AUC of a single class, are ``None``.
    """
    if not bags:
        raise DataError("can not evaluate an empty set of bags")

    task = model.config.task
    losses: list[float] = []
    scores: list[float] = []
    predictions: list[int] = []
    for bag in bags:
        output = model.forward(bag.features, label=bag.label)
        if output.task_loss is not None:
            losses.append(output.task_loss)
        scores.append(model.score(output))
        predictions.append(output.prediction)

    loss = float(np.mean(losses)) if losses else math.nan
    if task is Task.classification:
        labels = [b.label for b in bags]
        if any(not isinstance(y, numbers.Integral) for y in labels):
            return EvalReport(task, len(bags), loss, scores)
        acc = accuracy(predictions, [int(y) for y in labels])  # type: ignore
        try:
            area = auc(scores, [int(y == 1) for y in labels])  # type: ignore
        except MetricError as exc:
            _log.warning("AUC is undefined: %s", exc)
            area = None
        return EvalReport(task, len(bags), loss, scores, accuracy=acc, auc=area)

    survival = [b.label for b in bags]
    if any(not isinstance(y, SurvivalLabel) for y in survival):
        return EvalReport(task, len(bags), loss, scores)
    try:
        ci = c_index(
            scores,
            [y.time_bin for y in survival],  # type: ignore
            [y.censorship for y in survival],  # type: ignore
        )
    except MetricError as exc:
        _log.warning("c-index is undefined: %s", exc)
        ci = None
    return EvalReport(task, len(bags), loss, scores, c_index=ci)


def fit(
    model: PTCMIL,
    train: Sequence[BagRecord],
    val: Sequence[BagRecord],
    config: TrainConfig,
    *,
    events: TrainingEvents | None = None,
    optimizer: AdamW | None = None,
) -> FitResult:
    """Trains ``model`` with batch size one and keeps the best validation epoch.

    Each epoch visits the training bags in a seeded random order under a cosine schedule
    spanning every step of the run. After each epoch the validation metric is computed;
    only a strictly better metric replaces the best checkpoint, so ties keep the earlier
    epoch. On return ``model`` holds the best state.
    """
    if not train or not val:
        raise DataError("fit needs non-empty training and validation bags")

    events = events or TrainingEvents()
    optimizer = optimizer or AdamW(model.params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)

    best = Checkpoint.capture(model, optimizer, epoch=0)
    best_epoch = 0
    best_metric: float | None = None
    history: list[EpochRecord] = []

    if config.epochs == 0:
        return FitResult(best, history, 0, None)

    schedule = CosineSchedule(config.lr, config.epochs * len(train), config.min_lr)
    step = 0
    for epoch in range(1, config.epochs + 1):
        totals = np.zeros(3)
        lr = config.lr
        for index in rng.permutation(len(train)):
            lr = schedule(step)
            breakdown = train_step(model, train[int(index)], optimizer, lr)
            step += 1
            totals += (breakdown.total, breakdown.task, breakdown.reg)
            events.invoke("step", epoch, step, breakdown)

        report = evaluate(model, val)
        metric = report.metric
        means = totals / len(train)
        record = EpochRecord(epoch, float(means[0]), float(means[1]), float(means[2]), math.nan if metric is None else metric, lr)
        history.append(record)
        _log.info(
            "Epoch %d/%d: train loss %.4f, val %s %s", epoch, config.epochs, record.train_loss, report.metric_name, metric
        )
        events.invoke("epoch_end", record)

        if metric is not None and (best_metric is None or metric > best_metric):
            best = Checkpoint.capture(model, optimizer, epoch=epoch, metric=metric)
            best_epoch = epoch
            best_metric = metric
            events.invoke("best", epoch, metric)

    best.restore(model)
    result = FitResult(best, history, best_epoch, best_metric)
    result.train_report = evaluate(model, train)
    result.val_report = evaluate(model, val)
    return result


def write_history_csv(path: str | Path, history: Sequence[EpochRecord]) -> None:
    """Writes one row per epoch under the columns of :data:`HISTORY_COLUMNS`."""
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for record in history:
            writer.writerow(record.row())
    _log.info("Wrote %d history rows to %s", len(history), path)
