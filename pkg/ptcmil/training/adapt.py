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

import logging
import numbers
from collections.abc import Sequence
from typing import TYPE_CHECKING

import numpy as np

from ptcmil.enums import Task
from ptcmil.errors import DataError, NumericFailure
from ptcmil.flags import ParamGroup

from .checkpoint import Checkpoint
from .loop import EvalReport, LossBreakdown, evaluate, train_step
from .optim import AdamW, CosineSchedule

if TYPE_CHECKING:
    from ptcmil.data.records import BagRecord

_log = logging.getLogger(__name__)

__all__ = (
    "AdaptationPlan",
    "AdaptationResult",
    "select_shots",
    "few_shot_adapt",
    "compare_reports",
    "evaluate_checkpoint",
)


class AdaptationPlan:
    """Which parameters a few-shot adaptation may change, and for how long.

    Parameters
    ----------
    shots: :class:`int`
        The number of adaptation bags.
    groups: :class:`ParamGroup`
        The trainable groups. Defaults to the task head and the merge scorer.
    include_prompts: :class:`bool`
        Whether the prompts are trainable too.
    epochs: :class:`int`
        The number of passes over the adaptation bags.
    lr: :class:`float`
        The starting learning rate of the cosine schedule.
    weight_decay: :class:`float`
        The decoupled weight decay.
    seed: :class:`int`
        The seed of the shot selection, the head re-initialization and the shuffling.
    """

    __slots__ = ("shots", "groups", "include_prompts", "epochs", "lr", "weight_decay", "seed")

    def __init__(
        self,
        *,
        shots: int = 20,
        groups: ParamGroup = ParamGroup.adaptation,
        include_prompts: bool = False,
        epochs: int = 10,
        lr: float = 1e-3,
        weight_decay: float = 1e-5,
        seed: int = 0,
    ) -> None:
        if shots < 0:
            raise ValueError(f"shot count must be non-negative, got {shots}")
        if epochs < 0:
            raise ValueError(f"epoch count must be non-negative, got {epochs}")
        self.shots: int = shots
        self.groups: ParamGroup = groups
        self.include_prompts: bool = include_prompts
        self.epochs: int = epochs
        self.lr: float = lr
        self.weight_decay: float = weight_decay
        self.seed: int = seed

    def __repr__(self) -> str:
        return f"<AdaptationPlan shots={self.shots} groups={self.trainable} epochs={self.epochs}>"

    @property
    def trainable(self) -> ParamGroup:
        groups = self.groups
        if self.include_prompts:
            groups |= ParamGroup.prompts
        return groups


class AdaptationResult:
    """The outcome of :func:`few_shot_adapt`."""

    __slots__ = ("checkpoint", "frozen", "steps", "head_reset", "losses")

    def __init__(self, checkpoint: Checkpoint, frozen: list[str], steps: int, head_reset: bool, losses: list[LossBreakdown]) -> None:
        self.checkpoint: Checkpoint = checkpoint
        """The adapted state."""
        self.frozen: list[str] = frozen
        """The parameters verified bitwise unchanged."""
        self.steps: int = steps
        """The number of optimizer steps taken."""
        self.head_reset: bool = head_reset
        """Whether the task head was re-initialized for a new class count."""
        self.losses: list[LossBreakdown] = losses


def select_shots(bags: Sequence[BagRecord], shots: int, rng: np.random.Generator) -> list[BagRecord]:
    """Draws ``shots`` bags without replacement.

    Classification bags are drawn balanced over the classes present, earlier classes
    taking the remainder. Other bags are drawn uniformly.

    Raises :exc:`DataError` if there are fewer bags, or fewer bags of a class, than requested.
    """
    if shots > len(bags):
        raise DataError(f"requested {shots} shots from {len(bags)} bags")

    if not all(isinstance(b.label, numbers.Integral) for b in bags):
        order = rng.permutation(len(bags))[:shots]
        return [bags[int(i)] for i in sorted(order)]

    classes = sorted({int(b.label) for b in bags})  # type: ignore
    per_class, extra = divmod(shots, len(classes))
    picked: list[int] = []
    for position, cls in enumerate(classes):
        want = per_class + (1 if position < extra else 0)
        members = [i for i, b in enumerate(bags) if b.label == cls]
        if want > len(members):
            raise DataError(f"requested {want} shots of class {cls}, only {len(members)} available")
        picked.extend(members[int(i)] for i in rng.choice(len(members), size=want, replace=False))

    return [bags[i] for i in sorted(picked)]


def few_shot_adapt(
    checkpoint: Checkpoint,
    bags: Sequence[BagRecord],
    plan: AdaptationPlan,
    *,
    num_classes: int | None = None,
) -> AdaptationResult:
    """Fine-tunes the plan's trainable groups of ``checkpoint`` on ``bags``.

    With a ``num_classes`` different from the checkpoint's, the task head is
    re-initialized first. Every other parameter is frozen, and verified bitwise
    unchanged afterwards.

    Raises :exc:`NumericFailure` if a frozen parameter changed.
    """
    rng = np.random.default_rng(plan.seed)
    model = checkpoint.build_model()

    head_reset = False
    if num_classes is not None and model.config.task is Task.classification and num_classes != model.config.num_classes:
        model.reset_head(num_classes, rng)
        head_reset = True

    model.params.set_trainable(plan.trainable)
    frozen = {e.name: e.parameter.values.tobytes() for e in model.params.entries() if e.frozen}
    shadow = model.bank.shadow.tobytes() if model.bank is not None and model.params.is_frozen("prompts") else None

    losses: list[LossBreakdown] = []
    steps = plan.epochs * len(bags)
    if steps:
        optimizer = AdamW(model.params, lr=plan.lr, weight_decay=plan.weight_decay)
        schedule = CosineSchedule(plan.lr, steps)
        step = 0
        for _ in range(plan.epochs):
            for index in rng.permutation(len(bags)):
                losses.append(train_step(model, bags[int(index)], optimizer, schedule(step)))
                step += 1

    changed = [name for name, raw in frozen.items() if model.params[name].values.tobytes() != raw]
    if shadow is not None and model.bank is not None and model.bank.shadow.tobytes() != shadow:
        changed.append("prompt shadow")
    if changed:
        raise NumericFailure(f"frozen parameters changed during adaptation: {', '.join(changed)}")

    _log.info("Adapted %s over %d steps, %d arrays verified frozen", plan.trainable, steps, len(frozen))
    if not steps and not head_reset:
        return AdaptationResult(checkpoint, sorted(frozen), 0, False, losses)

    meta = dict(checkpoint.meta)
    meta.update(adapted_shots=len(bags), adapted_steps=steps)
    return AdaptationResult(Checkpoint.capture(model, None, **meta), sorted(frozen), steps, head_reset, losses)


def compare_reports(before: EvalReport, after: EvalReport) -> float | None:
    """The change of the selection metric, ``None`` if either side is undefined."""
    if before.metric is None or after.metric is None:
        return None
    return after.metric - before.metric


def evaluate_checkpoint(checkpoint: Checkpoint, bags: Sequence[BagRecord]) -> EvalReport:
    return evaluate(checkpoint.build_model(), bags)
