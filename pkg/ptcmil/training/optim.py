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
import math
from collections.abc import Mapping

import numpy as np

from ptcmil.errors import GradientError
from ptcmil.nn.params import ModelParams

_log = logging.getLogger(__name__)

__all__ = (
    "AdamW",
    "adam_step",
    "cosine_lr",
    "CosineSchedule",
)


class AdamW:
    """The state of Adam with decoupled weight decay.

    Moments are created lazily, the first time a parameter is updated, so frozen
    parameters never get any.

    Parameters
    ----------
    params: :class:`ModelParams`
        The registry this optimizer updates.
    lr: :class:`float`
        The base learning rate, used when :meth:`step` is not given one.
    weight_decay: :class:`float`
        The decoupled weight decay factor.
    betas: tuple[:class:`float`, :class:`float`]
        The decay rates of the first and second moments.
    eps: :class:`float`
        The term added to the denominator.
    """

    def __init__(
        self,
        params: ModelParams,
        *,
        lr: float = 2e-4,
        weight_decay: float = 1e-5,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params: ModelParams = params
        self.lr: float = lr
        self.weight_decay: float = weight_decay
        self.betas: tuple[float, float] = betas
        self.eps: float = eps
        self.t: int = 0
        """The number of steps taken."""
        self.m: dict[str, np.ndarray] = {}
        """The first moments, keyed by parameter name."""
        self.v: dict[str, np.ndarray] = {}
        """The second moments, keyed by parameter name."""

    def __repr__(self) -> str:
        return f"<AdamW t={self.t} lr={self.lr} weight_decay={self.weight_decay}>"

    def step(self, lr: float | None = None) -> None:
        """Updates every unfrozen parameter from its accumulated gradient."""
        grads = {e.name: e.parameter.grad for e in self.params.entries() if e.parameter.grad is not None}
        adam_step(self.params, grads, self, self.lr if lr is None else lr)

    def hyperparameters(self) -> dict[str, float]:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "beta1": self.betas[0],
            "beta2": self.betas[1],
            "eps": self.eps,
        }


def adam_step(params: ModelParams, grads: Mapping[str, np.ndarray], state: AdamW, lr: float) -> None:
    """Applies one bias-corrected Adam update with decoupled weight decay.

    Every unfrozen parameter first decays as ``p -= lr * weight_decay * p`` and then moves
    by the Adam delta. Frozen parameters and their moments are left untouched. A zero
    ``lr`` leaves the whole state untouched, step count and moments included.

    Raises :exc:`GradientError` naming the first parameter with a non-finite gradient,
    before any parameter is changed.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")

    targets = [e for e in params.entries() if not e.frozen and e.name in grads]
    for entry in targets:
        if not np.all(np.isfinite(grads[entry.name])):
            raise GradientError(entry.name)
    if lr == 0.0:
        return

    state.t += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1**state.t
    correction2 = 1.0 - beta2**state.t

    for entry in targets:
        name = entry.name
        param = entry.parameter
        g = np.asarray(grads[name], dtype=param.values.dtype).reshape(param.shape)

        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(param.values)
            v = np.zeros_like(param.values)

        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v

        values = param.values
        if state.weight_decay:
            values -= lr * state.weight_decay * values
        values -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)

    _log.debug("Adam step %d over %d parameters at lr %.3e", state.t, len(targets), lr)


def cosine_lr(step: int, total: int, base: float, floor: float = 0.0) -> float:
    """The cosine-annealed learning rate ``floor + (base - floor) * (1 + cos(pi * step / total)) / 2``."""
    if total <= 0:
        raise ValueError(f"cosine schedule needs a positive number of steps, got {total}")
    if not 0 <= step <= total:
        raise ValueError(f"step {step} is outside the schedule of {total} steps")
    return floor + (base - floor) * 0.5 * (1.0 + math.cos(math.pi * step / total))


class CosineSchedule:
    """A cosine learning rate schedule over a fixed number of steps."""

    __slots__ = ("base", "total", "floor")

    def __init__(self, base: float, total: int, floor: float = 0.0) -> None:
        if total <= 0:
            raise ValueError(f"cosine schedule needs a positive number of steps, got {total}")
        self.base: float = base
        self.total: int = total
        self.floor: float = floor

    def __call__(self, step: int) -> float:
        return cosine_lr(min(step, self.total), self.total, self.base, self.floor)
