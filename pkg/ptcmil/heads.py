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

from typing import Any

import numpy as np
import numpy.typing as npt

from .enums import PoolingMode
from .errors import DataError, ShapeError
from .flags import ParamGroup
from .nn.layers import Linear
from .nn.params import ModelParams
from .tensor import Tensor, ops

__all__ = (
    "SurvivalLabel",
    "PooledRepresentation",
    "TaskHead",
    "HazardVector",
    "pool",
    "pool_and_predict",
    "cross_entropy",
    "classification_loss",
    "hazards_and_survival",
    "survival_loss",
    "survival_objective",
    "risk_scores",
)


class SurvivalLabel:
    """A discrete-time survival label.

    Parameters
    ----------
    time_bin: :class:`int`
        The index of the time interval the observation time falls in.
    censorship: :class:`int`
        ``1`` if the patient outlived the follow-up, so the event time is unknown, else ``0``.
    """

    __slots__ = ("time_bin", "censorship")

    def __init__(self, time_bin: int, censorship: int) -> None:
        if int(time_bin) != time_bin or time_bin < 0:
            raise ValueError(f"time bin must be a non-negative integer, got {time_bin!r}")
        if censorship not in (0, 1):
            raise ValueError(f"censorship must be 0 or 1, got {censorship!r}")
        self.time_bin: int = int(time_bin)
        self.censorship: int = int(censorship)

    def __repr__(self) -> str:
        return f"<SurvivalLabel time_bin={self.time_bin} censorship={self.censorship}>"

    def __eq__(self, other: Any) -> bool:
        return (
            isinstance(other, SurvivalLabel)
            and self.time_bin == other.time_bin
            and self.censorship == other.censorship
        )

    def __hash__(self) -> int:
        return hash((self.time_bin, self.censorship))

    @property
    def censored(self) -> bool:
        return self.censorship == 1


class PooledRepresentation:
    """The tokens selected by a pooling mode and their mean."""

    __slots__ = ("tokens", "pooled", "mode")

    def __init__(self, tokens: Tensor, pooled: Tensor, mode: PoolingMode) -> None:
        self.tokens: Tensor = tokens
        """The selected tokens, the class token first when present."""
        self.pooled: Tensor = pooled
        """The mean of :attr:`tokens`."""
        self.mode: PoolingMode = mode


class TaskHead:
    """The linear layer mapping a pooled vector to class logits or hazard logits."""

    def __init__(self, registry: ModelParams, dim: int, outputs: int, rng: np.random.Generator) -> None:
        self.outputs: int = outputs
        self.linear: Linear = Linear(registry, "head", dim, outputs, rng, group=ParamGroup.head)

    def __call__(self, pooled: Tensor) -> Tensor:
        return self.linear(pooled)


def pool(cls1: Tensor | None, prototypes: Tensor | None, mode: PoolingMode) -> PooledRepresentation:
    """Selects the tokens of ``mode`` and averages them.

    ``pro`` uses the prototypes, ``cls`` the refined class token and ``pro+cls`` the class
    token followed by the prototypes.
    """
    parts: list[Tensor] = []
    if mode.uses_cls:
        if cls1 is None:
            raise ShapeError("pool", detail=f"mode {mode} needs the class token")
        parts.append(cls1.reshape(1, cls1.shape[-1]))
    if mode.uses_prototypes:
        if prototypes is None:
            raise ShapeError("pool", detail=f"mode {mode} needs prototypes")
        parts.append(prototypes)

    tokens = parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)
    return PooledRepresentation(tokens, tokens.mean(axis=0), mode)


def pool_and_predict(cls1: Tensor | None, prototypes: Tensor | None, mode: PoolingMode, head: TaskHead) -> Tensor:
    return head(pool(cls1, prototypes, mode).pooled)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """The softmax cross-entropy of a logit vector against a class index."""
    if logits.ndim != 1:
        raise ShapeError("cross_entropy", logits.shape, detail="expected a logit vector")
    if not 0 <= label < logits.shape[0]:
        raise DataError(f"class label {label} is out of range for {logits.shape[0]} classes")
    return -ops.log_softmax(logits, axis=0)[int(label)]


def classification_loss(logits: Tensor, label: int, reg_value: Tensor | float, alpha: float) -> Tensor:
    """Cross-entropy plus ``alpha`` times the prompt regularizer."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return cross_entropy(logits, label) + ops.scale(_as_scalar(reg_value), alpha)


def _as_scalar(value: Tensor | float) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(float(value))


class HazardVector:
    """Per-bin hazards and the survival function derived from them.

    Logarithms are computed from the logits directly, so they stay finite for large
    logits of either sign.
    """

    __slots__ = ("logits", "hazards", "log_hazards", "log_survival")

    def __init__(self, logits: Tensor) -> None:
        if logits.ndim != 1:
            raise ShapeError("hazards_and_survival", logits.shape, detail="expected a logit vector")

        bins = logits.shape[0]
        self.logits: Tensor = logits
        """The hazard logits, one per time bin."""
        self.hazards: Tensor = ops.sigmoid(logits)
        """``f_hazard(r)``, the probability of the event in bin ``r`` given survival up to it."""
        self.log_hazards: Tensor = ops.log_sigmoid(logits)
        """``log f_hazard(r)``."""
        self.log_survival: Tensor = ops.matmul(np.tril(np.ones((bins, bins))), ops.log_sigmoid(-logits))
        """``log f_surv(r)``, the cumulative sum of ``log(1 - f_hazard(u))`` for ``u <= r``."""

    def __repr__(self) -> str:
        return f"<HazardVector bins={self.bins}>"

    @classmethod
    def from_hazards(cls, hazards: npt.ArrayLike) -> HazardVector:
        """Builds the vector whose hazards are ``hazards``, each in ``(0, 1)``."""
        h = np.asarray(hazards, dtype=np.float64)
        return cls(Tensor(np.log(h) - np.log1p(-h)))

    @property
    def bins(self) -> int:
        return self.logits.shape[0]

    @property
    def survival(self) -> np.ndarray:
        """``f_surv(r)`` for every bin."""
        return np.exp(self.log_survival.values)

    def risk(self) -> float:
        """The cumulative hazard, higher meaning riskier."""
        return float(self.hazards.values.sum())


def hazards_and_survival(logits: Tensor) -> HazardVector:
    return HazardVector(logits)


def survival_loss(hazard: HazardVector, label: SurvivalLabel) -> Tensor:
    """The negative log-likelihood of a discrete-time survival label.

    For ``Y = label.time_bin`` and ``c = label.censorship`` this is
    ``-c log f_surv(Y) - (1 - c) log f_surv(Y - 1) - (1 - c) log f_hazard(Y)``
    with ``f_surv(-1) = 1``.
    """
    y = label.time_bin
    if y >= hazard.bins:
        raise DataError(f"time bin {y} is out of range for {hazard.bins} bins")

    if label.censored:
        return -hazard.log_survival[y]

    loss = -hazard.log_hazards[y]
    if y > 0:
        loss = loss - hazard.log_survival[y - 1]
    return loss


def survival_objective(logits: Tensor, label: SurvivalLabel, reg_value: Tensor | float, alpha: float) -> Tensor:
    """The survival likelihood loss plus ``alpha`` times the prompt regularizer."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return survival_loss(HazardVector(logits), label) + ops.scale(_as_scalar(reg_value), alpha)


def risk_scores(logits: npt.ArrayLike) -> np.ndarray:
    """The cumulative hazard ``sum_r sigmoid(logit_r)`` along the last axis of ``logits``."""
    z = np.asarray(logits, dtype=np.float64)
    return (0.5 * (1.0 + np.tanh(0.5 * z))).sum(axis=-1)
