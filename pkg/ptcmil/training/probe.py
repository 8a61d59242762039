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

from ptcmil.errors import DataError
from ptcmil.flags import ParamGroup
from ptcmil.metrics import auc
from ptcmil.nn import Linear, ModelParams
from ptcmil.tensor import Tensor, backward, ops

from .optim import AdamW

if TYPE_CHECKING:
    from ptcmil.data.records import BagRecord

_log = logging.getLogger(__name__)

__all__ = (
    "MeanPoolProbe",
    "fit_mean_pool_probe",
)


def _mean_features(bags: Sequence[BagRecord]) -> np.ndarray:
    return np.stack([b.features.mean(axis=0) for b in bags])


class MeanPoolProbe:
    """A logistic regression on the standardized per-bag mean of the instance features.

    It has no access to individual instances, so a few witnesses in a large bag are
    averaged away.
    """

    __slots__ = ("params", "linear", "center", "spread", "losses")

    def __init__(self, input_dim: int, center: np.ndarray, spread: np.ndarray, rng: np.random.Generator) -> None:
        self.params: ModelParams = ModelParams()
        self.linear: Linear = Linear(self.params, "probe", input_dim, 1, rng, group=ParamGroup.head)
        self.center: np.ndarray = center
        self.spread: np.ndarray = spread
        self.losses: list[float] = []

    def __repr__(self) -> str:
        return f"<MeanPoolProbe input_dim={self.linear.in_dim} steps={len(self.losses)}>"

    def _logits(self, means: np.ndarray) -> Tensor:
        x = Tensor((means - self.center) / self.spread)
        return ops.reshape(self.linear(x), (means.shape[0],))

    def scores(self, bags: Sequence[BagRecord]) -> np.ndarray:
        """The probability of class 1 for every bag."""
        z = self._logits(_mean_features(bags)).numpy()
        return 1.0 / (1.0 + np.exp(-z))

    def auc(self, bags: Sequence[BagRecord]) -> float:
        return auc(self.scores(bags), [int(b.label == 1) for b in bags])


def fit_mean_pool_probe(
    bags: Sequence[BagRecord],
    *,
    steps: int = 300,
    lr: float = 0.05,
    weight_decay: float = 1e-4,
    seed: int = 0,
) -> MeanPoolProbe:
    """Trains a :class:`MeanPoolProbe` on binary labelled ``bags`` with full-batch AdamW.

    Raises :exc:`DataError` if a bag is not labelled 0 or 1.
    """
    if not bags:
        raise DataError("can not fit a probe on an empty set of bags")
    labels = np.array([int(b.label) if isinstance(b.label, numbers.Integral) else -1 for b in bags])
    if np.any((labels != 0) & (labels != 1)):
        raise DataError("the mean-pool probe needs binary class labels")

    means = _mean_features(bags)
    spread = means.std(axis=0)
    spread[spread == 0] = 1.0
    probe = MeanPoolProbe(means.shape[1], means.mean(axis=0), spread, np.random.default_rng(seed))

    y = Tensor(labels.astype(np.float64))
    optimizer = AdamW(probe.params, lr=lr, weight_decay=weight_decay)
    for _ in range(steps):
        probe.params.zero_grad()
        z = probe._logits(means)
        # log-likelihood of both outcomes, log(1 - sigmoid(z)) == log_sigmoid(-z)
        loss = -ops.mean(y * ops.log_sigmoid(z) + (1.0 - y) * ops.log_sigmoid(-z))
        backward(loss, probe.params.trainable())
        optimizer.step()
        probe.losses.append(loss.item())

    _log.info("Mean-pool probe fitted on %d bags, final loss %.4f", len(bags), probe.losses[-1] if probe.losses else float("nan"))
    return probe
