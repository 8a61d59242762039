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

import numpy as np
import numpy.typing as npt

from .errors import MetricError

__all__ = (
    "accuracy",
    "auc",
    "c_index",
)


def accuracy(predicted: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """The fraction of predictions equal to their label."""
    p = np.asarray(predicted)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise MetricError(f"accuracy: predictions of shape {p.shape} do not match labels of shape {y.shape}")
    if p.size == 0:
        raise MetricError("accuracy is undefined without predictions")
    return float(np.mean(p == y))


def auc(scores: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """The area under the ROC curve as the Mann-Whitney statistic.

    Counts the (positive, negative) pairs where the positive scores higher, ties
    counting one half.

    Raises :exc:`MetricError` when only one class is present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError(f"auc: scores of shape {s.shape} do not match labels of shape {y.shape}")

    pos = s[y == 1]
    neg = s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise MetricError("auc is undefined when only one class is present")

    diff = pos[:, None] - neg[None, :]
    greater = int(np.count_nonzero(diff > 0))
    ties = int(np.count_nonzero(diff == 0))
    return (greater + 0.5 * ties) / (pos.size * neg.size)


def c_index(risks: npt.ArrayLike, times: npt.ArrayLike, censorship: npt.ArrayLike) -> float:
    """Harrell's concordance index.

    A pair ``(i, j)`` is comparable when ``times[i] < times[j]`` and patient ``i`` had
    the event (``censorship[i] == 0``). It is concordant when ``risks[i] > risks[j]``;
    tied risks count one half.

    Raises :exc:`MetricError` when no pair is comparable.
    """
    r = np.asarray(risks, dtype=np.float64)
    t = np.asarray(times, dtype=np.float64)
    c = np.asarray(censorship)
    if not (r.shape == t.shape == c.shape) or r.ndim != 1:
        raise MetricError(f"c_index: mismatched shapes {r.shape}, {t.shape} and {c.shape}")

    comparable = (t[:, None] < t[None, :]) & (c[:, None] == 0)
    pairs = int(np.count_nonzero(comparable))
    if pairs == 0:
        raise MetricError("c_index is undefined without comparable pairs")

    diff = r[:, None] - r[None, :]
    concordant = int(np.count_nonzero(comparable & (diff > 0)))
    ties = int(np.count_nonzero(comparable & (diff == 0)))
    return (concordant + 0.5 * ties) / pairs
