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
from collections.abc import Callable, Mapping, Sequence

import numpy as np

from ptcmil.errors import NumericFailure

from .core import Tensor, backward

_log = logging.getLogger(__name__)

__all__ = (
    "finite_diff_errors",
    "finite_diff_check",
)

GradHook = Callable[[dict[str, np.ndarray]], Mapping[str, np.ndarray]]


def _probe(f: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor], where: str) -> float:
    value = f(params).item()
    if not math.isfinite(value):
        raise NumericFailure(f"objective is not finite at {where}")
    return value


def finite_diff_errors(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
    *,
    floor: float = 1e-8,
    grad_hook: GradHook | None = None,
) -> dict[str, float]:
    """Compares reverse-mode gradients of ``f`` with central finite differences.

    ``f`` is called with ``params`` and must rebuild its graph on every call, since
    the values of the parameters are perturbed in place between calls.

    Parameters
    ----------
    f: Callable[[Sequence[:class:`Tensor`]], :class:`Tensor`]
        A deterministic function returning a scalar tensor.
    params: Sequence[:class:`Tensor`]
        The leaves to differentiate with respect to.
    epsilon: :class:`float`
        The perturbation step.
    floor: :class:`float`
        The lower bound of the denominator of the relative error.
    grad_hook: Callable | :data:`None`
        Receives the reverse-mode gradient map and returns the one to compare. Used to
        verify the harness catches a corrupted gradient.

    Returns
    -------
    dict[:class:`str`, :class:`float`]
        The maximum relative error per parameter, keyed by name.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    _probe(f, params, "the unperturbed point")
    loss = f(params)
    analytic = backward(loss, params, accumulate=False)
    if grad_hook is not None:
        analytic = dict(grad_hook(analytic))

    errors: dict[str, float] = {}
    for param in params:
        key = param.name or repr(param)
        g_ad = analytic[key]
        flat = param.values.reshape(-1)
        worst = 0.0

        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            plus = _probe(f, params, f"{key}[{i}] + epsilon")
            flat[i] = original - epsilon
            minus = _probe(f, params, f"{key}[{i}] - epsilon")
            flat[i] = original

            g_fd = (plus - minus) / (2.0 * epsilon)
            g = float(g_ad.reshape(-1)[i])
            rel = abs(g - g_fd) / max(abs(g), abs(g_fd), floor)
            worst = max(worst, rel)

        errors[key] = worst
        _log.debug("Gradient check of %s: max relative error %.3e", key, worst)

    return errors


def finite_diff_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
    *,
    floor: float = 1e-8,
) -> float:
    """Returns the maximum relative error between reverse-mode and central-difference
    gradients over every scalar of ``params``.

    Raises :exc:`NumericFailure` if ``f`` is not finite at any probed point.
    """
    errors = finite_diff_errors(f, params, epsilon, floor=floor)
    return max(errors.values(), default=0.0)
