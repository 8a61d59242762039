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

import math

import numpy as np

__all__ = (
    "xavier_bound",
    "xavier_uniform_init",
)


def xavier_bound(rows: int, cols: int) -> float:
    """The half-width ``sqrt(6 / (rows + cols))`` of the Xavier-uniform distribution."""
    return math.sqrt(6.0 / (rows + cols))


def xavier_uniform_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Draws a ``rows x cols`` matrix with entries uniform on ``[-b, b]``, ``b = sqrt(6 / (rows + cols))``.

    Parameters
    ----------
    rows: :class:`int`
        The number of rows, at least 1.
    cols: :class:`int`
        The number of columns, at least 1.
    rng: :class:`numpy.random.Generator`
        The generator to draw from. Two generators with the same seed give the same matrix.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"xavier_uniform_init needs positive extents, got {rows}x{cols}")
    bound = xavier_bound(rows, cols)
    return rng.uniform(-bound, bound, size=(rows, cols))
