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

from collections.abc import Mapping
from typing import Any, Union

import numpy as np
import numpy.typing as npt

from ptcmil.errors import DataError
from ptcmil.heads import SurvivalLabel

__all__ = (
    "BagLabel",
    "BagRecord",
)

BagLabel = Union[int, SurvivalLabel, None]


class BagRecord:
    """One bag: an instance feature matrix and its bag-level label.

    Parameters
    ----------
    bag_id: :class:`str`
        The identifier of the bag, unique within a dataset.
    features: array-like
        The ``N x D_in`` instance features. ``N`` is at least one and every entry is finite.
    label: :class:`int` | :class:`SurvivalLabel` | :data:`None`
        The class index, the survival label, or ``None`` for an unlabeled bag.
    metadata: Mapping[:class:`str`, :class:`str`]
        Provenance, like the generator config hash and seed.
    """

    __slots__ = ("bag_id", "features", "label", "metadata")

    def __init__(
        self,
        bag_id: str,
        features: npt.ArrayLike,
        label: BagLabel = None,
        metadata: Mapping[str, str] | None = None,
    ) -> None:
        arr = np.array(features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"bag {bag_id!r} needs an N x D feature matrix with N >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"bag {bag_id!r} has non-finite features")

        self.bag_id: str = bag_id
        self.features: np.ndarray = arr
        self.label: BagLabel = label
        self.metadata: dict[str, str] = {str(k): str(v) for k, v in (metadata or {}).items()}

    def __repr__(self) -> str:
        return f"<BagRecord bag_id={self.bag_id!r} instances={self.instances} label={self.label!r}>"

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, BagRecord):
            return NotImplemented
        return (
            self.bag_id == other.bag_id
            and self.label == other.label
            and self.metadata == other.metadata
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )

    __hash__ = None  # type: ignore

    @property
    def instances(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]
