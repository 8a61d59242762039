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

from enum import Enum as Enumb
from typing import TYPE_CHECKING, Any

from .errors import ConfigError

if TYPE_CHECKING:
    from typing_extensions import Self


__all__ = (
    "Enum",
    "Task",
    "PoolingMode",
    "GramSide",
    "LabelKind",
)


class Enum(Enumb):
    """A string valued enum that parses configuration values case-insensitively.

    Dashes and underscores are interchangeable, so ``pro+cls`` and ``PRO+CLS`` name the
    same member.
    """

    @classmethod
    def _missing_(cls, value: object) -> Self | None:
        if isinstance(value, str):
            wanted = value.strip().lower().replace("_", "-")
            for member in cls:
                if str(member.value).replace("_", "-") == wanted:
                    return member
        return None

    @classmethod
    def choices(cls) -> list[str]:
        return [str(m.value) for m in cls]

    @classmethod
    def from_config(cls, key: str, value: Any) -> Self:
        """Parses ``value`` read for the configuration ``key``.

        Raises :exc:`ConfigError` naming the key and the accepted values if it is unknown.
        """
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError([f"{key}: unknown value {value!r}, expected one of {', '.join(cls.choices())}"]) from None

    def __str__(self) -> str:
        return str(self.value)


class Task(Enum):
    """The supervision a model is trained for."""

    classification = "classification"
    """Bag-level class labels, trained with softmax cross-entropy."""
    survival = "survival"
    """Discrete-time survival labels, trained with the hazard likelihood."""


class PoolingMode(Enum):
    """Which refined tokens are averaged before the task head."""

    pro = "pro"
    """The cluster prototypes only."""
    cls = "cls"
    """The refined class token only."""
    pro_cls = "pro+cls"
    """The class token followed by the prototypes."""

    @property
    def uses_prototypes(self) -> bool:
        return self is not PoolingMode.cls

    @property
    def uses_cls(self) -> bool:
        return self is not PoolingMode.pro


class GramSide(Enum):
    """Which Gram matrix of the prompts the anti-collapse regularizer compares with the identity."""

    rows = "rows"
    """``P @ P.T`` against the ``C x C`` identity."""
    columns = "columns"
    """``P.T @ P`` against the ``D x D`` identity."""


class LabelKind(Enum):
    """The tag of a bag label in the bag file format."""

    none = 0
    classification = 1
    survival = 2
