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

from collections.abc import Iterable, Sequence
from typing import ClassVar

__all__ = (
    "PtcmilException",
    "ShapeError",
    "GradientError",
    "NumericFailure",
    "ConfigError",
    "DataError",
    "BagFileError",
    "CheckpointError",
    "MetricError",
)


class PtcmilException(Exception):
    """Base class for all exceptions in the library."""

    exit_code: ClassVar[int] = 1
    """The process exit code the command line uses when this error escapes a command."""


class ShapeError(PtcmilException, ValueError):
    """An exception raised when a primitive receives operands with non-conformable shapes."""

    exit_code = 4

    def __init__(self, primitive: str, *shapes: Sequence[int], detail: str | None = None) -> None:
        self.primitive: str = primitive
        """The name of the primitive that rejected its operands."""
        self.shapes: tuple[tuple[int, ...], ...] = tuple(tuple(s) for s in shapes)
        """The offending shapes, in operand order."""

        fmt = " and ".join(str(s) for s in self.shapes)
        msg = f"{primitive}: incompatible shapes {fmt}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class GradientError(PtcmilException):
    """An exception raised when a parameter receives a NaN or infinite gradient."""

    exit_code = 4

    def __init__(self, name: str) -> None:
        self.name: str = name
        """The name of the parameter with the non-finite gradient."""
        super().__init__(f"non-finite gradient for parameter {name!r}")


class NumericFailure(PtcmilException):
    """An exception raised when a computation produces non-finite values or a numeric check fails."""

    exit_code = 4


class ConfigError(PtcmilException, ValueError):
    """An exception raised when a configuration is invalid.

    Every problem found is collected so that they can be reported at once.
    """

    exit_code = 2

    def __init__(self, problems: Iterable[str]) -> None:
        self.problems: list[str] = list(problems)
        """The list of problems, each one naming the offending key."""
        super().__init__("; ".join(self.problems) or "invalid configuration")


class DataError(PtcmilException):
    """An exception raised when a dataset can not satisfy a request, like a missing split."""

    exit_code = 3


class BagFileError(DataError):
    """An exception raised when a bag file is malformed or truncated."""

    def __init__(self, message: str, *, offset: int, bag_index: int | None = None) -> None:
        self.offset: int = offset
        """The byte offset at which the reader failed."""
        self.bag_index: int | None = bag_index
        """The index of the bag being read, if the failure happened inside a bag."""

        where = f"at byte offset {offset}"
        if bag_index is not None:
            where = f"in bag {bag_index} {where}"
        super().__init__(f"{message} ({where})")


class CheckpointError(DataError):
    """An exception raised when a checkpoint file is malformed, truncated or missing."""

    def __init__(self, message: str, *, offset: int | None = None) -> None:
        self.offset: int | None = offset
        """The byte offset at which the reader failed, if known."""
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class MetricError(PtcmilException, ValueError):
    """An exception raised when a metric is undefined for its inputs, like a single-class AUC."""

    exit_code = 4
