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
from collections.abc import Iterator, Mapping

import numpy as np
import numpy.typing as npt

from ptcmil.errors import ShapeError
from ptcmil.flags import ParamGroup
from ptcmil.tensor import Parameter

_log = logging.getLogger(__name__)

__all__ = (
    "ParamEntry",
    "ModelParams",
)


class ParamEntry:
    """A registered trainable array."""

    __slots__ = ("parameter", "group", "frozen")

    def __init__(self, parameter: Parameter, group: ParamGroup) -> None:
        self.parameter: Parameter = parameter
        """The parameter itself."""
        self.group: ParamGroup = group
        """The group this parameter belongs to."""
        self.frozen: bool = False
        """Whether the optimizer must leave this parameter untouched."""

    @property
    def name(self) -> str:
        return self.parameter.name  # type: ignore # always named

    def __repr__(self) -> str:
        return f"<ParamEntry name={self.name!r} group={self.group.name} frozen={self.frozen}>"


class ModelParams:
    """A flat registry of every trainable array of a model, in registration order.

    Names are unique; registering a name twice raises :exc:`ValueError`.
    """

    def __init__(self) -> None:
        self._entries: dict[str, ParamEntry] = {}

    def __repr__(self) -> str:
        return f"<ModelParams count={len(self._entries)} scalars={self.count()}>"

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[Parameter]:
        return (e.parameter for e in self._entries.values())

    def __getitem__(self, name: str) -> Parameter:
        return self._entries[name].parameter

    def register(self, name: str, values: npt.ArrayLike, group: ParamGroup) -> Parameter:
        if name in self._entries:
            raise ValueError(f"parameter {name!r} is already registered")
        param = Parameter(values, name=name)
        self._entries[name] = ParamEntry(param, group)
        return param

    def unregister(self, prefix: str) -> list[str]:
        """Removes every parameter named ``prefix`` or starting with ``prefix.``. Returns the removed names."""
        removed = [n for n in self._entries if n == prefix or n.startswith(f"{prefix}.")]
        for name in removed:
            del self._entries[name]
        return removed

    def entries(self) -> list[ParamEntry]:
        return list(self._entries.values())

    def names(self) -> list[str]:
        return list(self._entries)

    def entry(self, name: str) -> ParamEntry:
        return self._entries[name]

    def group_names(self, groups: ParamGroup) -> list[str]:
        """Returns the names of the parameters belonging to any of ``groups``."""
        return [n for n, e in self._entries.items() if e.group in groups]

    def count(self) -> int:
        """The total number of trainable scalars."""
        return sum(e.parameter.size for e in self._entries.values())

    def set_trainable(self, groups: ParamGroup) -> None:
        """Freezes every parameter outside ``groups`` and unfreezes the rest."""
        for entry in self._entries.values():
            entry.frozen = entry.group not in groups
        _log.debug("Trainable groups set to %s", groups)

    def freeze(self, groups: ParamGroup) -> None:
        for entry in self._entries.values():
            if entry.group in groups:
                entry.frozen = True

    def unfreeze(self, groups: ParamGroup) -> None:
        for entry in self._entries.values():
            if entry.group in groups:
                entry.frozen = False

    def is_frozen(self, name: str) -> bool:
        return self._entries[name].frozen

    def trainable(self) -> list[Parameter]:
        return [e.parameter for e in self._entries.values() if not e.frozen]

    def trainable_groups(self) -> ParamGroup:
        result = ParamGroup.none()
        for entry in self._entries.values():
            if not entry.frozen:
                result |= entry.group
        return result

    def zero_grad(self) -> None:
        for param in self:
            param.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        """Returns copies of every array, keyed by name in registration order."""
        return {n: e.parameter.values.copy() for n, e in self._entries.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], *, strict: bool = True) -> None:
        """Overwrites the registered arrays with ``state``.

        With ``strict``, the names must match the registry exactly.
        """
        if strict:
            missing = [n for n in self._entries if n not in state]
            unexpected = [n for n in state if n not in self._entries]
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing {missing}, unexpected {unexpected}")

        for name, values in state.items():
            if name not in self._entries:
                continue
            param = self._entries[name].parameter
            if np.shape(values) != param.shape:
                raise ShapeError("load_state_dict", param.shape, np.shape(values), detail=name)
            param.assign(values)
