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

from collections.abc import Iterable
from enum import Flag

from .errors import ConfigError
from .utils import class_property

__all__ = ("ParamGroup",)


class ParamGroup(Flag):
    """The groups of trainable arrays of a model, used for freezing and few-shot adaptation."""

    embedding = 1 << 0
    """The linear patch embedding."""
    cls_token = 1 << 1
    """The class token."""
    prompts = 1 << 2
    """The prompt tokens acting as cluster proxies."""
    global_layer = 1 << 3
    """The global encoder layer."""
    local_layer = 1 << 4
    """The encoder layer shared by every cluster."""
    score_head = 1 << 5
    """The scorer producing the merge weights of member tokens."""
    head = 1 << 6
    """The task head after pooling."""

    @class_property
    def backbone(cls) -> ParamGroup:
        """An alias for every group a few-shot adaptation keeps frozen by default."""
        return cls.embedding | cls.cls_token | cls.global_layer | cls.local_layer

    @class_property
    def adaptation(cls) -> ParamGroup:
        """A shortcut for ``ParamGroup.head | ParamGroup.score_head``, the classifier and prototype weights."""
        return cls.head | cls.score_head

    @classmethod
    def none(cls) -> ParamGroup:
        """Returns a ParamGroup with no flag set."""
        return ParamGroup(0)

    @classmethod
    def all(cls) -> ParamGroup:
        """Returns a ParamGroup with every flag set."""
        return cls.backbone | cls.prompts | cls.adaptation

    @classmethod
    def from_names(cls, key: str, names: str | Iterable[str]) -> ParamGroup:
        """Parses a comma separated list of group names, like ``head,score_head``.

        The names ``all`` and ``none`` are accepted too.
        """
        if isinstance(names, str):
            names = [n for n in (p.strip() for p in names.split(",")) if n]

        result = cls.none()
        unknown: list[str] = []
        for name in names:
            if name == "all":
                result |= cls.all()
            elif name == "none":
                continue
            elif name in cls.__members__:
                result |= cls.__members__[name]
            else:
                unknown.append(name)

        if unknown:
            raise ConfigError([f"{key}: unknown parameter group {name!r}" for name in unknown])
        return result

    def names(self) -> list[str]:
        """Returns the names of the single groups set, in declaration order."""
        return [name for name, member in type(self).__members__.items() if member in self]
