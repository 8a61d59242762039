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
from collections.abc import Callable
from typing import Any, TypeVar

_log = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

__all__ = ("TrainingEvents",)


class TrainingEvents:
    """Represents a synchronous event emitter for a training run.

    The emitted events are ``step`` with the epoch, the global step and the
    :class:`LossBreakdown`, ``epoch_end`` with the :class:`EpochRecord` and ``best``
    with the epoch and validation metric of a new best checkpoint.

    This may be subclassed to add custom behaviour or event dispatching.
    """

    def __init__(self) -> None:
        self._events: dict[str, list[Callable[..., Any]]] = {}

    def add_listener(self, event: str, func: Callable[..., Any]) -> None:
        self._events.setdefault(event, []).append(func)

    def remove_listener(self, event: str, func: Callable[..., Any]) -> None:
        try:
            self._events.get(event, []).remove(func)
        except ValueError:
            pass

    def listener(self, name: str | None = None) -> Callable[[F], F]:
        """A decorator that registers a listener.

        If no ``name`` is given, the function name is used, without an ``on_`` prefix.
        """

        def decorator(func: F) -> F:
            event = name or func.__name__.removeprefix("on_")
            self.add_listener(event, func)
            return func

        return decorator

    def invoke(self, event: str, *args: Any) -> None:
        """Calls each listener of ``event`` in registration order.

        An exception raised by a listener is logged and does not stop the run.
        """
        listeners = self._events.get(event, [])
        _log.debug("Invoking event %s with %d listeners", event, len(listeners))

        for func in listeners:
            try:
                func(*args)
            except Exception:
                _log.exception("Listener %r of event %s raised an exception", func, event)
