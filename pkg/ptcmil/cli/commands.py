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

import argparse
import inspect
import logging
import types
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import Any, Literal, Union, get_args, get_origin

from ptcmil.errors import ConfigError

from .config import SEED_ENV, RunConfig

_log = logging.getLogger(__name__)

__all__ = (
    "Context",
    "Option",
    "Command",
    "CommandTree",
)

LOG_LEVELS = ("debug", "info", "warning", "error")

CommandCallback = Callable[..., int]


class Context:
    """The flags every command shares, handed to a command callback first."""

    __slots__ = ("config_path", "overrides", "seed", "log_level")

    def __init__(self, config_path: Path | None, overrides: Sequence[str], seed: int | None, log_level: str) -> None:
        self.config_path: Path | None = config_path
        """The configuration file given with ``--config``."""
        self.overrides: list[str] = list(overrides)
        """The ``key=value`` pairs given with ``--set``."""
        self.seed: int | None = seed
        """The seed given with ``--seed``. It wins over the file and the overrides."""
        self.log_level: str = log_level

    def __repr__(self) -> str:
        return f"<Context config_path={self.config_path} seed={self.seed}>"

    def config(self, *, required: Iterable[str] = ("task",), **flags: Any) -> RunConfig:
        """Builds the :class:`RunConfig` of this invocation.

        ``flags`` are command flags bound to configuration keys. Those that are not ``None``
        win over the file, and the ``--seed`` flag wins over everything.
        """
        overrides = list(self.overrides)
        overrides.extend(f"{k}={v}" for k, v in flags.items() if v is not None)
        if self.seed is not None:
            overrides.append(f"seed={self.seed}")
        return RunConfig.load(self.config_path, overrides, required=required)


class Option:
    """Represents a command-line flag derived from a callback parameter.

    Parameters
    ----------
    name: :class:`str`
        The parameter name. The flag is the name with dashes, like ``--num-classes``.
    type: Callable[[:class:`str`], Any]
        The converter of the raw argument.
    default: Any
        The default value, ``inspect.Parameter.empty`` for a required flag.
    description: :class:`str`
        The help text.
    choices: list[Any] | :data:`None`
        The accepted values.
    """

    __slots__ = ("name", "type", "default", "description", "choices")

    def __init__(
        self,
        name: str,
        type: Callable[[str], Any],
        *,
        default: Any = inspect.Parameter.empty,
        description: str | None = None,
        choices: list[Any] | None = None,
    ) -> None:
        self.name: str = name
        self.type: Callable[[str], Any] = type
        self.default: Any = default
        self.description: str = description or name.replace("_", " ")
        self.choices: list[Any] | None = choices

    def __repr__(self) -> str:
        return f"<Option name={self.name!r} required={self.required}>"

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    @property
    def required(self) -> bool:
        return self.default is inspect.Parameter.empty

    @classmethod
    def from_parameter(cls, parameter: inspect.Parameter, description: str | None = None) -> Option:
        annotation = parameter.annotation
        if annotation is parameter.empty:
            raise TypeError(f"command parameters must have type annotations, {parameter.name} is missing it")

        choices: list[Any] | None = None
        origin = get_origin(annotation)
        if origin is Union or origin is types.UnionType:
            args = [a for a in get_args(annotation) if a is not type(None)]
            if len(args) != 1:
                raise TypeError(f"unsupported Union annotation for parameter {parameter.name}")
            annotation = args[0]
            origin = get_origin(annotation)

        if origin is Literal:
            choices = list(get_args(annotation))
            base = type(choices[0])
            if any(type(c) is not base for c in choices[1:]):
                raise TypeError(f"Literal values must be all from the same type, {parameter.name} does not satisfy this")
            annotation = base

        if annotation not in (str, int, float, bool, Path):
            raise TypeError(f"unsupported annotation {annotation!r} for parameter {parameter.name}")

        return cls(parameter.name, annotation, default=parameter.default, description=description, choices=choices)

    def add_to(self, parser: argparse.ArgumentParser) -> None:
        if self.type is bool:
            parser.add_argument(
                self.flag, dest=self.name, action="store_true", default=bool(self.default), help=self.description
            )
            return

        kwargs: dict[str, Any] = {"dest": self.name, "type": self.type, "help": self.description}
        if self.choices is not None:
            kwargs["choices"] = self.choices
        if self.required:
            kwargs["required"] = True
        else:
            kwargs["default"] = self.default
        parser.add_argument(self.flag, **kwargs)


class Command:
    """Represents a subcommand.

    The name is the callback name with dashes, and the description is the first
    paragraph of its docstring. The flags are derived from the parameters after the
    leading :class:`Context`.
    """

    def __init__(
        self,
        *,
        callback: CommandCallback,
        name: str | None = None,
        description: str | None = None,
        help: dict[str, str] | None = None,
    ) -> None:
        if isinstance(callback, (staticmethod, classmethod)):
            raise TypeError("command callbacks can not be static- or class- methods")

        self.callback: CommandCallback = callback
        """The command's callback. You should consider using :meth:`invoke` instead."""
        self.name: str = name or callback.__name__.strip("_").replace("_", "-")
        """The command's name."""
        doc = inspect.getdoc(callback) or "..."
        self.description: str = description or doc.split("\n\n")[0]
        """The command's description."""
        self.options: list[Option] = self._get_options(help or {})

    def __repr__(self) -> str:
        return f"<Command name={self.name!r} options={len(self.options)}>"

    def _get_options(self, help: dict[str, str]) -> list[Option]:
        try:
            params = inspect.signature(self.callback, eval_str=True)
        except NameError:
            params = inspect.signature(self.callback, eval_str=False)

        params_iter = iter(params.parameters.values())
        try:
            next(params_iter)
        except StopIteration:
            raise SyntaxError(f"command {self.name} is missing its context parameter") from None

        return [Option.from_parameter(p, help.get(p.name)) for p in params_iter]

    def invoke(self, context: Context, namespace: argparse.Namespace) -> int:
        kwargs = {o.name: getattr(namespace, o.name) for o in self.options}
        _log.debug("Invoking command %s with %s", self.name, kwargs)
        return self.callback(context, **kwargs)


class CommandTree:
    """Holds the subcommands of the program and builds their argument parser."""

    def __init__(self, prog: str, description: str | None = None) -> None:
        self.prog: str = prog
        self.description: str | None = description
        self._commands: dict[str, Command] = {}

    def __iter__(self):
        return iter(self._commands.values())

    def get_command(self, name: str) -> Command | None:
        return self._commands.get(name)

    def add_command(self, command: Command) -> None:
        if command.name in self._commands:
            raise ValueError(f"command {command.name} is already registered")
        self._commands[command.name] = command

    def command(
        self, *, name: str | None = None, description: str | None = None, help: dict[str, str] | None = None
    ) -> Callable[[CommandCallback], Command]:
        """A decorator that registers a function as a subcommand."""

        def decorator(func: CommandCallback) -> Command:
            command = Command(callback=func, name=name, description=description, help=help)
            self.add_command(command)
            return command

        return decorator

    @staticmethod
    def _add_common(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", type=Path, default=None, help="a key = value configuration file")
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one configuration key, repeatable",
        )
        parser.add_argument("--seed", type=int, default=None, help=f"the run seed, falls back to ${SEED_ENV} and then 0")
        parser.add_argument("--log-level", choices=LOG_LEVELS, default="info", help="the logging level")

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog=self.prog, description=self.description)
        subparsers = parser.add_subparsers(dest="command", metavar="command")
        subparsers.required = True
        for command in self._commands.values():
            sub = subparsers.add_parser(
                command.name,
                help=command.description,
                description=command.description,
                formatter_class=argparse.ArgumentDefaultsHelpFormatter,
            )
            for option in command.options:
                option.add_to(sub)
            self._add_common(sub)
        return parser

    def dispatch(self, argv: Sequence[str] | None = None) -> tuple[Command, Context, argparse.Namespace]:
        """Parses ``argv`` and returns the selected command with its context and arguments."""
        namespace = self.build_parser().parse_args(argv)
        command = self._commands[namespace.command]
        context = Context(namespace.config, namespace.overrides, namespace.seed, namespace.log_level)
        for entry in context.overrides:
            if "=" not in entry:
                raise ConfigError([f"--set: expected KEY=VALUE, got {entry!r}"])
        return command, context, namespace
