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
import os
from collections.abc import Callable, Iterable, Mapping
from pathlib import Path
from typing import Any

from ptcmil.data.synthetic import SyntheticClassConfig, SyntheticSurvConfig
from ptcmil.enums import Enum, GramSide, PoolingMode, Task
from ptcmil.errors import ConfigError
from ptcmil.flags import ParamGroup
from ptcmil.missing import MISSING, is_missing
from ptcmil.model import ModelConfig
from ptcmil.training import AdaptationPlan, TrainConfig

_log = logging.getLogger(__name__)

__all__ = (
    "SEED_ENV",
    "FIELDS",
    "RunConfig",
    "parse_bool",
)

SEED_ENV = "PTCMIL_SEED"

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected one of {', '.join(_TRUE + _FALSE)}")


def _enum(cls: type[Enum]) -> Callable[[str], Any]:
    def convert(value: str) -> Any:
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown value {value!r}, expected one of {', '.join(cls.choices())}") from None

    return convert


def _groups(value: str) -> ParamGroup:
    return ParamGroup.from_names("adapt_groups", value)


FIELDS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "task": (_enum(Task), MISSING),
    "seed": (int, 0),
    # model
    "input_dim": (int, 16),
    "embed_dim": (int, 32),
    "clusters": (int, 5),
    "heads": (int, 4),
    "mlp_ratio": (int, 2),
    "pooling": (_enum(PoolingMode), PoolingMode.pro_cls),
    "clustering": (parse_bool, True),
    "merging": (parse_bool, True),
    "num_classes": (int, 2),
    "num_bins": (int, 4),
    "alpha": (float, 0.1),
    "theta": (float, 0.9),
    "gram": (_enum(GramSide), GramSide.rows),
    # optimization
    "epochs": (int, 30),
    "lr": (float, 2e-4),
    "weight_decay": (float, 1e-5),
    "min_lr": (float, 0.0),
    # synthetic data
    "bags_per_class": (int, 175),
    "patients": (int, 300),
    "min_instances": (int, 30),
    "max_instances": (int, 80),
    "witness_rate": (float, 0.05),
    "separation": (float, 3.0),
    "components": (int, 4),
    "component_scale": (float, 2.0),
    "noise_std": (float, 1.0),
    "censor_rate": (float, 0.3),
    "risk_scale": (float, 1.0),
    "train_size": (int, 200),
    "val_size": (int, 50),
    # few-shot adaptation
    "shots": (int, 20),
    "adapt_epochs": (int, 10),
    "adapt_lr": (float, 1e-3),
    "adapt_groups": (_groups, ParamGroup.adaptation),
    "adapt_prompts": (parse_bool, False),
    # evaluation protocols
    "folds": (int, 5),
    # paths
    "data_dir": (str, None),
    "out_dir": (str, None),
}
"""Every configuration key with its parser and default. :data:`MISSING` marks a required key."""

_MODEL_KEYS = (
    "input_dim",
    "embed_dim",
    "clusters",
    "heads",
    "mlp_ratio",
    "pooling",
    "clustering",
    "merging",
    "task",
    "num_classes",
    "num_bins",
    "alpha",
    "theta",
    "gram",
)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, ParamGroup):
        return ",".join(value.names()) or "none"
    if value is None:
        return ""
    return str(value)


class RunConfig:
    """The settings of one command, read from a flat ``key = value`` file.

    Blank lines and lines starting with ``#`` are ignored. Overrides win over the file,
    and the seed falls back to the ``PTCMIL_SEED`` environment variable when neither
    sets it. Every problem, unknown keys and missing required keys included, is reported
    in a single :exc:`ConfigError`.

    Settings are available as attributes, like ``config.epochs``.
    """

    __slots__ = ("_values", "sources")

    def __init__(self, values: Mapping[str, Any], sources: Mapping[str, str] | None = None) -> None:
        self._values: dict[str, Any] = dict(values)
        self.sources: dict[str, str] = dict(sources or {})
        """Where each key was set: ``file``, ``override``, ``env`` or ``default``."""

    def __repr__(self) -> str:
        return f"<RunConfig task={self._values.get('task')!r} seed={self._values.get('seed')}>"

    def __getattr__(self, name: str) -> Any:
        try:
            return self._values[name]
        except KeyError:
            raise AttributeError(name) from None

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    @staticmethod
    def parse_lines(lines: Iterable[str], *, origin: str = "<config>") -> tuple[dict[str, str], list[str]]:
        """Splits ``key = value`` lines into raw pairs and a list of problems."""
        raw: dict[str, str] = {}
        problems: list[str] = []
        for number, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep:
                problems.append(f"{origin}:{number}: expected 'key = value', got {stripped!r}")
                continue
            raw[key.strip()] = value.strip()
        return raw, problems

    @classmethod
    def build(
        cls,
        text: str = "",
        overrides: Iterable[str] = (),
        *,
        required: Iterable[str] = ("task",),
        env: Mapping[str, str] | None = None,
        origin: str = "<config>",
    ) -> RunConfig:
        """Parses ``text`` and applies ``overrides`` of the form ``key=value``.

        Keys listed in ``required`` must be set. Other keys marked :data:`MISSING` in
        :data:`FIELDS` may stay unset.
        """
        env = os.environ if env is None else env
        raw, problems = cls.parse_lines(text.splitlines(), origin=origin)
        sources = {k: "file" for k in raw}

        override_raw, override_problems = cls.parse_lines(overrides, origin="--set")
        problems.extend(override_problems)
        raw.update(override_raw)
        sources.update({k: "override" for k in override_raw})

        if "seed" not in raw and env.get(SEED_ENV):
            raw["seed"] = env[SEED_ENV]
            sources["seed"] = "env"

        for key in raw:
            if key not in FIELDS:
                problems.append(f"{key}: unknown configuration key")

        values: dict[str, Any] = {}
        wanted = set(required)
        for key, (parse, default) in FIELDS.items():
            if key not in raw:
                if is_missing(default) and key in wanted:
                    problems.append(f"{key}: required key is missing")
                values[key] = default
                sources.setdefault(key, "default")
                continue
            try:
                values[key] = parse(raw[key])
            except ConfigError as exc:
                problems.extend(exc.problems)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")

        if problems:
            raise ConfigError(problems)

        _log.debug("Configuration built from %s with %d overrides", origin, len(override_raw))
        return cls(values, sources)

    @classmethod
    def load(
        cls,
        path: str | Path | None = None,
        overrides: Iterable[str] = (),
        *,
        required: Iterable[str] = ("task",),
        env: Mapping[str, str] | None = None,
    ) -> RunConfig:
        """Reads the file at ``path``, if given, and builds the configuration from it."""
        if path is None:
            return cls.build("", overrides, required=required, env=env)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError([f"config: file {str(path)!r} does not exist"]) from None
        return cls.build(text, overrides, required=required, env=env, origin=str(path))

    def replace(self, **changes: Any) -> RunConfig:
        values = dict(self._values)
        sources = dict(self.sources)
        for key, value in changes.items():
            if key not in FIELDS:
                raise ConfigError([f"{key}: unknown configuration key"])
            values[key] = value
            sources[key] = "override"
        return RunConfig(values, sources)

    def to_dict(self) -> dict[str, Any]:
        return dict(self._values)

    def to_text(self) -> str:
        """Renders the configuration as a file :meth:`load` reads back to an equal configuration."""
        lines = []
        for key in FIELDS:
            value = self._values[key]
            if is_missing(value) or value is None:
                continue
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def model_config(self) -> ModelConfig:
        if is_missing(self._values["task"]):
            raise ConfigError(["task: required key is missing"])
        return ModelConfig(**{k: self._values[k] for k in _MODEL_KEYS})

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            weight_decay=self.weight_decay,
            min_lr=self.min_lr,
            seed=self.seed,
        )

    def adaptation_plan(self, shots: int | None = None) -> AdaptationPlan:
        problems = []
        if self.adapt_epochs < 0:
            problems.append(f"adapt_epochs: must be non-negative, got {self.adapt_epochs}")
        if (shots if shots is not None else self.shots) < 1:
            problems.append(f"shots: must be at least 1, got {shots if shots is not None else self.shots}")
        if problems:
            raise ConfigError(problems)
        return AdaptationPlan(
            shots=self.shots if shots is None else shots,
            groups=self.adapt_groups,
            include_prompts=self.adapt_prompts,
            epochs=self.adapt_epochs,
            lr=self.adapt_lr,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )

    def classification_data(self) -> SyntheticClassConfig:
        return SyntheticClassConfig(
            bags_per_class=self.bags_per_class,
            min_instances=self.min_instances,
            max_instances=self.max_instances,
            input_dim=self.input_dim,
            witness_rate=self.witness_rate,
            components=self.components,
            component_scale=self.component_scale,
            noise_std=self.noise_std,
            separation=self.separation,
            seed=self.seed,
        )

    def survival_data(self) -> SyntheticSurvConfig:
        return SyntheticSurvConfig(
            patients=self.patients,
            min_instances=self.min_instances,
            max_instances=self.max_instances,
            input_dim=self.input_dim,
            risk_scale=self.risk_scale,
            censor_rate=self.censor_rate,
            num_bins=self.num_bins,
            components=self.components,
            component_scale=self.component_scale,
            noise_std=self.noise_std,
            seed=self.seed,
        )
