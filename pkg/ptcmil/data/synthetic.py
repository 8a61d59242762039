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
from typing import Any

import numpy as np
import numpy.typing as npt

from ptcmil.errors import ConfigError
from ptcmil.heads import SurvivalLabel
from ptcmil.utils import stable_hash

from .records import BagRecord

_log = logging.getLogger(__name__)

__all__ = (
    "SyntheticClassConfig",
    "SyntheticSurvConfig",
    "gen_classification_bags",
    "gen_survival_bags",
    "expected_event_time",
    "survival_cut_points",
)


def _check_common(problems: list[str], config: Any) -> None:
    if config.min_instances < 1:
        problems.append(f"min_instances: must be at least 1, got {config.min_instances}")
    if config.max_instances < config.min_instances:
        problems.append(f"max_instances: must be at least min_instances, got {config.max_instances}")
    if config.input_dim < 2:
        problems.append(f"input_dim: must be at least 2, got {config.input_dim}")
    if config.components < 1:
        problems.append(f"components: must be at least 1, got {config.components}")
    if not config.component_scale >= 0:
        problems.append(f"component_scale: must be non-negative, got {config.component_scale}")
    if not config.noise_std > 0:
        problems.append(f"noise_std: must be positive, got {config.noise_std}")


def _background_means(rng: np.random.Generator, count: int, direction: np.ndarray, scale: float) -> np.ndarray:
    # component means carry no signal along the direction
    means = rng.normal(size=(count, direction.size)) * scale
    return means - np.outer(means @ direction, direction)


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


class SyntheticClassConfig:
    """The generator settings of the witness classification task.

    Negative bags hold background instances only. Positive bags additionally hold
    ``ceil(witness_rate * N)`` witnesses, shifted ``separation`` noise deviations along
    a fixed direction.

    Parameters
    ----------
    bags_per_class: :class:`int`
        The number of bags of each label.
    min_instances: :class:`int`
        The smallest bag size.
    max_instances: :class:`int`
        The largest bag size, inclusive.
    input_dim: :class:`int`
        The instance feature dimension.
    witness_rate: :class:`float`
        The fraction of witnesses in a positive bag, in ``(0, 1]``.
    components: :class:`int`
        The number of background mixture components.
    component_scale: :class:`float`
        The standard deviation of the component means.
    noise_std: :class:`float`
        The standard deviation of every instance around its component mean.
    separation: :class:`float`
        The witness shift in units of ``noise_std``, positive.
    seed: :class:`int`
        The seed the whole dataset is derived from.
    """

    __slots__ = (
        "bags_per_class",
        "min_instances",
        "max_instances",
        "input_dim",
        "witness_rate",
        "components",
        "component_scale",
        "noise_std",
        "separation",
        "seed",
    )

    def __init__(
        self,
        *,
        bags_per_class: int = 175,
        min_instances: int = 30,
        max_instances: int = 80,
        input_dim: int = 16,
        witness_rate: float = 0.05,
        components: int = 4,
        component_scale: float = 2.0,
        noise_std: float = 1.0,
        separation: float = 3.0,
        seed: int = 0,
    ) -> None:
        self.bags_per_class: int = int(bags_per_class)
        self.min_instances: int = int(min_instances)
        self.max_instances: int = int(max_instances)
        self.input_dim: int = int(input_dim)
        self.witness_rate: float = float(witness_rate)
        self.components: int = int(components)
        self.component_scale: float = float(component_scale)
        self.noise_std: float = float(noise_std)
        self.separation: float = float(separation)
        self.seed: int = int(seed)

        problems: list[str] = []
        if self.bags_per_class < 1:
            problems.append(f"bags_per_class: must be at least 1, got {self.bags_per_class}")
        if not 0 < self.witness_rate <= 1:
            problems.append(f"witness_rate: must lie in (0, 1], got {self.witness_rate}")
        if not self.separation > 0:
            problems.append(f"separation: must be positive, got {self.separation}")
        _check_common(problems, self)
        if problems:
            raise ConfigError(problems)

    def __repr__(self) -> str:
        return f"<SyntheticClassConfig bags_per_class={self.bags_per_class} witness_rate={self.witness_rate} seed={self.seed}>"

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__slots__}

    def witness_count(self, instances: int) -> int:
        """The number of witnesses in a positive bag of ``instances`` instances."""
        return min(instances, max(1, math.ceil(self.witness_rate * instances)))


class SyntheticSurvConfig:
    """The generator settings of the synthetic survival task.

    Every patient has a latent risk, the mean projection of its instances on the risk
    direction. Event times are exponential with a rate of ``exp(risk)``.

    Parameters
    ----------
    patients: :class:`int`
        The number of bags.
    min_instances: :class:`int`
        The smallest bag size.
    max_instances: :class:`int`
        The largest bag size, inclusive.
    input_dim: :class:`int`
        The instance feature dimension.
    risk_direction: array-like | :data:`None`
        The direction the risk is read along. Drawn from the seed when ``None``.
    risk_scale: :class:`float`
        The standard deviation of the patient offsets along the risk direction.
    censor_rate: :class:`float`
        The probability a patient is censored, in ``[0, 1)``.
    num_bins: :class:`int`
        The number of time bins, at least 2.
    components: :class:`int`
        The number of background mixture components.
    component_scale: :class:`float`
        The standard deviation of the component means.
    noise_std: :class:`float`
        The standard deviation of every instance around its mean.
    seed: :class:`int`
        The seed the whole dataset is derived from.
    """

    __slots__ = (
        "patients",
        "min_instances",
        "max_instances",
        "input_dim",
        "risk_direction",
        "risk_scale",
        "censor_rate",
        "num_bins",
        "components",
        "component_scale",
        "noise_std",
        "seed",
    )

    def __init__(
        self,
        *,
        patients: int = 300,
        min_instances: int = 30,
        max_instances: int = 80,
        input_dim: int = 16,
        risk_direction: npt.ArrayLike | None = None,
        risk_scale: float = 1.0,
        censor_rate: float = 0.3,
        num_bins: int = 4,
        components: int = 4,
        component_scale: float = 2.0,
        noise_std: float = 1.0,
        seed: int = 0,
    ) -> None:
        self.patients: int = int(patients)
        self.min_instances: int = int(min_instances)
        self.max_instances: int = int(max_instances)
        self.input_dim: int = int(input_dim)
        self.risk_direction: np.ndarray | None = None
        self.risk_scale: float = float(risk_scale)
        self.censor_rate: float = float(censor_rate)
        self.num_bins: int = int(num_bins)
        self.components: int = int(components)
        self.component_scale: float = float(component_scale)
        self.noise_std: float = float(noise_std)
        self.seed: int = int(seed)

        problems: list[str] = []
        if self.patients < 1:
            problems.append(f"patients: must be at least 1, got {self.patients}")
        if not 0 <= self.censor_rate < 1:
            problems.append(f"censor_rate: must lie in [0, 1), got {self.censor_rate}")
        if self.num_bins < 2:
            problems.append(f"num_bins: must be at least 2, got {self.num_bins}")
        if not self.risk_scale >= 0:
            problems.append(f"risk_scale: must be non-negative, got {self.risk_scale}")
        if risk_direction is not None:
            direction = np.asarray(risk_direction, dtype=np.float64).ravel()
            norm = float(np.linalg.norm(direction))
            if direction.size != self.input_dim or not norm > 0 or not math.isfinite(norm):
                problems.append(f"risk_direction: must be a finite non-zero vector of length {self.input_dim}")
            else:
                self.risk_direction = direction / norm
        _check_common(problems, self)
        if problems:
            raise ConfigError(problems)

    def __repr__(self) -> str:
        return f"<SyntheticSurvConfig patients={self.patients} censor_rate={self.censor_rate} seed={self.seed}>"

    def to_dict(self) -> dict[str, Any]:
        data = {k: getattr(self, k) for k in self.__slots__}
        if self.risk_direction is not None:
            data["risk_direction"] = [float(x) for x in self.risk_direction]
        return data


def _sizes(rng: np.random.Generator, config: Any, count: int) -> np.ndarray:
    return rng.integers(config.min_instances, config.max_instances + 1, size=count)


def _background(rng: np.random.Generator, means: np.ndarray, count: int, noise_std: float) -> np.ndarray:
    picks = rng.integers(means.shape[0], size=count)
    return means[picks] + noise_std * rng.normal(size=(count, means.shape[1]))


def gen_classification_bags(config: SyntheticClassConfig) -> list[BagRecord]:
    """Generates ``2 * bags_per_class`` bags of the witness task in a shuffled order.

    Every bag draws from its own generator, spawned from the config seed, so the
    dataset is a function of the config alone.
    """
    root = np.random.SeedSequence(config.seed)
    shared, *per_bag = root.spawn(1 + 2 * config.bags_per_class)
    rng = np.random.default_rng(shared)

    direction = _unit(rng, config.input_dim)
    means = _background_means(rng, config.components, direction, config.component_scale)
    labels = np.repeat([0, 1], config.bags_per_class)
    order = rng.permutation(labels.size)
    config_hash = stable_hash(config.to_dict())

    records: list[BagRecord] = []
    for position, index in enumerate(order):
        bag_rng = np.random.default_rng(per_bag[position])
        label = int(labels[index])
        n = int(_sizes(bag_rng, config, 1)[0])
        features = _background(bag_rng, means, n, config.noise_std)
        witnesses = config.witness_count(n) if label else 0
        if witnesses:
            rows = bag_rng.choice(n, size=witnesses, replace=False)
            features[rows] += config.separation * config.noise_std * direction

        records.append(
            BagRecord(
                f"cls-{position:05d}",
                features,
                label,
                {
                    "generator": "classification",
                    "witnesses": str(witnesses),
                    "config_hash": config_hash,
                    "seed": str(config.seed),
                },
            )
        )

    _log.info("Generated %d classification bags (witness rate %s)", len(records), config.witness_rate)
    return records


def expected_event_time(risk: float | npt.ArrayLike) -> np.ndarray | float:
    """The mean event time of a patient with latent ``risk``, decreasing in the risk."""
    return np.exp(-np.asarray(risk, dtype=np.float64)) if np.ndim(risk) else math.exp(-float(risk))  # type: ignore


def survival_cut_points(times: npt.ArrayLike, censored: npt.ArrayLike, bins: int) -> np.ndarray:
    """The inner cut-points of ``bins`` equal-count bins over the uncensored times.

    Falls back to every time when no patient is uncensored.
    """
    t = np.asarray(times, dtype=np.float64)
    c = np.asarray(censored, dtype=bool)
    events = t[~c] if np.any(~c) else t
    return np.quantile(events, np.arange(1, bins) / bins)


def gen_survival_bags(config: SyntheticSurvConfig) -> list[BagRecord]:
    """Generates ``patients`` survival bags with discretized, possibly censored times.

    Censored patients are observed at a uniform fraction of their event time. The bins
    split the uncensored observed times into equal-count groups.
    """
    root = np.random.SeedSequence(config.seed)
    shared, *per_bag = root.spawn(1 + config.patients)
    rng = np.random.default_rng(shared)

    direction = config.risk_direction if config.risk_direction is not None else _unit(rng, config.input_dim)
    means = _background_means(rng, config.components, direction, config.component_scale)
    config_hash = stable_hash(config.to_dict())

    features: list[np.ndarray] = []
    risks = np.empty(config.patients)
    times = np.empty(config.patients)
    censored = np.zeros(config.patients, dtype=bool)
    for index in range(config.patients):
        bag_rng = np.random.default_rng(per_bag[index])
        n = int(_sizes(bag_rng, config, 1)[0])
        offset = config.risk_scale * bag_rng.normal()
        x = _background(bag_rng, means, n, config.noise_std) + offset * direction
        risk = float(np.mean(x @ direction))
        event = bag_rng.exponential(expected_event_time(risk))
        if bag_rng.random() < config.censor_rate:
            censored[index] = True
            event *= bag_rng.random()
        features.append(x)
        risks[index] = risk
        times[index] = event

    cuts = survival_cut_points(times, censored, config.num_bins)
    bins = np.minimum(np.searchsorted(cuts, times, side="right"), config.num_bins - 1)

    records = [
        BagRecord(
            f"surv-{index:05d}",
            features[index],
            SurvivalLabel(int(bins[index]), int(censored[index])),
            {
                "generator": "survival",
                "risk": repr(float(risks[index])),
                "time": repr(float(times[index])),
                "config_hash": config_hash,
                "seed": str(config.seed),
            },
        )
        for index in range(config.patients)
    ]
    _log.info("Generated %d survival bags, %d censored", len(records), int(censored.sum()))
    return records
