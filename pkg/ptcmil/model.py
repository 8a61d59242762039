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

import copy
import logging
from typing import Any, Union

import numpy as np
import numpy.typing as npt

from .clustering import AssignmentMatrix, ClusterPartition, PromptBank, assign, init_prompts, partition, reg_loss
from .enums import GramSide, PoolingMode, Task
from .errors import ConfigError, DataError, ShapeError
from .flags import ParamGroup
from .heads import SurvivalLabel, TaskHead, classification_loss, pool_and_predict, risk_scores, survival_objective
from .nn.init import xavier_uniform_init
from .nn.layers import EncoderLayer, Linear
from .nn.params import ModelParams
from .prototyping import PrototypeSet, ScoreHead, build_prototypes, local_refine
from .tensor import Parameter, Tensor, ops

_log = logging.getLogger(__name__)

Label = Union[int, SurvivalLabel]

__all__ = (
    "Label",
    "ModelConfig",
    "ForwardTrace",
    "ForwardOutput",
    "PTCMIL",
    "parameter_count",
)


class ModelConfig:
    """The architecture and objective settings of a model.

    Every argument is keyword-only. All problems are reported together as one :exc:`ConfigError`.

    Parameters
    ----------
    input_dim: :class:`int`
        The dimension of the instance features.
    embed_dim: :class:`int`
        The token dimension ``D``.
    clusters: :class:`int`
        The number of prompt tokens ``C``. Must not exceed ``embed_dim``.
    heads: :class:`int`
        The number of attention heads. Must divide ``embed_dim``.
    pooling: :class:`PoolingMode`
        Which tokens are averaged before the head.
    clustering: :class:`bool`
        Whether prompt clustering runs. Without it the model is a one-layer transformer
        predicting from the class token.
    merging: :class:`bool`
        Whether cluster members are merged with learned weights. Without it the refined
        prompts serve as prototypes.
    task: :class:`Task`
        The supervision.
    num_classes: :class:`int`
        The number of classes of a classification task.
    num_bins: :class:`int`
        The number of time bins of a survival task.
    alpha: :class:`float`
        The weight of the prompt regularizer.
    theta: :class:`float`
        The decay factor of the prompt moving average.
    gram: :class:`GramSide`
        Which Gram matrix the regularizer compares with the identity.
    mlp_ratio: :class:`int`
        The hidden width of the encoder MLPs as a multiple of ``embed_dim``.
    """

    __slots__ = (
        "input_dim",
        "embed_dim",
        "clusters",
        "heads",
        "pooling",
        "clustering",
        "merging",
        "task",
        "num_classes",
        "num_bins",
        "alpha",
        "theta",
        "gram",
        "mlp_ratio",
    )

    def __init__(
        self,
        *,
        input_dim: int = 16,
        embed_dim: int = 32,
        clusters: int = 5,
        heads: int = 4,
        pooling: PoolingMode | str = PoolingMode.pro_cls,
        clustering: bool = True,
        merging: bool = True,
        task: Task | str = Task.classification,
        num_classes: int = 2,
        num_bins: int = 4,
        alpha: float = 0.1,
        theta: float = 0.9,
        gram: GramSide | str = GramSide.rows,
        mlp_ratio: int = 2,
    ) -> None:
        self.input_dim: int = int(input_dim)
        self.embed_dim: int = int(embed_dim)
        self.clusters: int = int(clusters)
        self.heads: int = int(heads)
        self.pooling: PoolingMode = PoolingMode.from_config("pooling", pooling)
        self.clustering: bool = bool(clustering)
        self.merging: bool = bool(merging)
        self.task: Task = Task.from_config("task", task)
        self.num_classes: int = int(num_classes)
        self.num_bins: int = int(num_bins)
        self.alpha: float = float(alpha)
        self.theta: float = float(theta)
        self.gram: GramSide = GramSide.from_config("gram", gram)
        self.mlp_ratio: int = int(mlp_ratio)
        self.validate()

    def validate(self) -> None:
        problems: list[str] = []
        if self.input_dim < 1:
            problems.append(f"input_dim: must be positive, got {self.input_dim}")
        if self.embed_dim < 1:
            problems.append(f"embed_dim: must be positive, got {self.embed_dim}")
        if self.clusters < 1:
            problems.append(f"clusters: must be positive, got {self.clusters}")
        elif self.clusters > self.embed_dim:
            problems.append(f"clusters: {self.clusters} exceeds embed_dim {self.embed_dim}")
        if self.heads < 1 or (self.embed_dim > 0 and self.embed_dim % self.heads):
            problems.append(f"heads: {self.heads} does not divide embed_dim {self.embed_dim}")
        if self.task is Task.classification and self.num_classes < 2:
            problems.append(f"num_classes: need at least two classes, got {self.num_classes}")
        if self.task is Task.survival and self.num_bins < 2:
            problems.append(f"num_bins: need at least two bins, got {self.num_bins}")
        if not self.alpha >= 0:
            problems.append(f"alpha: must be non-negative, got {self.alpha}")
        if not 0.0 <= self.theta <= 1.0:
            problems.append(f"theta: must lie in [0, 1], got {self.theta}")
        if self.mlp_ratio < 1:
            problems.append(f"mlp_ratio: must be positive, got {self.mlp_ratio}")
        if problems:
            raise ConfigError(problems)

    def __repr__(self) -> str:
        return f"<ModelConfig {' '.join(f'{k}={v}' for k, v in self.to_dict().items())}>"

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    @property
    def output_dim(self) -> int:
        """The number of logits of the task head."""
        return self.num_classes if self.task is Task.classification else self.num_bins

    @property
    def label(self) -> str:
        """The ablation label of this configuration, like ``w/o merging``."""
        if not self.clustering:
            return "w/o clustering"
        parts: list[str] = []
        if not self.merging:
            parts.append("w/o merging")
        if self.pooling is not PoolingMode.pro_cls:
            parts.append(f"pooling={self.pooling}")
        return ", ".join(parts) or "full"

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "embed_dim": self.embed_dim,
            "clusters": self.clusters,
            "heads": self.heads,
            "pooling": str(self.pooling),
            "clustering": self.clustering,
            "merging": self.merging,
            "task": str(self.task),
            "num_classes": self.num_classes,
            "num_bins": self.num_bins,
            "alpha": self.alpha,
            "theta": self.theta,
            "gram": str(self.gram),
            "mlp_ratio": self.mlp_ratio,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        unknown = [k for k in data if k not in cls.__slots__]
        if unknown:
            raise ConfigError([f"{k}: unknown model setting" for k in unknown])
        return cls(**data)

    def replace(self, **changes: Any) -> ModelConfig:
        data = self.to_dict()
        data.update(changes)
        return ModelConfig.from_dict(data)


def parameter_count(config: ModelConfig) -> int:
    """The number of trainable scalars of a model built from ``config``."""
    d = config.embed_dim
    hidden = config.mlp_ratio * d
    encoder = 4 * d + (4 * d * d + 3 * d) + (2 * d * hidden + hidden + d)

    total = config.input_dim * d + d  # embedding
    total += d  # class token
    total += encoder  # global layer
    if config.clustering:
        total += config.clusters * d + encoder
        if config.merging:
            total += d + 1
    total += d * config.output_dim + config.output_dim
    return total


class ForwardTrace:
    """Every intermediate of one forward pass, still attached to the tape."""

    __slots__ = ("logits", "cls_token", "prompts", "assignment", "partition", "prototypes")

    def __init__(
        self,
        logits: Tensor,
        cls_token: Tensor,
        prompts: Tensor | None = None,
        assignment: AssignmentMatrix | None = None,
        partition: ClusterPartition | None = None,
        prototypes: PrototypeSet | None = None,
    ) -> None:
        self.logits: Tensor = logits
        """The head output."""
        self.cls_token: Tensor = cls_token
        """The class token after the global layer."""
        self.prompts: Tensor | None = prompts
        """The prompt tokens after the global layer."""
        self.assignment: AssignmentMatrix | None = assignment
        self.partition: ClusterPartition | None = partition
        self.prototypes: PrototypeSet | None = prototypes


class ForwardOutput:
    """The detached result of a forward pass.

    Attributes
    ----------
    logits: :class:`numpy.ndarray`
        The class logits or the hazard logits.
    cls_token: :class:`numpy.ndarray`
        The refined class token.
    assignment: :class:`numpy.ndarray` | :data:`None`
        The ``N x C`` assignment probabilities, ``None`` without clustering.
    labels: :class:`numpy.ndarray` | :data:`None`
        The cluster index of every patch.
    max_probability: :class:`numpy.ndarray` | :data:`None`
        The probability of the chosen cluster of every patch.
    prototypes: :class:`numpy.ndarray` | :data:`None`
        The ``C x D`` prototypes.
    empty: list[:class:`bool`]
        The empty cluster flags.
    task_loss: :class:`float` | :data:`None`
        The task loss, when a label was given.
    reg_value: :class:`float` | :data:`None`
        The regularizer on the prompt shadow, without clustering ``None``.
    """

    __slots__ = (
        "logits",
        "cls_token",
        "assignment",
        "labels",
        "max_probability",
        "prototypes",
        "empty",
        "task_loss",
        "reg_value",
    )

    def __init__(self, trace: ForwardTrace, *, task_loss: float | None = None, reg_value: float | None = None) -> None:
        self.logits: np.ndarray = trace.logits.numpy()
        self.cls_token: np.ndarray = trace.cls_token.numpy()
        self.assignment: np.ndarray | None = trace.assignment.values.copy() if trace.assignment is not None else None
        self.labels: np.ndarray | None = trace.partition.labels.copy() if trace.partition is not None else None
        self.max_probability: np.ndarray | None = trace.partition.max_probability.copy() if trace.partition is not None else None
        self.prototypes: np.ndarray | None = trace.prototypes.prototypes.numpy() if trace.prototypes is not None else None
        self.empty: list[bool] = list(trace.prototypes.empty) if trace.prototypes is not None else []
        self.task_loss: float | None = task_loss
        self.reg_value: float | None = reg_value

    def __repr__(self) -> str:
        return f"<ForwardOutput logits={self.logits.tolist()}>"

    @property
    def prediction(self) -> int:
        """The most likely class."""
        return int(np.argmax(self.logits))


class PTCMIL:
    """A prompt token clustering transformer aggregating a bag of instance features.

    The forward pass embeds the instances, runs the global layer over the class token,
    the prompt tokens and the patch tokens, assigns every patch to its closest prompt,
    refines each cluster with the shared local layer, merges each cluster into a
    prototype and pools the prototypes and the class token into the task head.

    Parameters
    ----------
    config: :class:`ModelConfig`
        The architecture.
    rng: :class:`numpy.random.Generator` | :class:`int`
        The generator, or seed, for the initial weights.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator | int = 0) -> None:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)

        d = config.embed_dim
        self.config: ModelConfig = config
        self.params: ModelParams = ModelParams()

        self.embedding: Linear = Linear(self.params, "embedding", config.input_dim, d, rng, group=ParamGroup.embedding)
        self.cls_token: Parameter = self.params.register("cls_token", xavier_uniform_init(1, d, rng), ParamGroup.cls_token)
        self.bank: PromptBank | None = (
            init_prompts(config.clusters, d, rng, theta=config.theta, registry=self.params) if config.clustering else None
        )
        self.global_layer: EncoderLayer = EncoderLayer(
            self.params, "global", d, config.heads, rng, group=ParamGroup.global_layer, mlp_ratio=config.mlp_ratio
        )
        self.local_layer: EncoderLayer | None = None
        self.score_head: ScoreHead | None = None
        if config.clustering:
            self.local_layer = EncoderLayer(
                self.params, "local", d, config.heads, rng, group=ParamGroup.local_layer, mlp_ratio=config.mlp_ratio
            )
            if config.merging:
                self.score_head = ScoreHead(self.params, d, rng)
        self.head: TaskHead = TaskHead(self.params, d, config.output_dim, rng)

        _log.debug("Built %s with %d trainable scalars", config.label, self.params.count())

    def __repr__(self) -> str:
        return f"<PTCMIL label={self.config.label!r} parameters={self.params.count()}>"

    def clone(self) -> PTCMIL:
        """Returns an independent copy of this model, prompt shadow included."""
        return copy.deepcopy(self)

    def reset_head(self, outputs: int, rng: np.random.Generator | int = 0) -> None:
        """Replaces the task head with a freshly initialized one with ``outputs`` logits."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        field = "num_classes" if self.config.task is Task.classification else "num_bins"
        self.config = self.config.replace(**{field: outputs})
        self.params.unregister("head")
        self.head = TaskHead(self.params, self.config.embed_dim, outputs, rng)
        _log.info("Task head re-initialized with %d outputs", outputs)

    def trace(self, features: Tensor | npt.ArrayLike, *, training: bool = False, prompts: Tensor | None = None) -> ForwardTrace:
        """Runs the forward pass and keeps every intermediate on the tape.

        Training passes use the prompt parameters. Inference passes feed the prompt
        shadow through the global layer instead. ``prompts`` overrides either choice.
        """
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError("forward", x.shape, (-1, self.config.input_dim))
        if x.shape[0] < 1:
            raise DataError("a bag needs at least one instance")

        embedded = self.embedding(x)
        if self.bank is None:
            out = self.global_layer(ops.concat([self.cls_token, embedded], axis=0))
            cls1 = out[0]
            logits = pool_and_predict(cls1, None, PoolingMode.cls, self.head)
            return ForwardTrace(logits, cls1)

        assert self.local_layer is not None
        c = self.config.clusters
        if prompts is None:
            prompts = self.bank.prompts if training else self.bank.shadow_tensor()

        out = self.global_layer(ops.concat([self.cls_token, prompts, embedded], axis=0))
        cls1 = out[0]
        p1 = out[1 : 1 + c]
        e1 = out[1 + c :]

        assignment = assign(e1, p1)
        part = partition(assignment)
        refined = local_refine(part, p1, e1, self.local_layer)
        protos = build_prototypes(refined, self.score_head)
        logits = pool_and_predict(cls1, protos.prototypes, self.config.pooling, self.head)
        return ForwardTrace(logits, cls1, p1, assignment, part, protos)

    def task_loss(self, logits: Tensor, label: Label, reg_value: Tensor | float = 0.0, alpha: float | None = None) -> Tensor:
        """The task objective for ``label``, plus ``alpha`` times ``reg_value``."""
        alpha = self.config.alpha if alpha is None else alpha
        if self.config.task is Task.classification:
            if isinstance(label, SurvivalLabel):
                raise DataError("a classification model needs class labels")
            return classification_loss(logits, int(label), reg_value, alpha)

        if not isinstance(label, SurvivalLabel):
            raise DataError("a survival model needs survival labels")
        return survival_objective(logits, label, reg_value, alpha)

    def reg_value(self, prompts: Tensor | None = None) -> Tensor | None:
        """The prompt regularizer on ``prompts``, the shadow by default."""
        if self.bank is None:
            return None
        return reg_loss(self.bank.shadow_tensor() if prompts is None else prompts, self.config.gram)

    def forward(self, features: npt.ArrayLike, *, training: bool = False, label: Label | None = None) -> ForwardOutput:
        """Runs the model on one bag and returns detached outputs.

        With a ``label`` the output carries the task loss.
        """
        trace = self.trace(features, training=training)
        reg = self.reg_value()
        task = self.task_loss(trace.logits, label, 0.0, 0.0).item() if label is not None else None
        return ForwardOutput(trace, task_loss=task, reg_value=reg.item() if reg is not None else None)

    def score(self, output: ForwardOutput) -> float:
        """The ranking score of an output: the probability of class 1, or the cumulative hazard."""
        if self.config.task is Task.survival:
            return float(risk_scores(output.logits))
        z = output.logits - output.logits.max()
        p = np.exp(z) / np.exp(z).sum()
        return float(p[1])
