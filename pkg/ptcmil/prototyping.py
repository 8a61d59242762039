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
from collections.abc import Sequence

import numpy as np

from .clustering import ClusterPartition
from .errors import ShapeError
from .flags import ParamGroup
from .nn.layers import EncoderLayer, Linear
from .nn.params import ModelParams
from .tensor import Tensor, ops

_log = logging.getLogger(__name__)

__all__ = (
    "ClusterTokens",
    "ScoreHead",
    "PrototypeSet",
    "gather_clusters",
    "local_refine",
    "merge",
    "build_prototypes",
)


class ClusterTokens:
    """The prompt token and member patch tokens of one cluster."""

    __slots__ = ("index", "prompt", "members", "indices")

    def __init__(self, index: int, prompt: Tensor, members: Tensor | None, indices: list[int]) -> None:
        self.index: int = index
        """The cluster index."""
        self.prompt: Tensor = prompt
        """The prompt token of this cluster, a ``D`` vector."""
        self.members: Tensor | None = members
        """The ``N_c x D`` member tokens, or ``None`` if the cluster is empty."""
        self.indices: list[int] = indices
        """The patch indices of the members, in bag order."""

    def __repr__(self) -> str:
        return f"<ClusterTokens index={self.index} size={self.size}>"

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def is_empty(self) -> bool:
        return not self.indices


class ScoreHead:
    """A linear scorer giving one merge logit per refined member token.

    A single scorer is shared by every cluster, so it works for any cluster size.
    """

    def __init__(self, registry: ModelParams, dim: int, rng: np.random.Generator) -> None:
        self.linear: Linear = Linear(registry, "score_head", dim, 1, rng, group=ParamGroup.score_head)

    def __call__(self, tokens: Tensor) -> Tensor:
        return self.linear(tokens).reshape(tokens.shape[0])


class PrototypeSet:
    """The per-cluster representatives fed to pooling.

    Attributes
    ----------
    prototypes: :class:`Tensor`
        The ``C x d`` prototype matrix.
    prompts: :class:`Tensor`
        The ``C x d`` refined prompt tokens.
    empty: list[:class:`bool`]
        Whether each cluster had no member, in which case its prototype is its refined prompt.
    weights: list[:class:`numpy.ndarray` | :data:`None`]
        The merge weights of each cluster's members, ``None`` for empty clusters or when
        merging is disabled.
    """

    __slots__ = ("prototypes", "prompts", "empty", "weights")

    def __init__(
        self, prototypes: Tensor, prompts: Tensor, empty: list[bool], weights: list[np.ndarray | None]
    ) -> None:
        self.prototypes: Tensor = prototypes
        self.prompts: Tensor = prompts
        self.empty: list[bool] = empty
        self.weights: list[np.ndarray | None] = weights

    def __repr__(self) -> str:
        return f"<PrototypeSet clusters={len(self.empty)} empty={sum(self.empty)}>"


def gather_clusters(partition: ClusterPartition, prompts: Tensor, tokens: Tensor) -> list[ClusterTokens]:
    """Re-indexes the patch tokens cluster by cluster."""
    if prompts.shape[0] != partition.clusters:
        raise ShapeError("gather_clusters", prompts.shape, detail=f"expected {partition.clusters} prompts")

    clusters: list[ClusterTokens] = []
    for c, indices in enumerate(partition.groups):
        members = tokens[np.asarray(indices, dtype=np.intp)] if indices else None
        clusters.append(ClusterTokens(c, prompts[c], members, list(indices)))
    return clusters


def local_refine(
    partition: ClusterPartition,
    prompts: Tensor,
    members: Tensor,
    local_layer: EncoderLayer,
) -> list[ClusterTokens]:
    """Runs the shared local layer over ``[prompt_c, members_c]`` for every cluster.

    The returned clusters hold the refined prompt and refined members. An empty cluster
    is refined as the single prompt token.
    """
    refined: list[ClusterTokens] = []
    for cluster in gather_clusters(partition, prompts, members):
        head = cluster.prompt.reshape(1, cluster.prompt.shape[0])
        tokens = head if cluster.members is None else ops.concat([head, cluster.members], axis=0)
        out = local_layer(tokens)
        new_members = out[1:] if cluster.members is not None else None
        refined.append(ClusterTokens(cluster.index, out[0], new_members, cluster.indices))
    return refined


def merge(tokens: Tensor, scores: Tensor) -> Tensor:
    """The ``softmax(scores)`` weighted mean of the rows of ``tokens``."""
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise ShapeError("merge", tokens.shape, detail="need at least one member token")
    if scores.shape != (tokens.shape[0],):
        raise ShapeError("merge", tokens.shape, scores.shape)
    return ops.softmax(scores, axis=0) @ tokens


def build_prototypes(refined: Sequence[ClusterTokens], score_head: ScoreHead | None) -> PrototypeSet:
    """Merges each refined cluster into its prototype.

    Without a ``score_head`` merging is disabled and the refined prompts serve as prototypes.
    """
    rows: list[Tensor] = []
    prompts: list[Tensor] = []
    empty: list[bool] = []
    weights: list[np.ndarray | None] = []

    for cluster in refined:
        prompt = cluster.prompt.reshape(1, cluster.prompt.shape[0])
        prompts.append(prompt)
        empty.append(cluster.is_empty)

        if score_head is None or cluster.members is None:
            rows.append(prompt)
            weights.append(None)
            continue

        scores = score_head(cluster.members)
        shifted = np.exp(scores.values - scores.values.max())
        weights.append(shifted / shifted.sum())
        proto = merge(cluster.members, scores)
        rows.append(proto.reshape(1, proto.shape[0]))

    if any(empty):
        _log.debug("Clusters %s are empty, using their refined prompts", [i for i, e in enumerate(empty) if e])
    return PrototypeSet(ops.concat(rows, axis=0), ops.concat(prompts, axis=0), empty, weights)
