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

import math

import numpy as np

from ptcmil.errors import ShapeError
from ptcmil.flags import ParamGroup
from ptcmil.tensor import Parameter, Tensor, ops

from .init import xavier_uniform_init
from .params import ModelParams

__all__ = (
    "Module",
    "Linear",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "MLP",
    "EncoderLayer",
    "encoder_forward",
)


class Module:
    """Base class of the building blocks. Subclasses register their arrays in a shared :class:`ModelParams`."""

    prefix: str

    def parameters(self) -> list[Parameter]:
        found: list[Parameter] = []
        for value in vars(self).values():
            if isinstance(value, Parameter):
                found.append(value)
            elif isinstance(value, Module):
                found.extend(value.parameters())
            elif isinstance(value, (list, tuple)):
                for item in value:  # type: ignore
                    if isinstance(item, Module):
                        found.extend(item.parameters())
        return found


class Linear(Module):
    """An affine map ``x @ W.T + b`` with an ``out_dim x in_dim`` weight.

    The weight is drawn Xavier-uniform and the bias starts at zero.
    """

    def __init__(
        self,
        registry: ModelParams,
        prefix: str,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        *,
        group: ParamGroup,
        bias: bool = True,
    ) -> None:
        self.prefix: str = prefix
        self.in_dim: int = in_dim
        self.out_dim: int = out_dim
        self.weight: Parameter = registry.register(f"{prefix}.weight", xavier_uniform_init(out_dim, in_dim, rng), group)
        self.bias: Parameter | None = (
            registry.register(f"{prefix}.bias", np.zeros(out_dim), group) if bias else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError("linear", x.shape, self.weight.shape, detail=self.prefix)
        out = ops.matmul(x, self.weight.T)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, registry: ModelParams, prefix: str, dim: int, *, group: ParamGroup, eps: float = 1e-5) -> None:
        self.prefix: str = prefix
        self.dim: int = dim
        self.eps: float = eps
        self.scale: Parameter = registry.register(f"{prefix}.scale", np.ones(dim), group)
        self.shift: Parameter = registry.register(f"{prefix}.shift", np.zeros(dim), group)

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered * ops.power(var + self.eps, -0.5)
        return normed * self.scale + self.shift


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over the rows of an ``M x D`` token matrix.

    Heads are column blocks of width ``D / heads`` of the query, key and value projections.
    The key projection has no bias, since a key bias shifts every score of a row equally.
    """

    def __init__(
        self,
        registry: ModelParams,
        prefix: str,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        *,
        group: ParamGroup,
    ) -> None:
        if heads < 1 or dim % heads:
            raise ValueError(f"head count {heads} does not divide embedding dimension {dim}")

        self.prefix: str = prefix
        self.dim: int = dim
        self.heads: int = heads
        self.head_dim: int = dim // heads
        self.query: Linear = Linear(registry, f"{prefix}.query", dim, dim, rng, group=group)
        self.key: Linear = Linear(registry, f"{prefix}.key", dim, dim, rng, group=group, bias=False)
        self.value: Linear = Linear(registry, f"{prefix}.value", dim, dim, rng, group=group)
        self.out: Linear = Linear(registry, f"{prefix}.out", dim, dim, rng, group=group)

    def __call__(self, x: Tensor, *, weights: list[np.ndarray] | None = None) -> Tensor:
        """Attends over ``x``. If ``weights`` is given, each head's ``M x M`` attention matrix is appended to it."""
        q = self.query(x)
        k = self.key(x)
        v = self.value(x)
        scale = 1.0 / math.sqrt(self.head_dim)

        outputs: list[Tensor] = []
        for h in range(self.heads):
            cols = (slice(None), slice(h * self.head_dim, (h + 1) * self.head_dim))
            scores = ops.scale(q[cols] @ k[cols].T, scale)
            attn = ops.softmax(scores, axis=-1)
            if weights is not None:
                weights.append(attn.numpy())
            outputs.append(attn @ v[cols])

        merged = outputs[0] if len(outputs) == 1 else ops.concat(outputs, axis=1)
        return self.out(merged)


class MLP(Module):
    def __init__(
        self,
        registry: ModelParams,
        prefix: str,
        dim: int,
        hidden: int,
        rng: np.random.Generator,
        *,
        group: ParamGroup,
    ) -> None:
        self.prefix: str = prefix
        self.fc1: Linear = Linear(registry, f"{prefix}.fc1", dim, hidden, rng, group=group)
        self.fc2: Linear = Linear(registry, f"{prefix}.fc2", hidden, dim, rng, group=group)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class EncoderLayer(Module):
    """A pre-norm transformer encoder layer.

    Computes ``h = x + attn(norm1(x))`` and returns ``h + mlp(norm2(h))``. No positional
    information is added, so the layer is equivariant to permutations of its input rows.

    Parameters
    ----------
    registry: :class:`ModelParams`
        The registry the arrays of this layer are added to.
    prefix: :class:`str`
        The name prefix of the arrays, like ``global``.
    dim: :class:`int`
        The token dimension.
    heads: :class:`int`
        The number of attention heads. Must divide ``dim``.
    rng: :class:`numpy.random.Generator`
        The generator used for the initial weights.
    group: :class:`ParamGroup`
        The group the arrays belong to.
    mlp_ratio: :class:`int`
        The hidden width of the MLP as a multiple of ``dim``.
    """

    def __init__(
        self,
        registry: ModelParams,
        prefix: str,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        *,
        group: ParamGroup,
        mlp_ratio: int = 2,
    ) -> None:
        self.prefix: str = prefix
        self.dim: int = dim
        self.norm1: LayerNorm = LayerNorm(registry, f"{prefix}.norm1", dim, group=group)
        self.attention: MultiHeadSelfAttention = MultiHeadSelfAttention(
            registry, f"{prefix}.attention", dim, heads, rng, group=group
        )
        self.norm2: LayerNorm = LayerNorm(registry, f"{prefix}.norm2", dim, group=group)
        self.mlp: MLP = MLP(registry, f"{prefix}.mlp", dim, mlp_ratio * dim, rng, group=group)

    def __call__(self, tokens: Tensor, *, weights: list[np.ndarray] | None = None) -> Tensor:
        if tokens.ndim != 2 or tokens.shape[0] < 1 or tokens.shape[1] != self.dim:
            raise ShapeError("encoder", tokens.shape, (-1, self.dim), detail=self.prefix)

        hidden = tokens + self.attention(self.norm1(tokens), weights=weights)
        return hidden + self.mlp(self.norm2(hidden))


def encoder_forward(layer: EncoderLayer, tokens: Tensor) -> Tensor:
    """Applies ``layer`` to an ``M x D`` token matrix."""
    return layer(tokens)
