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
from collections.abc import Sequence
from typing import Any

import numpy as np

from ptcmil.errors import ShapeError

from .core import Node, Tensor, as_tensor

__all__ = (
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "transpose",
    "sum",
    "mean",
    "exp",
    "log",
    "sigmoid",
    "log_sigmoid",
    "tanh",
    "gelu",
    "power",
    "softmax",
    "log_softmax",
    "concat",
    "take",
    "reshape",
    "frobenius_norm",
)

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def _make(primitive: str, values: np.ndarray, parents: tuple[Tensor, ...], vjp: Any) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, _node=Node(primitive, parents, vjp))
    return Tensor(values)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(primitive: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(primitive, a.shape, b.shape) from None


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def vjp(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.values + b.values, (a, b), vjp)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def vjp(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.values - b.values, (a, b), vjp)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def vjp(g: np.ndarray):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _make("mul", a.values * b.values, (a, b), vjp)


def neg(x: Tensor) -> Tensor:
    return _make("neg", -x.values, (x,), lambda g: (-g,))


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiplies ``x`` by a constant real ``factor``."""
    factor = float(factor)
    return _make("scale", x.values * factor, (x,), lambda g: (g * factor,))


def matmul(a: Any, b: Any) -> Tensor:
    """Matrix product of one or two dimensional operands, with :func:`numpy.matmul` semantics."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    a2 = a.values if a.ndim == 2 else a.values[None, :]
    b2 = b.values if b.ndim == 2 else b.values[:, None]
    out2 = a2 @ b2
    out = np.matmul(a.values, b.values)

    def vjp(g: np.ndarray):
        g2 = np.reshape(g, out2.shape)
        return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)

    return _make("matmul", out, (a, b), vjp)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError("transpose", x.shape, detail="expected a matrix")
    return _make("transpose", x.values.T, (x,), lambda g: (g.T,))


def sum(x: Tensor, axis: int | None = None, *, keepdims: bool = False) -> Tensor:
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", np.asarray(out), (x,), vjp)


def mean(x: Tensor, axis: int | None = None, *, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.values)
    return _make("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _make("log", np.log(x.values), (x,), lambda g: (g / x.values,))


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.values)
    return _make("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def log_sigmoid(x: Tensor) -> Tensor:
    """Computes ``log(sigmoid(x))`` without overflow for large ``|x|``."""
    out = -np.logaddexp(0.0, -x.values)
    return _make("log_sigmoid", out, (x,), lambda g: (g * _sigmoid(-x.values),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.values)
    return _make("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def gelu(x: Tensor) -> Tensor:
    """The tanh approximation of the Gaussian error linear unit."""
    v = x.values
    t = np.tanh(_GELU_K * (v + _GELU_C * v**3))
    out = 0.5 * v * (1.0 + t)

    def vjp(g: np.ndarray):
        dt = (1.0 - t * t) * _GELU_K * (1.0 + 3.0 * _GELU_C * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make("gelu", out, (x,), vjp)


def power(x: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    out = np.power(x.values, exponent)
    return _make("power", out, (x,), lambda g: (g * exponent * np.power(x.values, exponent - 1.0),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make("softmax", out, (x,), vjp)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def vjp(g: np.ndarray):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", out, (x,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat", detail="nothing to concatenate")

    parts = tuple(tensors)
    reference = parts[0].shape
    for part in parts[1:]:
        if part.ndim != len(reference) or any(
            d != r for i, (d, r) in enumerate(zip(part.shape, reference)) if i != axis % len(reference)
        ):
            raise ShapeError("concat", reference, part.shape)

    out = np.concatenate([p.values for p in parts], axis=axis)
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", out, parts, vjp)


def take(x: Tensor, index: Any) -> Tensor:
    """Gathers by basic or integer-array index, scattering gradients back additively."""
    if isinstance(index, list):
        index = np.asarray(index, dtype=np.intp)
    try:
        out = x.values[index]
    except IndexError as exc:
        raise ShapeError("take", x.shape, detail=str(exc)) from None

    basic = _is_basic_index(index)

    def vjp(g: np.ndarray):
        full = np.zeros_like(x.values)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make("take", np.array(out), (x,), vjp)


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(i is None or i is Ellipsis or isinstance(i, (slice, int, np.integer)) for i in items)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])  # type: ignore
    try:
        out = x.values.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return _make("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def frobenius_norm(x: Tensor) -> Tensor:
    """The Frobenius norm of ``x``. The gradient at the origin is taken as zero."""
    norm = float(np.sqrt(np.sum(x.values * x.values)))

    def vjp(g: np.ndarray):
        if norm == 0.0:
            return (np.zeros_like(x.values),)
        return (g * x.values / norm,)

    return _make("frobenius_norm", np.asarray(norm), (x,), vjp)
