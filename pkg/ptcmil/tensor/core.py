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

import itertools
import logging
from collections.abc import Callable, Iterable, Sequence
from typing import TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt

from ptcmil.errors import ShapeError

if TYPE_CHECKING:
    from typing_extensions import Self

    VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_log = logging.getLogger(__name__)

__all__ = (
    "Tensor",
    "Parameter",
    "Node",
    "Graph",
    "backward",
    "get_default_dtype",
    "set_default_dtype",
    "as_tensor",
)

_default_dtype: np.dtype[Any] = np.dtype(np.float64)
_node_counter = itertools.count()


def get_default_dtype() -> np.dtype[Any]:
    """Returns the floating point type new tensors are created with."""
    return _default_dtype


def set_default_dtype(dtype: npt.DTypeLike) -> None:
    """Sets the floating point type new tensors are created with.

    Only ``float64`` and ``float32`` are accepted. Gradient checks assume ``float64``.
    """
    global _default_dtype
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise TypeError(f"unsupported tensor dtype {resolved}")
    _default_dtype = resolved


class Node:
    """A record of one differentiable operation on the tape.

    Nodes are numbered in construction order, which is a valid topological
    order for the dynamic graph built by a forward pass.
    """

    __slots__ = ("index", "primitive", "parents", "vjp")

    def __init__(self, primitive: str, parents: tuple[Tensor, ...], vjp: VJP) -> None:
        self.index: int = next(_node_counter)
        self.primitive: str = primitive
        self.parents: tuple[Tensor, ...] = parents
        self.vjp: VJP = vjp

    def __repr__(self) -> str:
        return f"<Node index={self.index} primitive={self.primitive!r}>"


class Tensor:
    """A dense, row-major array of reals that can take part in reverse-mode differentiation.

    Parameters
    ----------
    values: array-like
        The values of this tensor, stored as a contiguous array of the default dtype.
    requires_grad: :class:`bool`
        Whether gradients should flow to this tensor.
    name: :class:`str` | :data:`None`
        An optional name, used as the key of gradient maps.
    """

    __slots__ = ("values", "requires_grad", "grad", "name", "node")

    __array_ufunc__ = None

    def __init__(
        self,
        values: npt.ArrayLike,
        *,
        requires_grad: bool = False,
        name: str | None = None,
        _node: Node | None = None,
    ) -> None:
        arr = np.asarray(values, dtype=_default_dtype)
        # ascontiguousarray would promote 0-d values to shape (1,)
        self.values: np.ndarray = arr if arr.flags.c_contiguous else arr.copy(order="C")
        """The forward values of this tensor."""
        self.requires_grad: bool = requires_grad
        """Whether this tensor takes part in the backward pass."""
        self.grad: np.ndarray | None = np.zeros_like(self.values) if requires_grad and _node is None else None
        """The accumulated gradient. Only leaves keep one."""
        self.name: str | None = name
        """The name of this tensor, if any."""
        self.node: Node | None = _node
        """The tape record that produced this tensor, or ``None`` for leaves."""

    def __repr__(self) -> str:
        extra = f" name={self.name!r}" if self.name else ""
        return f"<Tensor shape={self.shape} requires_grad={self.requires_grad}{extra}>"

    @property
    def shape(self) -> tuple[int, ...]:
        """The extents of this tensor."""
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        """Whether this tensor was not produced by a recorded operation."""
        return self.node is None

    @property
    def T(self) -> Tensor:
        from . import ops

        return ops.transpose(self)

    def item(self) -> float:
        """Returns the value of a single element tensor as a Python float."""
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="expected a single element")
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        """Returns a copy of the values of this tensor."""
        return self.values.copy()

    def detach(self) -> Tensor:
        """Returns a tensor sharing no history with this one."""
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        if self.requires_grad and self.is_leaf:
            self.grad = np.zeros_like(self.values)

    def _op(self, name: str, *args: Any, **kwargs: Any) -> Tensor:
        from . import ops

        return getattr(ops, name)(self, *args, **kwargs)

    def __add__(self, other: Any) -> Tensor:
        return self._op("add", other)

    def __radd__(self, other: Any) -> Tensor:
        from . import ops

        return ops.add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return self._op("sub", other)

    def __rsub__(self, other: Any) -> Tensor:
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return self._op("mul", other)

    def __rmul__(self, other: Any) -> Tensor:
        from . import ops

        return ops.mul(other, self)

    def __neg__(self) -> Tensor:
        return self._op("neg")

    def __matmul__(self, other: Any) -> Tensor:
        return self._op("matmul", other)

    def __rmatmul__(self, other: Any) -> Tensor:
        from . import ops

        return ops.matmul(other, self)

    def __pow__(self, exponent: float) -> Tensor:
        return self._op("power", exponent)

    def __getitem__(self, index: Any) -> Tensor:
        return self._op("take", index)

    def sum(self, axis: int | None = None, *, keepdims: bool = False) -> Tensor:
        return self._op("sum", axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, *, keepdims: bool = False) -> Tensor:
        return self._op("mean", axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return self._op("reshape", shape)


class Parameter(Tensor):
    """A named, trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, values: npt.ArrayLike, *, name: str) -> None:
        super().__init__(np.array(values, dtype=_default_dtype), requires_grad=True, name=name)

    def __repr__(self) -> str:
        return f"<Parameter name={self.name!r} shape={self.shape}>"

    def assign(self, values: npt.ArrayLike) -> Self:
        """Overwrites the values of this parameter in place, keeping its shape."""
        arr = np.asarray(values, dtype=self.values.dtype)
        if arr.shape != self.values.shape:
            raise ShapeError("assign", self.values.shape, arr.shape)
        self.values[...] = arr
        return self


def as_tensor(value: Any) -> Tensor:
    """Wraps ``value`` into a constant :class:`Tensor` unless it already is one."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Graph:
    """The part of the tape reachable from an output tensor.

    Attributes
    ----------
    tensors: list[:class:`Tensor`]
        The non-leaf tensors reachable from the output, in construction order.
    leaves: list[:class:`Tensor`]
        The reachable leaves that require gradients, in discovery order.
    """

    __slots__ = ("tensors", "leaves")

    def __init__(self, tensors: list[Tensor], leaves: list[Tensor]) -> None:
        self.tensors: list[Tensor] = tensors
        self.leaves: list[Tensor] = leaves

    @property
    def nodes(self) -> list[Node]:
        return [t.node for t in self.tensors if t.node is not None]

    @classmethod
    def trace(cls, output: Tensor) -> Graph:
        seen: set[int] = set()
        tensors: list[Tensor] = []
        leaves: list[Tensor] = []
        stack = [output]

        while stack:
            tensor = stack.pop()
            key = id(tensor)
            if key in seen:
                continue
            seen.add(key)

            if tensor.node is None:
                if tensor.requires_grad:
                    leaves.append(tensor)
                continue

            tensors.append(tensor)
            stack.extend(p for p in tensor.node.parents if p.requires_grad)

        tensors.sort(key=lambda t: t.node.index)  # type: ignore # filtered above
        return cls(tensors, leaves)


def backward(
    loss: Tensor,
    leaves: Iterable[Tensor] | None = None,
    *,
    accumulate: bool = True,
) -> dict[str, np.ndarray]:
    """Runs the reverse pass from a scalar ``loss``.

    Parameters
    ----------
    loss: :class:`Tensor`
        A zero-dimensional tensor.
    leaves: Iterable[:class:`Tensor`] | :data:`None`
        The leaves to report gradients for. Leaves that do not influence ``loss``
        are reported with zero gradients. Defaults to every reachable leaf.
    accumulate: :class:`bool`
        Whether to add the gradients into :attr:`Tensor.grad` of the leaves.

    Returns
    -------
    dict[:class:`str`, :class:`numpy.ndarray`]
        A mapping of leaf name to gradient. Unnamed leaves are keyed by ``repr``.
    """
    if loss.shape != ():
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")

    graph = Graph.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.values.dtype)}

    for tensor in reversed(graph.tensors):
        g = grads.pop(id(tensor), None)
        if g is None:
            continue

        node = tensor.node
        assert node is not None
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    targets = list(leaves) if leaves is not None else graph.leaves
    result: dict[str, np.ndarray] = {}
    for leaf in targets:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.values)
        else:
            g = np.asarray(g, dtype=leaf.values.dtype).reshape(leaf.shape)

        if accumulate and leaf.requires_grad:
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        result[leaf.name or repr(leaf)] = g

    _log.debug("Backward pass visited %d nodes and %d leaves", len(graph.tensors), len(targets))
    return result
