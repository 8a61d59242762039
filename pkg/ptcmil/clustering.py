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
import numpy.typing as npt

from .enums import GramSide
from .errors import ConfigError, NumericFailure, ShapeError
from .flags import ParamGroup
from .nn.init import xavier_bound, xavier_uniform_init
from .nn.params import ModelParams
from .tensor import Parameter, Tensor, as_tensor, ops

_log = logging.getLogger(__name__)

__all__ = (
    "PromptBank",
    "AssignmentMatrix",
    "ClusterPartition",
    "gram_schmidt",
    "init_prompts",
    "assign",
    "partition",
    "ema_update",
    "reg_loss",
)

RESIDUAL_TOLERANCE = 1e-12


def _check_theta(theta: float) -> float:
    if not 0.0 <= theta <= 1.0:
        raise ConfigError([f"theta: decay factor must lie in [0, 1], got {theta}"])
    return float(theta)


class PromptBank:
    """The learnable prompt tokens acting as cluster proxies, with their moving-average shadow.

    The shadow is a statistic of the prompts, never touched by the optimizer. It is the
    prompt state the regularizer penalizes and the one used at inference.
    """

    def __init__(self, prompts: Parameter, *, theta: float = 0.9, shadow: npt.ArrayLike | None = None, step: int = 0) -> None:
        if prompts.ndim != 2:
            raise ShapeError("PromptBank", prompts.shape, detail="prompts must be a C x D matrix")

        self.prompts: Parameter = prompts
        """The current ``C x D`` prompt embeddings."""
        self.shadow: np.ndarray = prompts.numpy() if shadow is None else np.array(shadow, dtype=prompts.values.dtype)
        """The ``C x D`` moving average of the prompts."""
        self.theta: float = _check_theta(theta)
        """The decay factor of the moving average."""
        self.step: int = step
        """The number of moving-average updates performed."""

        if self.shadow.shape != prompts.shape:
            raise ShapeError("PromptBank", prompts.shape, self.shadow.shape)

    def __repr__(self) -> str:
        return f"<PromptBank clusters={self.clusters} dim={self.dim} theta={self.theta} step={self.step}>"

    @property
    def clusters(self) -> int:
        return self.prompts.shape[0]

    @property
    def dim(self) -> int:
        return self.prompts.shape[1]

    def shadow_tensor(self) -> Tensor:
        """The shadow as a constant tensor."""
        return Tensor(self.shadow.copy())

    def reset_shadow(self) -> None:
        self.shadow = self.prompts.numpy()


class AssignmentMatrix:
    """The ``N x C`` row-stochastic patch to cluster probabilities.

    :attr:`tensor` keeps its place on the tape, so losses built from it reach both the
    patch tokens and the prompts.
    """

    __slots__ = ("tensor",)

    def __init__(self, tensor: Tensor) -> None:
        self.tensor: Tensor = tensor

    def __repr__(self) -> str:
        return f"<AssignmentMatrix patches={self.patches} clusters={self.clusters}>"

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    @property
    def patches(self) -> int:
        return self.tensor.shape[0]

    @property
    def clusters(self) -> int:
        return self.tensor.shape[1]


class ClusterPartition:
    """The hard assignment of each patch to one cluster.

    Attributes
    ----------
    labels: :class:`numpy.ndarray`
        The cluster index of every patch.
    groups: list[list[:class:`int`]]
        For each cluster, the member patch indices in their original order.
    empty: list[:class:`bool`]
        For each cluster, whether it has no member.
    max_probability: :class:`numpy.ndarray`
        The probability of the chosen cluster for every patch.
    """

    __slots__ = ("labels", "groups", "empty", "max_probability")

    def __init__(self, labels: np.ndarray, clusters: int, max_probability: np.ndarray) -> None:
        self.labels: np.ndarray = labels
        self.groups: list[list[int]] = [np.flatnonzero(labels == c).tolist() for c in range(clusters)]
        self.empty: list[bool] = [not g for g in self.groups]
        self.max_probability: np.ndarray = max_probability

    def __repr__(self) -> str:
        return f"<ClusterPartition sizes={self.sizes()}>"

    @property
    def clusters(self) -> int:
        return len(self.groups)

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]


def gram_schmidt(rows: npt.ArrayLike, *, tolerance: float = RESIDUAL_TOLERANCE) -> np.ndarray:
    """Orthonormalizes the rows of a matrix in order.

    Raises :exc:`NumericFailure` if a row is, within ``tolerance``, a combination of the
    rows before it.
    """
    basis: list[np.ndarray] = []
    for i, row in enumerate(np.asarray(rows, dtype=np.float64)):
        u = _residual(basis, row)
        norm = float(np.linalg.norm(u))
        if norm < tolerance:
            raise NumericFailure(f"row {i} is linearly dependent on the rows before it (residual {norm:.3e})")
        basis.append(u / norm)
    return np.array(basis).reshape(np.shape(rows))


def _residual(basis: Sequence[np.ndarray], row: np.ndarray) -> np.ndarray:
    u = row.copy()
    for q in basis:
        u -= np.dot(q, u) * q
    return u


def init_prompts(
    clusters: int,
    dim: int,
    rng: np.random.Generator,
    *,
    theta: float = 0.9,
    registry: ModelParams | None = None,
    max_attempts: int = 16,
) -> PromptBank:
    """Creates ``clusters`` orthonormal prompt tokens in ``dim`` dimensions.

    Rows are drawn Xavier-uniform and orthonormalized in order. A row whose residual
    falls under the tolerance is redrawn, up to ``max_attempts`` times in total.

    Parameters
    ----------
    clusters: :class:`int`
        The number of prompts. Must not exceed ``dim``.
    dim: :class:`int`
        The embedding dimension.
    rng: :class:`numpy.random.Generator`
        The generator to draw from.
    theta: :class:`float`
        The decay factor of the moving average.
    registry: :class:`ModelParams` | :data:`None`
        If given, the prompts are registered there under the name ``prompts``.
    """
    problems: list[str] = []
    if clusters < 1:
        problems.append(f"clusters: need at least one prompt, got {clusters}")
    if clusters > dim:
        problems.append(f"clusters: {clusters} prompts can not be orthonormal in {dim} dimensions")
    if problems:
        raise ConfigError(problems)

    raw = xavier_uniform_init(clusters, dim, rng)
    bound = xavier_bound(clusters, dim)
    basis: list[np.ndarray] = []
    redraws = 0

    for i in range(clusters):
        row = raw[i]
        while True:
            u = _residual(basis, row)
            norm = float(np.linalg.norm(u))
            if norm >= RESIDUAL_TOLERANCE:
                break
            redraws += 1
            if redraws > max_attempts:
                raise NumericFailure(f"could not draw an independent prompt {i} after {max_attempts} attempts")
            _log.debug("Redrawing prompt %d, residual norm %.3e", i, norm)
            row = rng.uniform(-bound, bound, size=dim)
        basis.append(u / norm)

    values = np.array(basis)
    if registry is not None:
        prompts = registry.register("prompts", values, ParamGroup.prompts)
    else:
        prompts = Parameter(values, name="prompts")
    return PromptBank(prompts, theta=theta)


def assign(e1: Tensor, p1: Tensor) -> AssignmentMatrix:
    """Softmaxes the inner products of every patch token with every prompt token.

    Row ``i`` of the result is the probability of patch ``i`` belonging to each cluster.
    """
    if e1.ndim != 2 or p1.ndim != 2 or e1.shape[1] != p1.shape[1]:
        raise ShapeError("assign", e1.shape, p1.shape)
    if e1.shape[0] < 1 or p1.shape[0] < 1:
        raise ShapeError("assign", e1.shape, p1.shape, detail="need at least one patch and one prompt")
    return AssignmentMatrix(ops.softmax(e1 @ p1.T, axis=-1))


def partition(assignment: AssignmentMatrix | npt.ArrayLike) -> ClusterPartition:
    """Assigns each patch to its most probable cluster, the lowest index on ties."""
    values = assignment.values if isinstance(assignment, AssignmentMatrix) else np.asarray(assignment, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError("partition", values.shape, detail="expected an N x C matrix")

    labels = np.argmax(values, axis=1)
    return ClusterPartition(labels, values.shape[1], values[np.arange(values.shape[0]), labels])


def ema_update(bank: PromptBank, current: Tensor, *, commit: bool = True) -> Tensor:
    """Moves the shadow of ``bank`` towards ``current``.

    Returns ``theta * shadow + (1 - theta) * current`` where the shadow term is a constant,
    so gradients only reach ``current``. With ``commit`` the result becomes the new shadow
    and the step counter advances.
    """
    theta = _check_theta(bank.theta)
    current = as_tensor(current)
    if current.shape != bank.shadow.shape:
        raise ShapeError("ema_update", bank.shadow.shape, current.shape)

    updated = ops.scale(bank.shadow_tensor(), theta) + ops.scale(current, 1.0 - theta)
    if commit:
        bank.shadow = updated.numpy()
        bank.step += 1
    return updated


def reg_loss(prompts: Tensor, gram: GramSide = GramSide.rows) -> Tensor:
    """The Frobenius distance of the Gram matrix of ``prompts`` to the identity.

    With :attr:`GramSide.rows` this is ``||P @ P.T - I_C||``, zero exactly when the rows
    are orthonormal. With :attr:`GramSide.columns` it is ``||P.T @ P - I_D||``.
    """
    if prompts.ndim != 2:
        raise ShapeError("reg_loss", prompts.shape, detail="expected a matrix")

    if gram is GramSide.rows:
        product = prompts @ prompts.T
    else:
        product = prompts.T @ prompts
    identity = np.eye(product.shape[0], dtype=product.values.dtype)
    return ops.frobenius_norm(product - identity)
