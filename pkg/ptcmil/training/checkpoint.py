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
import struct
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from ptcmil.errors import CheckpointError
from ptcmil.utils import _from_json, _to_json

if TYPE_CHECKING:
    from ptcmil.model import PTCMIL

    from .optim import AdamW

_log = logging.getLogger(__name__)

__all__ = (
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "Checkpoint",
)

CHECKPOINT_MAGIC = b"PTCK"
CHECKPOINT_VERSION = 1

_PREAMBLE = struct.Struct("<4sHI")
_F8 = np.dtype("<f8")


class Checkpoint:
    """A snapshot of a model, its prompt shadow and its optimizer state.

    The binary form is the magic ``PTCK``, a little-endian ``u16`` version, a ``u32``
    header length, a key-sorted JSON header and then every array as little-endian
    doubles in row-major order: the parameters in registry order, the prompt shadow,
    and the first then second optimizer moments in the header's order.

    Parameters
    ----------
    config: dict[:class:`str`, Any]
        The model configuration, as :meth:`ModelConfig.to_dict` returns it.
    params: dict[:class:`str`, :class:`numpy.ndarray`]
        Every named parameter array, in registry order.
    shadow: :class:`numpy.ndarray` | :data:`None`
        The prompt shadow, ``None`` without clustering.
    bank_step: :class:`int`
        The number of moving-average updates of the shadow.
    frozen: list[:class:`str`]
        The names of the frozen parameters.
    optimizer: dict[:class:`str`, Any] | :data:`None`
        The optimizer hyperparameters and step count.
    moments: dict[:class:`str`, tuple[:class:`numpy.ndarray`, :class:`numpy.ndarray`]]
        The first and second moments, keyed by parameter name.
    meta: dict[:class:`str`, Any]
        Free-form run information, like the epoch and validation metric.
    """

    def __init__(
        self,
        config: dict[str, Any],
        params: dict[str, np.ndarray],
        *,
        shadow: np.ndarray | None = None,
        bank_step: int = 0,
        frozen: list[str] | None = None,
        optimizer: dict[str, Any] | None = None,
        moments: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
        meta: dict[str, Any] | None = None,
    ) -> None:
        self.config: dict[str, Any] = config
        self.params: dict[str, np.ndarray] = params
        self.shadow: np.ndarray | None = shadow
        self.bank_step: int = bank_step
        self.frozen: list[str] = frozen or []
        self.optimizer: dict[str, Any] | None = optimizer
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = moments or {}
        self.meta: dict[str, Any] = meta or {}

    def __repr__(self) -> str:
        return f"<Checkpoint arrays={len(self.params)} meta={self.meta}>"

    @classmethod
    def capture(cls, model: PTCMIL, optimizer: AdamW | None = None, **meta: Any) -> Checkpoint:
        """Copies the state of ``model`` and ``optimizer``. Extra keywords go to :attr:`meta`."""
        opt: dict[str, Any] | None = None
        moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        if optimizer is not None:
            opt = {"t": optimizer.t, **optimizer.hyperparameters()}
            moments = {n: (optimizer.m[n].copy(), optimizer.v[n].copy()) for n in optimizer.m if n in optimizer.v}

        bank = model.bank
        return cls(
            model.config.to_dict(),
            model.params.state_dict(),
            shadow=bank.shadow.copy() if bank is not None else None,
            bank_step=bank.step if bank is not None else 0,
            frozen=[e.name for e in model.params.entries() if e.frozen],
            optimizer=opt,
            moments=moments,
            meta={k: v for k, v in meta.items() if v is not None},
        )

    def restore(self, model: PTCMIL, optimizer: AdamW | None = None) -> None:
        """Loads this snapshot into a model of the same architecture."""
        try:
            model.params.load_state_dict(self.params)
        except KeyError as exc:
            raise CheckpointError(f"checkpoint does not match the model architecture: {exc.args[0]}") from None
        for entry in model.params.entries():
            entry.frozen = entry.name in self.frozen
        if model.bank is not None:
            if self.shadow is None:
                raise CheckpointError("checkpoint has no prompt shadow for a clustering model")
            model.bank.shadow = self.shadow.copy()
            model.bank.step = self.bank_step

        if optimizer is not None and self.optimizer is not None:
            optimizer.t = int(self.optimizer["t"])
            optimizer.m = {n: m.copy() for n, (m, _) in self.moments.items()}
            optimizer.v = {n: v.copy() for n, (_, v) in self.moments.items()}

    def build_model(self) -> PTCMIL:
        """Creates a model from the stored configuration and loads this snapshot into it."""
        from ptcmil.model import PTCMIL, ModelConfig

        model = PTCMIL(ModelConfig.from_dict(self.config))
        self.restore(model)
        return model

    def build_optimizer(self, model: PTCMIL) -> AdamW:
        from .optim import AdamW

        hp = self.optimizer or {}
        optimizer = AdamW(
            model.params,
            lr=hp.get("lr", 2e-4),
            weight_decay=hp.get("weight_decay", 1e-5),
            betas=(hp.get("beta1", 0.9), hp.get("beta2", 0.999)),
            eps=hp.get("eps", 1e-8),
        )
        self.restore(model, optimizer)
        return optimizer

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config,
            "params": [[n, list(a.shape)] for n, a in self.params.items()],
            "shadow": list(self.shadow.shape) if self.shadow is not None else None,
            "bank_step": self.bank_step,
            "frozen": self.frozen,
            "optimizer": self.optimizer,
            "moments": [[n, list(m.shape)] for n, (m, _) in self.moments.items()],
            "meta": self.meta,
        }
        encoded = _to_json(header).encode("utf-8")

        chunks = [_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(encoded)), encoded]
        chunks.extend(np.ascontiguousarray(a, dtype=_F8).tobytes() for a in self.params.values())
        if self.shadow is not None:
            chunks.append(np.ascontiguousarray(self.shadow, dtype=_F8).tobytes())
        chunks.extend(np.ascontiguousarray(m, dtype=_F8).tobytes() for m, _ in self.moments.values())
        chunks.extend(np.ascontiguousarray(v, dtype=_F8).tobytes() for _, v in self.moments.values())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> Checkpoint:
        if len(data) < _PREAMBLE.size:
            raise CheckpointError("truncated checkpoint preamble", offset=len(data))

        magic, version, length = _PREAMBLE.unpack_from(data, 0)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}", offset=0)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}", offset=4)

        offset = _PREAMBLE.size
        if len(data) < offset + length:
            raise CheckpointError("truncated checkpoint header", offset=len(data))
        try:
            header = _from_json(data[offset : offset + length].decode("utf-8"))
        except ValueError as exc:
            raise CheckpointError(f"malformed checkpoint header: {exc}", offset=offset) from None
        offset += length

        def take(shape: list[int], what: str) -> np.ndarray:
            nonlocal offset
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + count * _F8.itemsize
            if end > len(data):
                raise CheckpointError(f"truncated checkpoint while reading {what}", offset=len(data))
            arr = np.frombuffer(data, dtype=_F8, count=count, offset=offset).reshape(shape).astype(np.float64)
            offset = end
            return arr

        try:
            params = {name: take(shape, name) for name, shape in header["params"]}
            shadow = take(header["shadow"], "prompt shadow") if header["shadow"] is not None else None
            first = [(name, take(shape, f"first moment of {name}")) for name, shape in header["moments"]]
            second = [take(shape, f"second moment of {name}") for name, shape in header["moments"]]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed checkpoint header: missing {exc}", offset=_PREAMBLE.size) from None

        if offset != len(data):
            raise CheckpointError(f"{len(data) - offset} trailing bytes after checkpoint", offset=offset)

        return cls(
            header["config"],
            params,
            shadow=shadow,
            bank_step=int(header["bank_step"]),
            frozen=list(header["frozen"]),
            optimizer=header["optimizer"],
            moments={name: (m, v) for (name, m), v in zip(first, second)},
            meta=header["meta"],
        )

    def save(self, path: str | Path) -> None:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        _log.info("Saved checkpoint with %d arrays to %s (%d bytes)", len(self.params), path, len(data))

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        try:
            data = Path(path).read_bytes()
        except FileNotFoundError:
            raise CheckpointError(f"checkpoint {str(path)!r} does not exist") from None
        return cls.from_bytes(data)
