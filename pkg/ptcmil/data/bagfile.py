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
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from ptcmil.enums import LabelKind
from ptcmil.errors import BagFileError, DataError
from ptcmil.heads import SurvivalLabel

from .records import BagLabel, BagRecord

_log = logging.getLogger(__name__)

__all__ = (
    "BAGFILE_MAGIC",
    "BAGFILE_VERSION",
    "label_kind",
    "encode_bags",
    "decode_bags",
    "write_bags",
    "read_bags",
)

BAGFILE_MAGIC = b"PTCB"
BAGFILE_VERSION = 1

_HEADER = struct.Struct("<4sHIIB")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_F8 = np.dtype("<f8")


def label_kind(label: BagLabel) -> LabelKind:
    if label is None:
        return LabelKind.none
    if isinstance(label, SurvivalLabel):
        return LabelKind.survival
    return LabelKind.classification


def _dataset_kind(records: Sequence[BagRecord]) -> LabelKind:
    kinds = {label_kind(r.label) for r in records} - {LabelKind.none}
    if len(kinds) > 1:
        raise DataError("a bag file holds a single label kind, got classification and survival labels")
    return kinds.pop() if kinds else LabelKind.none


def _text(value: str, size: struct.Struct, what: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) >= 1 << (8 * size.size):
        raise DataError(f"{what} is too long to encode ({len(raw)} bytes)")
    return size.pack(len(raw)) + raw


def _encode_label(label: BagLabel) -> bytes:
    kind = label_kind(label)
    out = _U8.pack(kind.value)
    if isinstance(label, SurvivalLabel):
        out += _U32.pack(label.time_bin) + _U8.pack(label.censorship)
    elif label is not None:
        if label < 0:
            raise DataError(f"class labels must be non-negative, got {label}")
        out += _U32.pack(int(label))
    return out


def encode_bags(records: Sequence[BagRecord], *, input_dim: int | None = None) -> bytes:
    """Encodes ``records`` into the bag file format.

    The header is the magic ``PTCB``, a ``u16`` version, a ``u32`` bag count, the ``u32``
    feature dimension and a ``u8`` label kind. Every bag follows as its ``u16`` length
    prefixed UTF-8 id, the ``u32`` instance count, the ``u8`` label kind and its payload,
    the features as little-endian doubles and the metadata as a ``u16`` entry count of
    ``u16`` length prefixed keys and ``u32`` length prefixed values.

    ``input_dim`` is only needed to write an empty file of a given dimension.
    """
    dim = records[0].input_dim if records else (input_dim or 0)
    chunks = [_HEADER.pack(BAGFILE_MAGIC, BAGFILE_VERSION, len(records), dim, _dataset_kind(records).value)]

    for index, record in enumerate(records):
        if record.input_dim != dim:
            raise DataError(f"bag {index} ({record.bag_id!r}) has dimension {record.input_dim}, expected {dim}")
        chunks.append(_text(record.bag_id, _U16, "bag id"))
        chunks.append(_U32.pack(record.instances))
        chunks.append(_encode_label(record.label))
        chunks.append(np.ascontiguousarray(record.features, dtype=_F8).tobytes())
        chunks.append(_U16.pack(len(record.metadata)))
        for key, value in record.metadata.items():
            chunks.append(_text(key, _U16, "metadata key"))
            chunks.append(_text(value, _U32, "metadata value"))

    return b"".join(chunks)


class _Reader:
    __slots__ = ("data", "offset", "bag_index")

    def __init__(self, data: bytes) -> None:
        self.data: bytes = data
        self.offset: int = 0
        self.bag_index: int | None = None

    def fail(self, message: str, offset: int | None = None) -> BagFileError:
        return BagFileError(message, offset=self.offset if offset is None else offset, bag_index=self.bag_index)

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise self.fail(f"truncated bag file while reading {what}", len(self.data))
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> int:
        return fmt.unpack(self.take(fmt.size, what))[0]

    def text(self, fmt: struct.Struct, what: str) -> str:
        start = self.offset
        raw = self.take(self.unpack(fmt, f"{what} length"), what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise self.fail(f"{what} is not valid UTF-8", start) from None


def _decode_label(reader: _Reader) -> BagLabel:
    start = reader.offset
    tag = reader.unpack(_U8, "label tag")
    try:
        kind = LabelKind(tag)
    except ValueError:
        raise reader.fail(f"unknown label tag {tag}", start) from None

    if kind is LabelKind.classification:
        return reader.unpack(_U32, "class label")
    if kind is LabelKind.survival:
        time_bin = reader.unpack(_U32, "time bin")
        censorship = reader.unpack(_U8, "censorship")
        try:
            return SurvivalLabel(time_bin, censorship)
        except ValueError as exc:
            raise reader.fail(str(exc), start) from None
    return None


def decode_bags(data: bytes) -> list[BagRecord]:
    """Decodes a bag file produced by :func:`encode_bags`.

    Raises :exc:`BagFileError` with the byte offset, and the bag index inside a bag,
    on a bad magic or version, truncation, malformed values or trailing bytes.
    """
    reader = _Reader(data)
    if len(data) < _HEADER.size:
        raise reader.fail("truncated bag file header", len(data))
    magic, version, count, dim, tag = _HEADER.unpack_from(data, 0)
    if magic != BAGFILE_MAGIC:
        raise reader.fail(f"bad bag file magic {magic!r}", 0)
    if version != BAGFILE_VERSION:
        raise reader.fail(f"unsupported bag file version {version}", 4)
    try:
        LabelKind(tag)
    except ValueError:
        raise reader.fail(f"unknown dataset label tag {tag}", _HEADER.size - 1) from None
    reader.offset = _HEADER.size

    records: list[BagRecord] = []
    for index in range(count):
        reader.bag_index = index
        start = reader.offset
        bag_id = reader.text(_U16, "bag id")
        instances = reader.unpack(_U32, "instance count")
        label = _decode_label(reader)
        raw = reader.take(instances * dim * _F8.itemsize, "features")
        features = np.frombuffer(raw, dtype=_F8).reshape(instances, dim).astype(np.float64)

        metadata: dict[str, str] = {}
        for _ in range(reader.unpack(_U16, "metadata count")):
            key = reader.text(_U16, "metadata key")
            metadata[key] = reader.text(_U32, "metadata value")

        try:
            records.append(BagRecord(bag_id, features, label, metadata))
        except DataError as exc:
            raise reader.fail(str(exc), start) from None

    reader.bag_index = None
    if reader.offset != len(data):
        raise reader.fail(f"{len(data) - reader.offset} trailing bytes after the last bag")
    return records


def write_bags(path: str | Path, records: Sequence[BagRecord], *, input_dim: int | None = None) -> None:
    data = encode_bags(records, input_dim=input_dim)
    Path(path).write_bytes(data)
    _log.info("Wrote %d bags to %s (%d bytes)", len(records), path, len(data))


def read_bags(path: str | Path) -> list[BagRecord]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"bag file {str(path)!r} does not exist") from None
    records = decode_bags(data)
    _log.debug("Read %d bags from %s", len(records), path)
    return records
