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
from pathlib import Path

import numpy as np

from ptcmil.errors import DataError

from .bagfile import read_bags, write_bags
from .records import BagRecord

_log = logging.getLogger(__name__)

__all__ = (
    "SPLITS",
    "split_paths",
    "write_split",
    "load_split",
    "split_records",
    "kfold",
)

SPLITS = ("train", "val", "test")


def split_paths(directory: str | Path, name: str) -> tuple[Path, Path]:
    """The bag file and the manifest of split ``name`` under ``directory``."""
    root = Path(directory)
    return root / f"{name}.ptcb", root / f"{name}.txt"


def write_split(directory: str | Path, name: str, records: Sequence[BagRecord], *, input_dim: int | None = None) -> None:
    """Writes the bags of a split and its manifest, one bag id per line."""
    bags, manifest = split_paths(directory, name)
    Path(directory).mkdir(parents=True, exist_ok=True)
    write_bags(bags, records, input_dim=input_dim)
    manifest.write_text("".join(f"{r.bag_id}\n" for r in records), encoding="utf-8")


def load_split(directory: str | Path, name: str) -> list[BagRecord]:
    """Reads split ``name`` and checks it against its manifest.

    Raises :exc:`DataError` if the split is missing or disagrees with its manifest.
    """
    bags, manifest = split_paths(directory, name)
    if not bags.exists():
        raise DataError(f"split {name!r} does not exist under {str(directory)!r}")

    records = read_bags(bags)
    if manifest.exists():
        ids = [line for line in manifest.read_text(encoding="utf-8").splitlines() if line]
        if ids != [r.bag_id for r in records]:
            raise DataError(f"split {name!r} does not match its manifest {str(manifest)!r}")
    else:
        _log.warning("Split %s has no manifest, reading %s as is", name, bags)
    return records


def split_records(
    records: Sequence[BagRecord], train_size: int, val_size: int, rng: np.random.Generator
) -> dict[str, list[BagRecord]]:
    """Shuffles ``records`` into train, val and test splits. The test split takes the rest.

    Raises :exc:`DataError` if the requested sizes leave no test bags.
    """
    if train_size < 1 or val_size < 1 or train_size + val_size >= len(records):
        raise DataError(
            f"can not split {len(records)} bags into {train_size} train, {val_size} val and a non-empty test split"
        )
    order = [int(i) for i in rng.permutation(len(records))]
    cut = train_size + val_size
    return {
        "train": [records[i] for i in order[:train_size]],
        "val": [records[i] for i in order[train_size:cut]],
        "test": [records[i] for i in order[cut:]],
    }


def kfold(
    records: Sequence[BagRecord], folds: int, rng: np.random.Generator
) -> list[tuple[list[BagRecord], list[BagRecord]]]:
    """Splits ``records`` into ``folds`` seeded ``(train, val)`` pairs with disjoint val parts."""
    if not 2 <= folds <= len(records):
        raise DataError(f"can not split {len(records)} bags into {folds} folds")
    parts = np.array_split(rng.permutation(len(records)), folds)
    out: list[tuple[list[BagRecord], list[BagRecord]]] = []
    for k, held in enumerate(parts):
        rest = np.concatenate([p for j, p in enumerate(parts) if j != k])
        out.append(([records[int(i)] for i in rest], [records[int(i)] for i in held]))
    return out
