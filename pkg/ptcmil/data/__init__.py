"""
ptcmil.data
~~~~~~~~~~~

Bag records, synthetic bag generators, the ``.ptcb`` bag file format and splits.
"""

from .bagfile import BAGFILE_MAGIC, BAGFILE_VERSION, decode_bags, encode_bags, label_kind, read_bags, write_bags
from .records import BagLabel, BagRecord
from .splits import SPLITS, kfold, load_split, split_paths, split_records, write_split
from .synthetic import (
    SyntheticClassConfig,
    SyntheticSurvConfig,
    expected_event_time,
    gen_classification_bags,
    gen_survival_bags,
    survival_cut_points,
)

__all__ = (
    "BagLabel",
    "BagRecord",
    "SyntheticClassConfig",
    "SyntheticSurvConfig",
    "gen_classification_bags",
    "gen_survival_bags",
    "expected_event_time",
    "survival_cut_points",
    "BAGFILE_MAGIC",
    "BAGFILE_VERSION",
    "label_kind",
    "encode_bags",
    "decode_bags",
    "write_bags",
    "read_bags",
    "SPLITS",
    "split_paths",
    "write_split",
    "load_split",
    "split_records",
    "kfold",
)
