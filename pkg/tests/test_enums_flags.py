import pytest

from ptcmil.enums import GramSide, LabelKind, PoolingMode, Task
from ptcmil.errors import (
    BagFileError,
    CheckpointError,
    ConfigError,
    DataError,
    GradientError,
    MetricError,
    NumericFailure,
    PtcmilException,
    ShapeError,
)
from ptcmil.flags import ParamGroup
from ptcmil.missing import MISSING, is_missing
from ptcmil.utils import stable_hash


class TestEnums:
    @pytest.mark.parametrize(
        ("raw", "member"),
        [("pro", PoolingMode.pro), ("CLS", PoolingMode.cls), (" Pro+Cls ", PoolingMode.pro_cls), ("Survival", Task.survival)],
    )
    def test_case_insensitive(self, raw, member):
        assert type(member)(raw) is member

    def test_str_is_value(self):
        assert str(PoolingMode.pro_cls) == "pro+cls"
        assert str(GramSide.columns) == "columns"

    def test_pooling_properties(self):
        assert PoolingMode.pro.uses_prototypes and not PoolingMode.pro.uses_cls
        assert PoolingMode.cls.uses_cls and not PoolingMode.cls.uses_prototypes
        assert PoolingMode.pro_cls.uses_cls and PoolingMode.pro_cls.uses_prototypes

    def test_from_config(self):
        assert Task.from_config("task", Task.survival) is Task.survival
        with pytest.raises(ConfigError) as info:
            GramSide.from_config("gram", "diagonal")
        assert info.value.problems == ["gram: unknown value 'diagonal', expected one of rows, columns"]

    def test_label_kind_tags(self):
        assert [k.value for k in LabelKind] == [0, 1, 2]
        with pytest.raises(ValueError):
            LabelKind(3)


class TestParamGroup:
    def test_aliases(self):
        assert ParamGroup.adaptation == ParamGroup.head | ParamGroup.score_head
        assert not ParamGroup.backbone & ParamGroup.adaptation
        assert ParamGroup.prompts not in ParamGroup.backbone

    def test_all_and_none(self):
        assert ParamGroup.all().names() == [
            "embedding",
            "cls_token",
            "prompts",
            "global_layer",
            "local_layer",
            "score_head",
            "head",
        ]
        assert ParamGroup.none().names() == []

    def test_from_names(self):
        assert ParamGroup.from_names("k", "head, score_head") == ParamGroup.adaptation
        assert ParamGroup.from_names("k", ["all"]) == ParamGroup.all()
        assert ParamGroup.from_names("k", "none") == ParamGroup.none()

    def test_unknown_names_are_collected(self):
        with pytest.raises(ConfigError) as info:
            ParamGroup.from_names("adapt_groups", "head,decoder,mlp")
        assert info.value.problems == [
            "adapt_groups: unknown parameter group 'decoder'",
            "adapt_groups: unknown parameter group 'mlp'",
        ]


class TestErrors:
    @pytest.mark.parametrize(
        ("error", "code"),
        [
            (ConfigError(["a: b"]), 2),
            (DataError("x"), 3),
            (BagFileError("x", offset=1), 3),
            (CheckpointError("x"), 3),
            (ShapeError("matmul", (2, 3), (4, 5)), 4),
            (GradientError("w"), 4),
            (NumericFailure("x"), 4),
            (MetricError("x"), 4),
        ],
    )
    def test_exit_codes(self, error, code):
        assert isinstance(error, PtcmilException)
        assert error.exit_code == code

    def test_shape_error_message(self):
        error = ShapeError("matmul", (2, 3), (4, 5), detail="inner extents differ")
        assert error.shapes == ((2, 3), (4, 5))
        assert str(error) == "matmul: incompatible shapes (2, 3) and (4, 5) (inner extents differ)"
        assert isinstance(error, ValueError)

    def test_config_error_joins_problems(self):
        error = ConfigError(["a: bad", "b: worse"])
        assert error.problems == ["a: bad", "b: worse"]
        assert str(error) == "a: bad; b: worse"

    def test_offsets_in_messages(self):
        assert str(BagFileError("truncated", offset=12, bag_index=3)) == "truncated (in bag 3 at byte offset 12)"
        assert str(CheckpointError("bad magic", offset=0)) == "bad magic (at byte offset 0)"
        assert str(CheckpointError("missing")) == "missing"


def test_missing_sentinel():
    assert not MISSING
    assert repr(MISSING) == "..."
    assert is_missing(MISSING)
    assert not is_missing(0) and not is_missing(None)


def test_stable_hash_ignores_key_order():
    assert stable_hash({"a": 1, "b": [1.5, "x"]}) == stable_hash({"b": [1.5, "x"], "a": 1})
    assert stable_hash({"a": 1}) != stable_hash({"a": 2})
    assert len(stable_hash({})) == 64
