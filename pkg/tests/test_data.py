import math

import numpy as np
import pytest

from ptcmil.data import (
    BAGFILE_MAGIC,
    SPLITS,
    BagRecord,
    SyntheticClassConfig,
    SyntheticSurvConfig,
    decode_bags,
    encode_bags,
    expected_event_time,
    gen_classification_bags,
    gen_survival_bags,
    kfold,
    load_split,
    read_bags,
    split_paths,
    split_records,
    survival_cut_points,
    write_bags,
    write_split,
)
from ptcmil.errors import BagFileError, ConfigError, DataError
from ptcmil.heads import SurvivalLabel


def _random_bags(rng, count=10, dim=3):
    bags = []
    for i in range(count):
        label = int(rng.integers(0, 3))
        bags.append(
            BagRecord(f"bag-{i}-é", rng.normal(size=(int(rng.integers(1, 6)), dim)), label, {"index": str(i), "note": "ü" * i})
        )
    return bags


class TestBagRecord:
    def test_needs_instances(self):
        with pytest.raises(DataError):
            BagRecord("empty", np.zeros((0, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            BagRecord("nan", [[1.0, math.nan]])

    def test_features_are_copied(self):
        raw = np.ones((2, 2))
        record = BagRecord("a", raw)
        raw[0, 0] = 5.0
        assert record.features[0, 0] == 1.0

    def test_metadata_is_stringified(self):
        assert BagRecord("a", np.ones((1, 2)), 0, {"seed": 3}).metadata == {"seed": "3"}


class TestClassificationGenerator:
    def test_labels_follow_witnesses(self, witness_bags):
        assert len(witness_bags) == 12
        for bag in witness_bags:
            witnesses = int(bag.metadata["witnesses"])
            assert bag.label == int(witnesses >= 1)
            if bag.label:
                assert witnesses == max(1, math.ceil(0.2 * bag.instances))

    def test_balance_and_sizes(self, witness_bags):
        assert sum(b.label for b in witness_bags) == 6
        assert all(8 <= b.instances <= 12 for b in witness_bags)
        assert all(b.input_dim == 6 for b in witness_bags)

    def test_ids_and_provenance(self, witness_bags):
        assert [b.bag_id for b in witness_bags] == [f"cls-{i:05d}" for i in range(12)]
        assert len({b.metadata["config_hash"] for b in witness_bags}) == 1
        assert witness_bags[0].metadata["seed"] == "3"

    def test_seeded_datasets_are_byte_identical(self):
        config = SyntheticClassConfig(bags_per_class=4, min_instances=5, max_instances=9, input_dim=4, seed=8)
        assert encode_bags(gen_classification_bags(config)) == encode_bags(gen_classification_bags(config))

    def test_seed_changes_dataset(self):
        a = SyntheticClassConfig(bags_per_class=3, min_instances=5, max_instances=9, input_dim=4, seed=1)
        b = SyntheticClassConfig(bags_per_class=3, min_instances=5, max_instances=9, input_dim=4, seed=2)
        assert encode_bags(gen_classification_bags(a)) != encode_bags(gen_classification_bags(b))

    def test_witnesses_shift_along_a_direction(self):
        config = SyntheticClassConfig(
            bags_per_class=30, min_instances=20, max_instances=20, input_dim=8, witness_rate=0.5, separation=4.0, seed=5
        )
        bags = gen_classification_bags(config)
        pos = np.concatenate([b.features for b in bags if b.label == 1]).mean(axis=0)
        neg = np.concatenate([b.features for b in bags if b.label == 0]).mean(axis=0)
        # half the positive instances are shifted by 4 along a unit vector
        assert np.linalg.norm(pos - neg) == pytest.approx(2.0, abs=0.5)

    def test_witness_count(self):
        config = SyntheticClassConfig(witness_rate=0.05)
        assert config.witness_count(30) == 2
        assert config.witness_count(10) == 1
        assert SyntheticClassConfig(witness_rate=1.0).witness_count(7) == 7

    @pytest.mark.parametrize(
        ("kwargs", "key"),
        [
            ({"witness_rate": 0.0}, "witness_rate"),
            ({"witness_rate": 1.5}, "witness_rate"),
            ({"separation": 0.0}, "separation"),
            ({"min_instances": 0}, "min_instances"),
            ({"min_instances": 10, "max_instances": 5}, "max_instances"),
            ({"input_dim": 1}, "input_dim"),
            ({"noise_std": 0.0}, "noise_std"),
        ],
    )
    def test_invalid_config_names_key(self, kwargs, key):
        with pytest.raises(ConfigError) as info:
            SyntheticClassConfig(**kwargs)
        assert any(p.startswith(f"{key}:") for p in info.value.problems)


class TestSurvivalGenerator:
    def test_labels(self, survival_bags):
        assert len(survival_bags) == 24
        for bag in survival_bags:
            assert isinstance(bag.label, SurvivalLabel)
            assert 0 <= bag.label.time_bin < 4
            assert float(bag.metadata["time"]) > 0

    def test_no_censoring(self):
        config = SyntheticSurvConfig(patients=30, min_instances=3, max_instances=5, input_dim=4, censor_rate=0.0, seed=1)
        assert all(b.label.censorship == 0 for b in gen_survival_bags(config))

    def test_bins_split_uncensored_patients_evenly(self):
        config = SyntheticSurvConfig(patients=200, min_instances=3, max_instances=5, input_dim=4, seed=2)
        bags = gen_survival_bags(config)
        uncensored = [b for b in bags if not b.label.censored]
        counts = np.bincount([b.label.time_bin for b in uncensored], minlength=4)
        assert np.all(np.abs(counts - len(uncensored) / 4) < 1.5)

    def test_bins_follow_observed_times(self, survival_bags):
        times = np.array([float(b.metadata["time"]) for b in survival_bags])
        censored = np.array([b.label.censored for b in survival_bags])
        cuts = survival_cut_points(times, censored, 4)
        assert np.all(np.diff(cuts) >= 0)
        for bag, t in zip(survival_bags, times):
            assert bag.label.time_bin == min(int(np.searchsorted(cuts, t, side="right")), 3)

    def test_risk_is_the_mean_projection(self):
        direction = np.zeros(4)
        direction[2] = 2.0
        config = SyntheticSurvConfig(patients=5, min_instances=3, max_instances=5, input_dim=4, risk_direction=direction)
        for bag in gen_survival_bags(config):
            assert float(bag.metadata["risk"]) == pytest.approx(bag.features[:, 2].mean(), abs=1e-12)

    def test_expected_time_decreases_with_risk(self):
        assert expected_event_time(1.5) <= expected_event_time(0.5)
        risks = np.linspace(-2.0, 2.0, 9)
        assert np.all(np.diff(expected_event_time(risks)) < 0)

    def test_cut_points_fall_back_to_all_times(self):
        cuts = survival_cut_points([1.0, 2.0, 3.0, 4.0, 5.0], [True] * 5, 2)
        np.testing.assert_allclose(cuts, [3.0])

    def test_seeded_datasets_are_byte_identical(self):
        config = SyntheticSurvConfig(patients=10, min_instances=3, max_instances=5, input_dim=4, seed=6)
        assert encode_bags(gen_survival_bags(config)) == encode_bags(gen_survival_bags(config))

    @pytest.mark.parametrize(
        ("kwargs", "key"),
        [
            ({"censor_rate": 1.0}, "censor_rate"),
            ({"num_bins": 1}, "num_bins"),
            ({"risk_direction": [0.0] * 16}, "risk_direction"),
            ({"risk_direction": [1.0, 0.0]}, "risk_direction"),
        ],
    )
    def test_invalid_config_names_key(self, kwargs, key):
        with pytest.raises(ConfigError) as info:
            SyntheticSurvConfig(**kwargs)
        assert any(p.startswith(f"{key}:") for p in info.value.problems)


class TestBagFile:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.ptcb"
        write_bags(path, [], input_dim=5)
        assert path.read_bytes()[:4] == BAGFILE_MAGIC
        assert read_bags(path) == []

    def test_round_trip(self, rng, tmp_path):
        bags = _random_bags(rng)
        path = tmp_path / "bags.ptcb"
        write_bags(path, bags)
        assert read_bags(path) == bags

    def test_survival_round_trip(self, survival_bags):
        assert decode_bags(encode_bags(survival_bags)) == survival_bags

    def test_unlabeled_round_trip(self, rng):
        bags = [BagRecord("u", rng.normal(size=(2, 3)))]
        assert decode_bags(encode_bags(bags))[0].label is None

    def test_floats_are_bit_exact(self):
        values = np.array([[np.nextafter(1.0, 2.0), -0.0, 5e-324, 1.7976931348623157e308]])
        out = decode_bags(encode_bags([BagRecord("x", values, 0)]))[0].features
        assert out.tobytes() == values.astype("<f8").tobytes()

    def test_truncation_names_bag_index(self, rng):
        bags = _random_bags(rng, count=3)
        data = encode_bags(bags)
        first = len(encode_bags(bags[:1]))
        with pytest.raises(BagFileError) as info:
            decode_bags(data[: first + 5])
        assert info.value.bag_index == 1
        assert info.value.offset == first + 5
        assert "in bag 1" in str(info.value)

    def test_every_truncation_is_detected(self, rng):
        data = encode_bags(_random_bags(rng, count=2))
        for cut in range(len(data)):
            with pytest.raises(BagFileError):
                decode_bags(data[:cut])

    def test_bad_magic_and_version(self, rng):
        data = bytearray(encode_bags(_random_bags(rng, count=1)))
        with pytest.raises(BagFileError) as info:
            decode_bags(b"NOPE" + bytes(data[4:]))
        assert info.value.offset == 0
        data[4] = 7
        with pytest.raises(BagFileError) as info:
            decode_bags(bytes(data))
        assert info.value.offset == 4

    def test_trailing_bytes(self, rng):
        with pytest.raises(BagFileError, match="trailing"):
            decode_bags(encode_bags(_random_bags(rng, count=1)) + b"\x00")

    def test_mixed_label_kinds(self, rng):
        bags = [BagRecord("a", np.ones((1, 2)), 1), BagRecord("b", np.ones((1, 2)), SurvivalLabel(0, 1))]
        with pytest.raises(DataError):
            encode_bags(bags)

    def test_mismatched_dimensions(self):
        with pytest.raises(DataError):
            encode_bags([BagRecord("a", np.ones((1, 2)), 0), BagRecord("b", np.ones((1, 3)), 0)])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_bags(tmp_path / "missing.ptcb")


class TestSplits:
    def test_split_sizes_and_disjointness(self, witness_bags):
        splits = split_records(witness_bags, 6, 3, np.random.default_rng(0))
        assert [len(splits[name]) for name in SPLITS] == [6, 3, 3]
        ids = [b.bag_id for name in SPLITS for b in splits[name]]
        assert sorted(ids) == sorted(b.bag_id for b in witness_bags)

    def test_split_needs_test_bags(self, witness_bags):
        with pytest.raises(DataError):
            split_records(witness_bags, 8, 4, np.random.default_rng(0))

    def test_write_and_load(self, witness_bags, tmp_path):
        write_split(tmp_path, "train", witness_bags)
        bags_path, manifest = split_paths(tmp_path, "train")
        assert manifest.read_text().splitlines() == [b.bag_id for b in witness_bags]
        assert bags_path.name == "train.ptcb"
        assert load_split(tmp_path, "train") == witness_bags

    def test_manifest_mismatch(self, witness_bags, tmp_path):
        write_split(tmp_path, "val", witness_bags)
        split_paths(tmp_path, "val")[1].write_text("other\n")
        with pytest.raises(DataError):
            load_split(tmp_path, "val")

    def test_missing_manifest_is_tolerated(self, witness_bags, tmp_path):
        write_split(tmp_path, "test", witness_bags)
        split_paths(tmp_path, "test")[1].unlink()
        assert load_split(tmp_path, "test") == witness_bags

    def test_missing_split(self, tmp_path):
        with pytest.raises(DataError):
            load_split(tmp_path, "train")

    def test_kfold(self, witness_bags):
        folds = kfold(witness_bags, 5, np.random.default_rng(1))
        assert len(folds) == 5
        held = [b.bag_id for _, val in folds for b in val]
        assert sorted(held) == sorted(b.bag_id for b in witness_bags)
        for train, val in folds:
            assert len(train) + len(val) == 12
            assert not {b.bag_id for b in train} & {b.bag_id for b in val}

    @pytest.mark.parametrize("folds", [1, 13])
    def test_kfold_bounds(self, witness_bags, folds):
        with pytest.raises(DataError):
            kfold(witness_bags, folds, np.random.default_rng(0))
