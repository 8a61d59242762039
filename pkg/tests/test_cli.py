import csv
import inspect
from pathlib import Path
from typing import Literal

import pytest

from ptcmil.cli import SEED_ENV, Command, CommandTree, Context, Option, RunConfig, app, main, tree
from ptcmil.cli.config import parse_bool
from ptcmil.enums import PoolingMode, Task
from ptcmil.errors import ConfigError
from ptcmil.flags import ParamGroup
from ptcmil.model import ModelConfig
from ptcmil.training import Checkpoint

TINY = [
    "bags_per_class=10",
    "patients=20",
    "min_instances=6",
    "max_instances=10",
    "input_dim=6",
    "embed_dim=8",
    "clusters=3",
    "heads=2",
    "epochs=2",
    "lr=1e-3",
    "train_size=10",
    "val_size=5",
]


def _settings(*extra):
    out = []
    for entry in [*TINY, *extra]:
        out.extend(("--set", entry))
    return out


def _report(path):
    fields = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(": ")
        fields[key] = value
    return fields


@pytest.fixture(scope="module")
def classification_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("classification")
    data, run = root / "data", root / "run"
    assert main(["gen-data", "--task", "classification", "--out", str(data), "--seed", "5", *_settings()]) == 0
    assert main(["train", "--data", str(data), "--out", str(run), "--seed", "5", *_settings("task=classification")]) == 0
    return data, run


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig.build("task = classification", env={})
        assert config.task is Task.classification
        assert config.seed == 0
        assert config.pooling is PoolingMode.pro_cls
        assert config.adapt_groups == ParamGroup.adaptation
        assert config.sources["task"] == "file"
        assert config.sources["epochs"] == "default"

    def test_precedence(self):
        text = "task = survival\nseed = 3\nepochs = 4\n# comment\n\nclusters = 7"
        config = RunConfig.build(text, ["epochs=9"], env={SEED_ENV: "11"})
        assert (config.seed, config.epochs, config.clusters) == (3, 9, 7)
        assert config.sources["epochs"] == "override"

    def test_env_seed(self):
        config = RunConfig.build("task = survival", env={SEED_ENV: "11"})
        assert config.seed == 11
        assert config.sources["seed"] == "env"

    def test_problems_are_reported_together(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.build("bogus = 1\nepochs = many\npooling = max\nno equals sign", env={})
        keys = {p.split(":")[0] for p in info.value.problems}
        assert {"bogus", "epochs", "pooling", "task", "<config>"} <= keys

    def test_required_keys_can_be_relaxed(self):
        assert RunConfig.build("", required=(), env={}).data_dir is None

    def test_text_round_trip(self):
        config = RunConfig.build(
            "task = survival\nalpha = 0.25\nmerging = off\nadapt_groups = head\ngram = columns\ndata_dir = /tmp/x", env={}
        )
        again = RunConfig.build(config.to_text(), env={})
        assert again.to_dict() == config.to_dict()

    def test_load(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("task = classification\nepochs = 3\n")
        assert RunConfig.load(path, env={}).epochs == 3
        with pytest.raises(ConfigError, match="does not exist"):
            RunConfig.load(tmp_path / "missing.txt", env={})

    def test_replace_rejects_unknown_keys(self):
        config = RunConfig.build("task = classification", env={})
        assert config.replace(clusters=2).clusters == 2
        with pytest.raises(ConfigError):
            config.replace(depth=2)

    def test_derived_configs(self):
        config = RunConfig.build("task = classification\nclusters = 3\nwitness_rate = 0.1\nshots = 6", env={})
        assert config.model_config().clusters == 3
        assert config.classification_data().witness_rate == 0.1
        assert config.adaptation_plan().shots == 6
        assert config.train_config().epochs == 30

    def test_context_seed_wins(self):
        context = Context(None, ["seed=1", "task=classification"], 5, "info")
        assert context.config(epochs=None, clusters=4).seed == 5
        assert context.config(clusters=4).clusters == 4


@pytest.mark.parametrize(("raw", "expected"), [("yes", True), ("ON", True), ("0", False), (" false ", False)])
def test_parse_bool(raw, expected):
    assert parse_bool(raw) is expected


def test_parse_bool_rejects_other_values():
    with pytest.raises(ValueError):
        parse_bool("maybe")


class TestCommandDerivation:
    def test_options_from_annotations(self):
        def sample(ctx: Context, mode: Literal["a", "b"], size: int = 3, path: Path | None = None, dry_run: bool = False) -> int:
            """Does things.

            More detail.
            """
            return 0

        command = Command(callback=sample, help={"size": "the size"})
        assert command.name == "sample"
        assert command.description == "Does things."
        mode, size, path, dry_run = command.options
        assert mode.required and mode.choices == ["a", "b"] and mode.type is str
        assert size.description == "the size" and size.default == 3
        assert path.type is Path and not path.required
        assert dry_run.flag == "--dry-run"

    def test_missing_annotation(self):
        def sample(ctx: Context, size=3) -> int:
            return 0

        with pytest.raises(TypeError):
            Command(callback=sample)

    def test_missing_context(self):
        def sample() -> int:
            return 0

        with pytest.raises(SyntaxError):
            Command(callback=sample)

    def test_duplicate_command(self):
        commands = CommandTree("prog")

        @commands.command()
        def run(ctx: Context) -> int:
            return 0

        with pytest.raises(ValueError):
            commands.add_command(Command(callback=run.callback))

    def test_option_flag(self):
        option = Option.from_parameter(
            inspect.Parameter("num_classes", inspect.Parameter.KEYWORD_ONLY, default=None, annotation=int | None)
        )
        assert option.flag == "--num-classes"
        assert option.type is int

    def test_every_command_is_registered(self):
        names = {command.name for command in tree}
        assert names == {"gen-data", "train", "eval", "adapt", "export-clusters", "gradcheck", "crossval", "sweep-clusters"}


class TestMain:
    def test_help(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for name in ("gen-data", "train", "eval", "adapt", "export-clusters", "gradcheck"):
            assert name in out

    @pytest.mark.parametrize(
        ("command", "flags"),
        [
            ("gen-data", ["--task", "--out"]),
            ("train", ["--data", "--out"]),
            ("eval", ["--checkpoint", "--data", "--split", "--out"]),
            ("adapt", ["--checkpoint", "--data", "--shots", "--num-classes", "--out"]),
            ("export-clusters", ["--checkpoint", "--data", "--split", "--out"]),
            ("gradcheck", ["--task", "--embed-dim", "--threshold", "--inject-fault"]),
        ],
    )
    def test_command_help_lists_flags(self, capsys, command, flags):
        assert main([command, "--help"]) == 0
        out = capsys.readouterr().out
        for flag in [*flags, "--config", "--set", "--seed", "--log-level"]:
            assert flag in out

    def test_parse_errors(self):
        assert main(["train", "--bogus"]) == 2
        assert main(["frobnicate"]) == 2

    def test_malformed_override(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path), "--set", "no-equals"]) == 2
        assert "KEY=VALUE" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["gen-data", "--config", str(tmp_path / "nope.txt")]) == 2
        assert "does not exist" in capsys.readouterr().err


class TestGenData:
    def test_seeded_runs_are_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            argv = ["gen-data", "--task", "classification", "--out", str(tmp_path / name), "--seed", "2", *_settings()]
            assert main(argv) == 0
        for split in ("train", "val", "test"):
            assert (tmp_path / "a" / f"{split}.ptcb").read_bytes() == (tmp_path / "b" / f"{split}.ptcb").read_bytes()

    def test_split_sizes(self, classification_run, capsys):
        data, _ = classification_run
        assert len((data / "train.txt").read_text().splitlines()) == 10
        assert len((data / "val.txt").read_text().splitlines()) == 5
        assert len((data / "test.txt").read_text().splitlines()) == 5

    def test_invalid_witness_rate(self, tmp_path, capsys):
        argv = ["gen-data", "--task", "classification", "--out", str(tmp_path), *_settings("witness_rate=0")]
        assert main(argv) == 2
        assert "witness_rate" in capsys.readouterr().err

    def test_task_is_required(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path)]) == 2
        assert "task" in capsys.readouterr().err


class TestTrainAndEval:
    def test_outputs(self, classification_run):
        _, run = classification_run
        for name in ("checkpoint.ptck", "history.csv", "report.txt", "config.txt"):
            assert (run / name).exists()
        report = _report(run / "report.txt")
        assert report["run"] == "full"
        assert report["epochs"] == "2"
        assert "test_auc" in report
        assert len((run / "history.csv").read_text().splitlines()) == 3

    def test_eval_reproduces_training_metrics(self, classification_run, tmp_path):
        data, run = classification_run
        argv = ["eval", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--split", "train", "--out", str(tmp_path)]
        assert main(argv) == 0
        evaluated = _report(tmp_path / "eval-train.txt")
        trained = _report(run / "report.txt")
        assert abs(float(evaluated["train_loss"]) - float(trained["train_loss"])) < 1e-9
        assert evaluated["train_accuracy"] == trained["train_accuracy"]

    def test_missing_checkpoint(self, classification_run, tmp_path, capsys):
        data, _ = classification_run
        assert main(["eval", "--checkpoint", str(tmp_path / "none.ptck"), "--data", str(data)]) == 3
        assert "none.ptck" in capsys.readouterr().err

    def test_seeded_training_is_reproducible(self, classification_run, tmp_path):
        data, run = classification_run
        again = tmp_path / "again"
        assert main(["train", "--data", str(data), "--out", str(again), "--seed", "5", *_settings("task=classification")]) == 0
        assert (again / "history.csv").read_bytes() == (run / "history.csv").read_bytes()
        assert (again / "checkpoint.ptck").read_bytes() == (run / "checkpoint.ptck").read_bytes()

    def test_width_mismatch(self, classification_run, tmp_path):
        data, _ = classification_run
        argv = ["train", "--data", str(data), "--out", str(tmp_path), *_settings("task=classification", "input_dim=5")]
        assert main(argv) == 2

    def test_survival_reports_c_index(self, tmp_path, capsys):
        data, run = tmp_path / "data", tmp_path / "run"
        assert main(["gen-data", "--task", "survival", "--out", str(data), *_settings()]) == 0
        assert main(["train", "--data", str(data), "--out", str(run), *_settings("task=survival", "epochs=1")]) == 0
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data)]) == 0
        assert "test_c_index" in capsys.readouterr().out


class TestAdapt:
    def test_backbone_stays_frozen(self, classification_run, tmp_path):
        data, run = classification_run
        argv = ["adapt", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--shots", "4", "--out", str(tmp_path)]
        assert main([*argv, "--set", "adapt_epochs=2"]) == 0
        report = _report(tmp_path / "adapt_report.txt")
        assert report["shots"] == "4"
        assert report["shot_labels"] == "0:2,1:2"
        assert report["frozen_verified"] == "true"
        assert int(report["frozen_arrays"]) > 0
        assert "metric_change" in report

        source = Checkpoint.load(run / "checkpoint.ptck")
        adapted = Checkpoint.load(tmp_path / "adapted.ptck")
        for name, values in source.params.items():
            if not name.startswith(("head.", "score_head.")):
                assert adapted.params[name].tobytes() == values.tobytes()
        assert len((tmp_path / "shots.txt").read_text().splitlines()) == 4

    def test_head_reset(self, classification_run, tmp_path):
        data, run = classification_run
        argv = ["adapt", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--shots", "4"]
        assert main([*argv, "--num-classes", "3", "--out", str(tmp_path)]) == 0
        report = _report(tmp_path / "adapt_report.txt")
        assert report["head_reset"] == "true"
        assert "before_loss" not in report

    def test_too_many_shots(self, classification_run, tmp_path):
        data, run = classification_run
        argv = ["adapt", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--shots", "50", "--out", str(tmp_path)]
        assert main(argv) == 3

    def test_width_mismatch(self, classification_run, tmp_path):
        _, run = classification_run
        narrow = tmp_path / "narrow"
        assert main(["gen-data", "--task", "classification", "--out", str(narrow), *_settings("input_dim=5")]) == 0
        argv = ["adapt", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(narrow), "--shots", "4", "--out", str(tmp_path / "out")]
        assert main(argv) == 2
        assert not (tmp_path / "out" / "adapted.ptck").exists()


class TestExportClusters:
    def test_csv_schema(self, classification_run, tmp_path):
        data, run = classification_run
        argv = ["export-clusters", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--out", str(tmp_path)]
        assert main(argv) == 0

        with open(tmp_path / "clusters.csv", newline="") as fp:
            patches = list(csv.DictReader(fp))
        with open(tmp_path / "cluster_sizes.csv", newline="") as fp:
            sizes = list(csv.DictReader(fp))
        assert list(patches[0]) == ["bag_id", "patch_index", "cluster_index", "max_probability"]
        assert list(sizes[0]) == ["bag_id", "cluster_index", "size", "empty"]

        per_bag = {}
        for row in patches:
            assert 0.0 < float(row["max_probability"]) <= 1.0
            assert 0 <= int(row["cluster_index"]) < 3
            per_bag[row["bag_id"]] = per_bag.get(row["bag_id"], 0) + 1
        totals = {}
        for row in sizes:
            totals[row["bag_id"]] = totals.get(row["bag_id"], 0) + int(row["size"])
            assert row["empty"] == str(int(row["size"] == "0"))
        assert totals == per_bag
        assert len(per_bag) == 5

    def test_needs_clustering(self, classification_run, tmp_path):
        data, _ = classification_run
        run = tmp_path / "run"
        argv = ["train", "--data", str(data), "--out", str(run), *_settings("task=classification", "clustering=false", "epochs=1")]
        assert main(argv) == 0
        argv = ["export-clusters", "--checkpoint", str(run / "checkpoint.ptck"), "--data", str(data), "--out", str(tmp_path)]
        assert main(argv) == 2


class TestGradcheck:
    SMALL = ["--embed-dim", "4", "--clusters", "2", "--heads", "2", "--input-dim", "3", "--instances", "5"]

    def test_passes(self, tmp_path):
        assert main(["gradcheck", *self.SMALL, "--out", str(tmp_path)]) == 0
        report = _report(tmp_path / "gradcheck.txt")
        assert report["status"] == "pass"
        assert float(report["classification_max_error"]) < 1e-4
        assert float(report["survival_max_error"]) < 1e-4

    def test_relative_error_floor(self, monkeypatch):
        floors = []
        check = app.finite_diff_errors

        def recording(*args, **kwargs):
            floors.append(kwargs["floor"])
            return check(*args, **kwargs)

        monkeypatch.setattr(app, "finite_diff_errors", recording)
        config = ModelConfig(input_dim=3, embed_dim=4, clusters=2, heads=2)
        errors = app.model_gradient_errors(config, instances=5)
        assert floors == [1e-8]
        assert max(errors.values()) < app.GRADCHECK_THRESHOLD

    def test_injected_fault_fails(self, capsys):
        assert main(["gradcheck", *self.SMALL, "--task", "classification", "--inject-fault"]) == 4
        captured = capsys.readouterr()
        assert "status: fail" in captured.out
        assert "gradient check failed" in captured.err


def test_crossval_and_sweep(classification_run, tmp_path):
    data, _ = classification_run
    out = tmp_path / "cv"
    assert main(["crossval", "--data", str(data), "--folds", "3", "--out", str(out), *_settings("task=classification", "epochs=1")]) == 0
    with open(out / "crossval.csv", newline="") as fp:
        assert [row["fold"] for row in csv.DictReader(fp)] == ["0", "1", "2"]
    assert _report(out / "summary.txt")["folds"] == "3"

    out = tmp_path / "sweep"
    argv = ["sweep-clusters", "--data", str(data), "--clusters", "1,2", "--out", str(out), *_settings("task=classification", "epochs=1")]
    assert main(argv) == 0
    with open(out / "sweep.csv", newline="") as fp:
        assert [row["clusters"] for row in csv.DictReader(fp)] == ["1", "2"]
