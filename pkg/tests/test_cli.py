import json

import pytest

from gridfloor.cli import load_config, run_command
from gridfloor.ingest import read_dataset

# Desk-scale settings shared by the CLI tests: a 4x3 grid, short runs, a tiny
# network and forest so a full pipeline pass stays in the seconds range.
DESK = [
    "--grid",
    "4x3",
    "--set",
    "gt_rate=60",
    "--set",
    "test_runs=1",
    "--set",
    "test_waypoints=3",
    "--set",
    "rf_trees=4",
    "--set",
    "rf_max_depth=6",
    "--set",
    "cnn_conv_channels=2",
    "--set",
    "cnn_convs_per_block=1",
    "--set",
    "cnn_blocks=2",
    "--set",
    "cnn_dense_units=8",
    "--set",
    "cnn_max_epochs=2",
    "--set",
    "cnn_patience=2",
    "--seed",
    "5",
]


def run(args):
    return run_command([str(a) for a in args], environment={})


class TestArgErrors:
    def test_missing_required_flag_exits_2(self):
        assert run(["simulate"]) == 2

    def test_unknown_subcommand_exits_2(self):
        assert run(["frobnicate", "--out", "x"]) == 2

    def test_unknown_config_key_exits_1(self, tmp_path):
        code = run(["simulate", "--out", tmp_path, "--set", "nonsense=1"])
        assert code == 1

    def test_stage_failure_exits_1(self, tmp_path):
        # ingest with an empty input directory
        (tmp_path / "runs").mkdir()
        code = run(["ingest", "--in", tmp_path / "runs", "--out", tmp_path / "data"])
        assert code == 1


class TestConfig:
    def test_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "sim.cfg"
        cfg_file.write_text("# comment\nseed=9\npoll_rtt=2.0\n")
        cfg = load_config(str(cfg_file), {"poll_rtt": "3.0"})
        assert cfg.i("seed") == 9
        assert cfg.f("poll_rtt") == 3.0

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "sim.cfg"
        cfg_file.write_text("bogus=1\n")
        with pytest.raises(ValueError):
            load_config(str(cfg_file), {})

    def test_env_seed_overrides(self, tmp_path, monkeypatch):
        out = tmp_path / "runs"
        code = run_command(
            ["simulate", "--out", str(out), "--seed", "1"] + [str(a) for a in DESK[2:]],
            environment={"GRIDFLOOR_SEED": "77"},
        )
        assert code == 0
        manifest = json.load(open(out / "simulate.manifest.json"))
        assert manifest["seed"] == 77


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    runs, data, feat, models, pred, metrics, report = (
        root / "runs",
        root / "data",
        root / "features",
        root / "models",
        root / "pred",
        root / "metrics",
        root / "report",
    )
    assert run(["simulate", "--out", runs] + DESK) == 0
    assert run(["ingest", "--in", runs, "--out", data] + DESK) == 0
    assert run(["features", "--in", data, "--out", feat] + DESK) == 0
    assert run(["train-rf", "--in", data, "--features", feat, "--out", models] + DESK) == 0
    assert run(["train-cnn", "--in", data, "--features", feat, "--out", models] + DESK) == 0
    for model in ("rf", "cnn"):
        assert (
            run(
                ["predict", "--model", model, "--in", data, "--models", models,
                 "--features", feat, "--out", pred]
                + DESK
            )
            == 0
        )
    assert run(["trajfit", "--in", pred / "cnn", "--data", data, "--out", pred / "rcnn"] + DESK) == 0
    assert run(["evaluate", "--in", pred, "--data", data, "--out", metrics] + DESK) == 0
    assert run(["report", "--in", pred, "--data", data, "--metrics", metrics, "--out", report] + DESK) == 0
    return root


class TestPipeline:

    def test_dataset_has_declared_columns(self, workspace):
        files = sorted((workspace / "data" / "train").glob("*.frames.csv"))
        assert len(files) == 9
        header = open(files[0]).readline().strip().split(",")
        assert len(header) == 3 + 4 * 3 * 10
        ds = read_dataset(files[0])
        assert ds.n_frames > 0

    def test_manifests_written_and_artifacts_exist(self, workspace):
        from gridfloor.cli import check_manifest

        for stage, where in [
            ("simulate", "runs"),
            ("ingest", "data"),
            ("features", "features"),
            ("train-rf", "models"),
            ("train-cnn", "models"),
            ("evaluate", "metrics"),
            ("report", "report"),
        ]:
            manifest = check_manifest(workspace / where / f"{stage}.manifest.json")
            assert manifest["stage"] == stage
            assert manifest["config_hash"]

    def test_predictions_align_with_frames(self, workspace):
        ds = read_dataset(next((workspace / "data" / "test").glob("*.frames.csv")))
        for model in ("rf", "cnn", "rcnn"):
            files = sorted((workspace / "pred" / model).glob("*.csv"))
            assert files, model
            rows = open(files[0]).read().splitlines()
            assert len(rows) - 1 == ds.n_frames

    def test_metrics_cover_all_models_plus_baseline(self, workspace):
        names = {
            p.name.replace(".metrics.json", "")
            for p in (workspace / "metrics").glob("*.metrics.json")
        }
        assert names == {"baseline", "rf", "cnn", "rcnn"}
        table = (workspace / "metrics" / "comparison.csv").read_text().splitlines()
        assert len(table) == 5

    def test_report_artifacts(self, workspace):
        report = workspace / "report"
        assert (report / "trajectory_run_00.svg").exists()
        assert (report / "heatmap_run_00.svg").exists()
        assert (report / "comparison.csv").exists()


class TestDeterminism:
    def test_same_seed_same_metrics_bytes(self, tmp_path):
        def pipeline(root):
            runs, data, feat, models, pred, metrics = (
                root / "runs", root / "data", root / "features",
                root / "models", root / "pred", root / "metrics",
            )
            assert run(["simulate", "--out", runs] + DESK) == 0
            assert run(["ingest", "--in", runs, "--out", data] + DESK) == 0
            assert run(["features", "--in", data, "--out", feat] + DESK) == 0
            assert run(["train-rf", "--in", data, "--features", feat, "--out", models] + DESK) == 0
            assert run(
                ["predict", "--model", "rf", "--in", data, "--models", models,
                 "--features", feat, "--out", pred] + DESK
            ) == 0
            assert run(["evaluate", "--in", pred, "--data", data, "--out", metrics] + DESK) == 0
            return {
                p.name: p.read_bytes() for p in sorted(metrics.glob("*.csv"))
            } | {p.name: p.read_bytes() for p in sorted(metrics.glob("*.json")) if "manifest" not in p.name}

        a = pipeline(tmp_path / "a")
        b = pipeline(tmp_path / "b")
        assert a == b
