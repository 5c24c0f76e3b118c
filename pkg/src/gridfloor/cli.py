"""Pipeline command line: one subcommand per stage, files in between.

Stages: simulate, ingest, features, train-rf, train-cnn, predict, trajfit,
evaluate, report. Each stage reads its inputs, writes its artifacts plus a
run manifest, and exits non-zero on failure. All randomness flows from the
configured seed (the GRIDFLOOR_SEED environment variable overrides it).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import convnet, evaluate, features, forest, ingest, render, simulate, trajfit
from .grid import GridSpec
from .ioutil import atomic_write_text, fmt

CONFIG_DEFAULTS = {
    # grid / hall
    "grid_strips": "23",
    "grid_nodes": "15",
    "hall_length": "30.0",
    "hall_width": "15.0",
    # sampling and polling
    "node_sample_period": "0.4",
    "poll_rtt": "4.0",
    "poll_jitter_sd": "0.05",
    "buffer_capacity": "32",
    "gt_rate": "200.0",
    "robot_speed": "1.0",
    "duration": "0",
    "seed": "0",
    # signal model
    "rssi_ref": "-40.0",
    "path_loss_exp": "2.2",
    "rssi_noise_sd": "2.0",
    "mag_baseline_x": "20.0",
    "mag_baseline_y": "0.0",
    "mag_baseline_z": "44.0",
    "dipole_strength": "5.0",
    "mag_noise_sd": "0.3",
    "accel_noise_sd": "0.05",
    "gyro_noise_sd": "0.5",
    # test recordings
    "test_runs": "3",
    "test_waypoints": "6",
    # random forest
    "rf_trees": "100",
    "rf_max_depth": "0",
    "rf_min_leaf": "1",
    "rf_features_per_split": "0",
    "rf_bootstrap": "1",
    "rf_cross_validate": "0",
    # network
    "cnn_conv_channels": "64",
    "cnn_convs_per_block": "3",
    "cnn_blocks": "3",
    "cnn_dense_units": "128",
    "cnn_dense_layers": "2",
    "cnn_learning_rate": "0.001",
    "cnn_lr_decay": "1.0",
    "cnn_batch_size": "32",
    "cnn_max_epochs": "200",
    "cnn_patience": "10",
    # trajectory fit
    "traj_window": "0",
    "traj_max_iter": "5000",
    # report
    "heatmap_frames": "12",
}


class Config:
    def __init__(self, values: dict):
        self.values = values

    def f(self, key: str) -> float:
        return float(self.values[key])

    def i(self, key: str) -> int:
        return int(self.values[key])

    def grid(self) -> GridSpec:
        return GridSpec(
            n_strips=self.i("grid_strips"),
            nodes_per_strip=self.i("grid_nodes"),
            hall_length=self.f("hall_length"),
            hall_width=self.f("hall_width"),
        )

    def sim_config(self) -> simulate.SimConfig:
        duration = self.f("duration")
        return simulate.SimConfig(
            grid=self.grid(),
            node_sample_period=self.f("node_sample_period"),
            poll_rtt=self.f("poll_rtt"),
            poll_jitter_sd=self.f("poll_jitter_sd"),
            buffer_capacity=self.i("buffer_capacity"),
            gt_rate=self.f("gt_rate"),
            robot_speed=self.f("robot_speed"),
            rng_seed=self.i("seed"),
            duration=duration if duration > 0 else None,
        )

    def signal_model(self) -> simulate.SignalModel:
        return simulate.SignalModel(
            rssi_ref=self.f("rssi_ref"),
            path_loss_exp=self.f("path_loss_exp"),
            rssi_noise_sd=self.f("rssi_noise_sd"),
            mag_baseline=(
                self.f("mag_baseline_x"),
                self.f("mag_baseline_y"),
                self.f("mag_baseline_z"),
            ),
            dipole_strength=self.f("dipole_strength"),
            mag_noise_sd=self.f("mag_noise_sd"),
            accel_noise_sd=self.f("accel_noise_sd"),
            gyro_noise_sd=self.f("gyro_noise_sd"),
        )

    def forest_params(self) -> forest.ForestParams:
        depth = self.i("rf_max_depth")
        per_split = self.i("rf_features_per_split")
        return forest.ForestParams(
            n_trees=self.i("rf_trees"),
            max_depth=depth if depth > 0 else None,
            min_leaf=self.i("rf_min_leaf"),
            features_per_split=per_split if per_split > 0 else None,
            bootstrap=self.i("rf_bootstrap") != 0,
            seed=self.i("seed"),
        )

    def network_spec(self) -> convnet.NetworkSpec:
        return convnet.NetworkSpec(
            grid=self.grid(),
            in_channels=features.N_SELECTED,
            conv_channels=self.i("cnn_conv_channels"),
            convs_per_block=self.i("cnn_convs_per_block"),
            n_blocks=self.i("cnn_blocks"),
            dense_units=self.i("cnn_dense_units"),
            n_dense=self.i("cnn_dense_layers"),
        )

    def train_config(self) -> convnet.TrainConfig:
        return convnet.TrainConfig(
            learning_rate=self.f("cnn_learning_rate"),
            lr_decay=self.f("cnn_lr_decay"),
            batch_size=self.i("cnn_batch_size"),
            max_epochs=self.i("cnn_max_epochs"),
            patience=self.i("cnn_patience"),
            seed=self.i("seed"),
        )

    def hash(self) -> str:
        text = "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path: str | None, overrides: dict) -> Config:
    values = dict(CONFIG_DEFAULTS)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{line_no}: expected key=value")
                key, value = line.split("=", 1)
                key = key.strip()
                if key not in CONFIG_DEFAULTS:
                    raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
                values[key] = value.strip()
    for key, value in overrides.items():
        if key not in CONFIG_DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = value
    return Config(values)


def write_manifest(out_dir: Path, stage: str, cfg: Config, inputs, outputs) -> None:
    manifest = {
        "stage": stage,
        "seed": cfg.i("seed"),
        "config_hash": cfg.hash(),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
    }
    atomic_write_text(out_dir / f"{stage}.manifest.json", json.dumps(manifest, indent=1) + "\n")


def check_manifest(path) -> dict:
    """Load a manifest and verify every referenced artifact exists."""
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    missing = [p for p in manifest["outputs"] if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError(f"manifest artifacts missing: {missing}")
    return manifest


# ---------------------------------------------------------------------------
# Stages


def _sorted_runs(directory: Path, suffix: str) -> list:
    return sorted(directory.glob(f"*{suffix}"))


def cmd_simulate(cfg: Config, out_dir: Path) -> list:
    grid = cfg.grid()
    model = cfg.signal_model()
    base = cfg.sim_config()
    seed = cfg.i("seed")
    outputs = []

    def record(plans, sim_seed, dest: Path, name: str):
        sim_cfg = simulate.SimConfig(
            grid=base.grid,
            node_sample_period=base.node_sample_period,
            poll_rtt=base.poll_rtt,
            poll_jitter_sd=base.poll_jitter_sd,
            buffer_capacity=base.buffer_capacity,
            gt_rate=base.gt_rate,
            robot_speed=base.robot_speed,
            rng_seed=sim_seed,
            duration=base.duration,
        )
        log = simulate.simulate(sim_cfg, plans, model)
        dest.mkdir(parents=True, exist_ok=True)
        payload = dest / f"{name}.payload.jsonl"
        gt = dest / f"{name}.gt.jsonl"
        simulate.write_payload_log(log, payload)
        simulate.write_ground_truth_log(log, gt)
        outputs.extend([payload, gt])

    pace = cfg.f("robot_speed")

    def scaled(plan):
        return simulate.TrajectoryPlan(plan.waypoints, plan.speed * pace, plan.label)

    for i, plan in enumerate(simulate.plan_training_runs(grid)):
        record([scaled(plan)], seed + i, out_dir / "train", f"run_{i:02d}")
    for i in range(cfg.i("test_runs")):
        plan = simulate.plan_random_run(grid, seed + 2000 + i, cfg.i("test_waypoints"))
        record([scaled(plan)], seed + 1000 + i, out_dir / "test", f"run_{i:02d}")
    return outputs


def cmd_ingest(cfg: Config, in_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    rtt = cfg.f("poll_rtt")
    outputs = []
    for split in ("train", "test"):
        src = in_dir / split
        if not src.is_dir():
            continue
        for payload_path in _sorted_runs(src, ".payload.jsonl"):
            name = payload_path.name.replace(".payload.jsonl", "")
            gt_path = src / f"{name}.gt.jsonl"
            with open(payload_path, "r", encoding="utf-8") as fh:
                payload_lines = fh.readlines()
            with open(gt_path, "r", encoding="utf-8") as fh:
                gt_lines = fh.readlines()
            ds = ingest.ingest_run(payload_lines, gt_lines, grid, rtt)
            dest = out_dir / split
            dest.mkdir(parents=True, exist_ok=True)
            out = dest / f"{name}.frames.csv"
            ingest.write_dataset(ds, out)
            outputs.append(out)
    if not outputs:
        raise FileNotFoundError(f"no recordings found under {in_dir}")
    return outputs


def _load_split(data_dir: Path, split: str, grid: GridSpec) -> list:
    paths = _sorted_runs(data_dir / split, ".frames.csv")
    if not paths:
        raise FileNotFoundError(f"no frame datasets under {data_dir / split}")
    return [(p, ingest.read_dataset(p, grid)) for p in paths]


def cmd_features(cfg: Config, data_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    train = [ds for _, ds in _load_split(data_dir, "train", grid)]
    selected = np.vstack([features.select_channels(ds.features, grid) for ds in train])
    minmax = features.fit_minmax(selected)
    znorm = features.fit_znorm(selected, grid)
    out_dir.mkdir(parents=True, exist_ok=True)
    mm_path = out_dir / "minmax.json"
    zn_path = out_dir / "znorm.json"
    features.save_minmax(minmax, mm_path)
    features.save_znorm(znorm, zn_path)
    return [mm_path, zn_path]


def _forest_inputs(ds: ingest.FrameDataset, minmax, grid: GridSpec) -> np.ndarray:
    x = features.select_channels(ds.features, grid)
    x = features.apply_minmax(minmax, x)
    return features.aggregate_neighborhood(x, grid)


def _cnn_inputs(ds: ingest.FrameDataset, znorm, grid: GridSpec) -> np.ndarray:
    x = features.select_channels(ds.features, grid)
    x = features.apply_znorm(znorm, x, grid)
    return features.to_grid_tensor(x, grid)


def cmd_train_rf(cfg: Config, data_dir: Path, feat_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    minmax = features.load_minmax(feat_dir / "minmax.json")
    train = [ds for _, ds in _load_split(data_dir, "train", grid)]
    x = np.vstack([_forest_inputs(ds, minmax, grid) for ds in train])
    y = np.vstack([ds.labels for ds in train])
    params = cfg.forest_params()
    if cfg.i("rf_cross_validate"):
        report = forest.cross_validate(x, y, forest.default_param_grid(cfg.i("seed")))
        params = report.best_params
    model = forest.fit_forest(x, y, params)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "forest.json"
    forest.save_forest(model, path)
    return [path]


def cmd_train_cnn(cfg: Config, data_dir: Path, feat_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    znorm = features.load_znorm(feat_dir / "znorm.json")
    runs = _load_split(data_dir, "train", grid)
    if len(runs) < 2:
        raise ValueError("network training needs at least two runs (one held out)")
    val_path, val_ds = runs[-1]
    train_ds = [ds for _, ds in runs[:-1]]
    train_x = np.concatenate([_cnn_inputs(ds, znorm, grid) for ds in train_ds])
    train_y = np.vstack([ds.labels for ds in train_ds])
    val_x = _cnn_inputs(val_ds, znorm, grid)
    val_y = val_ds.labels
    net = convnet.Network(cfg.network_spec(), seed=cfg.i("seed"))
    history = convnet.train(net, train_x, train_y, val_x, val_y, cfg.train_config())
    out_dir.mkdir(parents=True, exist_ok=True)
    weights = out_dir / "cnn.weights.bin"
    manifest = out_dir / "cnn.manifest.json"
    history_path = out_dir / "cnn.history.csv"
    convnet.save_network(net, weights, manifest, znorm_ref=str(feat_dir / "znorm.json"))
    atomic_write_text(history_path, history.to_csv())
    return [weights, manifest, history_path]


def _write_prediction_csv(path: Path, times, cols: dict) -> None:
    header = "t," + ",".join(cols)
    lines = [header]
    arrays = list(cols.values())
    for i, t in enumerate(times):
        vals = [fmt(t)] + [fmt(arr[i]) for arr in arrays]
        lines.append(",".join(vals))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_prediction_csv(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    arr = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    return {name: arr[:, i] for i, name in enumerate(header)}


def cmd_predict(cfg: Config, model_name: str, data_dir: Path, model_dir: Path, feat_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    outputs = []
    test = _load_split(data_dir, "test", grid)
    dest = out_dir / model_name
    dest.mkdir(parents=True, exist_ok=True)
    if model_name == "rf":
        minmax = features.load_minmax(feat_dir / "minmax.json")
        model = forest.load_forest(model_dir / "forest.json")
        for path, ds in test:
            pred = forest.predict_forest(model, _forest_inputs(ds, minmax, grid))
            out = dest / path.name.replace(".frames.csv", ".csv")
            _write_prediction_csv(out, ds.times, {"x": pred[:, 0], "y": pred[:, 1]})
            outputs.append(out)
    elif model_name == "cnn":
        znorm = features.load_znorm(feat_dir / "znorm.json")
        net = convnet.load_network(model_dir / "cnn.weights.bin", model_dir / "cnn.manifest.json")
        for path, ds in test:
            x = _cnn_inputs(ds, znorm, grid)
            act = []
            for lo in range(0, len(x), 64):
                act.append(net.forward(x[lo : lo + 64]).activated)
            act = np.concatenate(act) if act else np.empty((0, 6))
            out = dest / path.name.replace(".frames.csv", ".csv")
            _write_prediction_csv(
                out,
                ds.times,
                {
                    "x": act[:, 0],
                    "y": act[:, 1],
                    "sigma_x": act[:, 2],
                    "sigma_y": act[:, 3],
                    "r_x": act[:, 4],
                    "r_y": act[:, 5],
                },
            )
            outputs.append(out)
    else:
        raise ValueError(f"unknown model {model_name!r} (expected rf or cnn)")
    return outputs


def cmd_trajfit(cfg: Config, pred_dir: Path, data_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    train = [ds for _, ds in _load_split(data_dir, "train", grid)]
    params = trajfit.calibrate_limits(
        [(ds.labels[:, 0], ds.labels[:, 1], ds.times) for ds in train]
    )
    window = cfg.i("traj_window") or None
    outputs = []
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_paths = _sorted_runs(pred_dir, ".csv")
    if not pred_paths:
        raise FileNotFoundError(f"no prediction files under {pred_dir}")
    for path in pred_paths:
        cols = read_prediction_csv(path)
        estimates = [
            trajfit.FrameEstimate(
                t=cols["t"][i],
                mu_x=cols["x"][i],
                mu_y=cols["y"][i],
                sigma_x=cols["sigma_x"][i],
                sigma_y=cols["sigma_y"][i],
                r_x=cols["r_x"][i],
                r_y=cols["r_y"][i],
            )
            for i in range(len(cols["t"]))
        ]
        fitted = trajfit.fit(
            estimates, params, max_iter=cfg.i("traj_max_iter"), window=window
        )
        out = out_dir / path.name
        _write_prediction_csv(out, fitted.t, {"x": fitted.x, "y": fitted.y})
        outputs.append(out)
    return outputs


def cmd_evaluate(cfg: Config, pred_dir: Path, data_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    test = _load_split(data_dir, "test", grid)
    truth = np.vstack([ds.labels for ds in (ds for _, ds in test)])
    times = np.concatenate([ds.times for _, ds in test])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    rows = []

    train = [ds for _, ds in _load_split(data_dir, "train", grid)]
    centroid = np.vstack([ds.labels for ds in train]).mean(axis=0)
    baseline_pred = np.tile(centroid, (len(truth), 1))
    for name, pred in [("baseline", baseline_pred)]:
        rows.append(_eval_one(name, times, truth, pred, out_dir, outputs))

    for model_dir in sorted(p for p in pred_dir.iterdir() if p.is_dir()):
        preds = []
        for path in _sorted_runs(model_dir, ".csv"):
            cols = read_prediction_csv(path)
            preds.append(np.stack([cols["x"], cols["y"]], axis=1))
        if not preds:
            continue
        pred = np.vstack(preds)
        if len(pred) != len(truth):
            raise evaluate.AlignmentError(
                f"{model_dir.name}: {len(pred)} predictions vs {len(truth)} truth frames"
            )
        rows.append(_eval_one(model_dir.name, times, truth, pred, out_dir, outputs))

    comparison = out_dir / "comparison.csv"
    render.render_comparison_csv(comparison, rows)
    outputs.append(comparison)
    return outputs


def _eval_one(name, times, truth, pred, out_dir: Path, outputs: list):
    errs = evaluate.euclid_errors(truth, pred)
    report = evaluate.summarize(errs)
    errors_path = out_dir / f"{name}.errors.csv"
    metrics_path = out_dir / f"{name}.metrics.json"
    evaluate.write_errors_csv(errors_path, times, errs)
    evaluate.write_metrics_json(metrics_path, report)
    outputs.extend([errors_path, metrics_path])
    return (name, report.mean, report.median, report.variance)


def cmd_report(cfg: Config, data_dir: Path, pred_dir: Path, metrics_dir: Path, out_dir: Path) -> list:
    grid = cfg.grid()
    test = _load_split(data_dir, "test", grid)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    model_names = sorted(p.name for p in pred_dir.iterdir() if p.is_dir())
    offset = 0
    for run_index, (path, ds) in enumerate(test):
        tracks = {}
        for name in model_names:
            pred_path = pred_dir / name / path.name.replace(".frames.csv", ".csv")
            if not pred_path.exists():
                continue
            cols = read_prediction_csv(pred_path)
            tracks[name] = np.stack([cols["x"], cols["y"]], axis=1)
        svg = out_dir / f"trajectory_run_{run_index:02d}.svg"
        render.render_trajectory_svg(svg, grid, ds.labels, tracks)
        outputs.append(svg)
        offset += ds.n_frames

    # Heatmap: RSSI channel of the first frames of the first test run.
    first = test[0][1]
    k = min(cfg.i("heatmap_frames"), first.n_frames)
    rssi_cols = np.arange(grid.n_nodes) * 10 + 9
    heat = out_dir / "heatmap_run_00.svg"
    render.render_heatmap_svg(
        heat,
        grid,
        first.features[:k][:, rssi_cols],
        first.labels[:k],
        first.times[:k],
    )
    outputs.append(heat)

    rows = []
    for metrics_path in sorted(metrics_dir.glob("*.metrics.json")):
        obj = evaluate.read_metrics_json(metrics_path)
        name = metrics_path.name.replace(".metrics.json", "")
        rows.append((name, obj["mean"], obj["median"], obj["variance"]))
    table = out_dir / "comparison.csv"
    render.render_comparison_csv(table, rows)
    outputs.append(table)
    return outputs


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridfloor", description="Sensor-floor localization pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_in=False):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--grid", default=None, help="desk-scale override, e.g. 6x4")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (repeatable)",
        )
        p.add_argument("--out", required=True, help="output directory")
        if needs_in:
            p.add_argument("--in", dest="in_dir", required=True, help="input directory")

    common(sub.add_parser("simulate", help="record synthetic runs"))
    common(sub.add_parser("ingest", help="logs to frame datasets"), needs_in=True)
    common(sub.add_parser("features", help="fit scaling parameters"), needs_in=True)

    for name in ("train-rf", "train-cnn"):
        p = sub.add_parser(name, help=f"train the {name.split('-')[1]} model")
        common(p, needs_in=True)
        p.add_argument("--features", required=True, help="features directory")

    p = sub.add_parser("predict", help="run a model on the test frames")
    common(p, needs_in=True)
    p.add_argument("--model", required=True, choices=["rf", "cnn"])
    p.add_argument("--models", required=True, help="models directory")
    p.add_argument("--features", required=True, help="features directory")

    p = sub.add_parser("trajfit", help="refine network predictions")
    common(p, needs_in=True)
    p.add_argument("--data", required=True, help="data directory (for calibration labels)")

    p = sub.add_parser("evaluate", help="metrics for every predicted model")
    common(p, needs_in=True)
    p.add_argument("--data", required=True, help="data directory (truth labels)")

    p = sub.add_parser("report", help="render plots and the comparison table")
    common(p, needs_in=True)
    p.add_argument("--data", required=True, help="data directory")
    p.add_argument("--metrics", required=True, help="metrics directory")

    return parser


def run_command(argv, environment=None) -> int:
    env = os.environ if environment is None else environment
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        if args.grid:
            strips, _, nodes = args.grid.partition("x")
            if not (strips.isdigit() and nodes.isdigit()):
                raise ValueError(f"--grid expects <strips>x<nodes>, got {args.grid!r}")
            default = GridSpec()
            overrides["grid_strips"] = strips
            overrides["grid_nodes"] = nodes
            overrides.setdefault("hall_length", str(int(strips) * default.strip_spacing))
            overrides.setdefault("hall_width", str(int(nodes) * default.node_spacing))
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if "GRIDFLOOR_SEED" in env:
            overrides["seed"] = str(int(env["GRIDFLOOR_SEED"]))
        cfg = load_config(args.config, overrides)

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        stage = args.command
        if stage == "simulate":
            outputs = cmd_simulate(cfg, out_dir)
            inputs = []
        elif stage == "ingest":
            inputs = [args.in_dir]
            outputs = cmd_ingest(cfg, Path(args.in_dir), out_dir)
        elif stage == "features":
            inputs = [args.in_dir]
            outputs = cmd_features(cfg, Path(args.in_dir), out_dir)
        elif stage == "train-rf":
            inputs = [args.in_dir, args.features]
            outputs = cmd_train_rf(cfg, Path(args.in_dir), Path(args.features), out_dir)
        elif stage == "train-cnn":
            inputs = [args.in_dir, args.features]
            outputs = cmd_train_cnn(cfg, Path(args.in_dir), Path(args.features), out_dir)
        elif stage == "predict":
            inputs = [args.in_dir, args.models, args.features]
            outputs = cmd_predict(
                cfg, args.model, Path(args.in_dir), Path(args.models), Path(args.features), out_dir
            )
        elif stage == "trajfit":
            inputs = [args.in_dir, args.data]
            outputs = cmd_trajfit(cfg, Path(args.in_dir), Path(args.data), out_dir)
        elif stage == "evaluate":
            inputs = [args.in_dir, args.data]
            outputs = cmd_evaluate(cfg, Path(args.in_dir), Path(args.data), out_dir)
        elif stage == "report":
            inputs = [args.in_dir, args.data, args.metrics]
            outputs = cmd_report(
                cfg, Path(args.data), Path(args.in_dir), Path(args.metrics), out_dir
            )
        else:  # pragma: no cover - argparse restricts the choices
            raise ValueError(f"unknown stage {stage!r}")
        write_manifest(out_dir, stage, cfg, inputs, outputs)
        return 0
    except Exception as exc:
        print(f"gridfloor {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
