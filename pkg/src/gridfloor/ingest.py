"""Payload parsing, timestamp interpolation, label merging, frame assembly.

Turns the raw recording (per-node payload bundles with one poll timestamp
each, plus the high-rate tracking stream) into a floor-wide frame dataset:
one measurement per node per frame, with an averaged label and timestamp.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    IncompleteGridError,
    InvalidNodeError,
    MergeError,
    OrderingError,
    PayloadParseError,
    SchemaError,
)
from .grid import N_FEATURES, GridSpec, NodeId
from .ioutil import atomic_write_text, fmt

_TOPIC_RE = re.compile(r"^/imu_reader/(\d+)/(\d+)$")


@dataclass
class BufferBatch:
    """One flushed buffer: the poll time and the samples captured before it."""

    node: NodeId
    t: float
    samples: np.ndarray  # (k, 10)


@dataclass
class InterpolatedSeries:
    """A node's flattened samples with per-sample interpolated timestamps."""

    node: NodeId
    features: np.ndarray  # (n, 10)
    times: np.ndarray  # (n,), strictly increasing
    skipped_empty: int = 0


@dataclass
class MergedSeries:
    """Interpolated samples with nearest-time labels attached (meters)."""

    node: NodeId
    features: np.ndarray  # (n, 10)
    labels: np.ndarray  # (n, 2)
    times: np.ndarray  # (n,)


@dataclass
class FrameDataset:
    """Floor-wide frames: per-node features, averaged label and timestamp."""

    grid: GridSpec
    times: np.ndarray  # (F,)
    labels: np.ndarray  # (F, 2)
    features: np.ndarray  # (F, n_nodes * 10), strip-major node order

    def __post_init__(self):
        if self.features.shape[1] != self.grid.n_nodes * N_FEATURES:
            raise SchemaError(
                f"expected {self.grid.n_nodes * N_FEATURES} feature columns, "
                f"got {self.features.shape[1]}"
            )

    @property
    def n_frames(self) -> int:
        return len(self.times)


def parse_topic(topic: str) -> NodeId:
    m = _TOPIC_RE.match(topic)
    if not m:
        raise ValueError(f"topic {topic!r} does not match /imu_reader/<strip>/<node>")
    return NodeId(int(m.group(1)), int(m.group(2)))


def parse_payload_log(lines, grid: GridSpec) -> dict:
    """Parse payload lines into per-node batch lists sorted by poll time.

    Raises PayloadParseError with the 1-based line number on malformed input
    and InvalidNodeError when a topic addresses a node outside the grid.
    Batches with no samples are dropped.
    """
    batches: dict[NodeId, list[BufferBatch]] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            node = parse_topic(obj["topic"])
            t = float(obj["t"])
            samples = np.asarray(obj["samples"], dtype=np.float64)
        except InvalidNodeError:
            raise
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise PayloadParseError(line_no, str(exc)) from exc
        grid.check(node)
        if samples.size == 0:
            continue
        if samples.ndim != 2 or samples.shape[1] != N_FEATURES:
            raise PayloadParseError(
                line_no, f"samples must be rows of {N_FEATURES} values"
            )
        if not (np.isfinite(t) and np.all(np.isfinite(samples))):
            raise PayloadParseError(line_no, "non-finite value")
        batches.setdefault(node, []).append(BufferBatch(node, t, samples))
    for node_batches in batches.values():
        node_batches.sort(key=lambda b: b.t)
    return batches


def parse_ground_truth_log(lines):
    """Parse the tracking stream into (t, pos_mm, rot_rad) arrays."""
    ts, pos, rot = [], [], []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            ts.append(float(obj["t"]))
            pos.append([float(v) for v in obj["pos_mm"]])
            rot.append([float(v) for v in obj["rot_rad"]])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise PayloadParseError(line_no, str(exc)) from exc
    t = np.asarray(ts, dtype=np.float64)
    if len(t) > 1 and not np.all(np.diff(t) > 0):
        raise OrderingError("ground-truth timestamps must strictly increase")
    return t, np.asarray(pos, dtype=np.float64), np.asarray(rot, dtype=np.float64)


def interpolate_timestamps(batches, rtt: float) -> InterpolatedSeries:
    """Spread each batch's samples evenly up to its poll time.

    Batch i with k samples and predecessor poll time t_prev gets timestamps
    t_prev + j * (t_i - t_prev) / k for j = 1..k, so the last sample lands
    exactly on the poll time. The first batch uses t_prev = t_0 - rtt.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("no batches to interpolate")
    skipped = 0
    cleaned = []
    for b in batches:
        if b.samples.size == 0:
            skipped += 1
            continue
        cleaned.append(b)
    if not cleaned:
        return InterpolatedSeries(
            node=batches[0].node,
            features=np.empty((0, N_FEATURES)),
            times=np.empty(0),
            skipped_empty=skipped,
        )
    node = cleaned[0].node
    poll_times = np.array([b.t for b in cleaned])
    if np.any(np.diff(poll_times) <= 0):
        raise OrderingError(f"batch poll times must strictly increase for node {node}")

    feats = []
    times = []
    prev = cleaned[0].t - rtt
    for b in cleaned:
        k = len(b.samples)
        step = (b.t - prev) / k
        ts = prev + step * np.arange(1, k + 1, dtype=np.float64)
        ts[-1] = b.t  # anchor exactly on the poll time
        feats.append(b.samples)
        times.append(ts)
        prev = b.t
    return InterpolatedSeries(
        node=node,
        features=np.concatenate(feats, axis=0),
        times=np.concatenate(times),
        skipped_empty=skipped,
    )


def nearest_indices(sorted_times: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Index of the nearest value in sorted_times for each query; ties take
    the earlier timestamp."""
    idx = np.searchsorted(sorted_times, query)
    left = np.clip(idx - 1, 0, len(sorted_times) - 1)
    right = np.clip(idx, 0, len(sorted_times) - 1)
    d_left = np.abs(query - sorted_times[left])
    d_right = np.abs(sorted_times[right] - query)
    return np.where(d_right < d_left, right, left)


def merge_with_ground_truth(series: InterpolatedSeries, gt_t, gt_pos_mm) -> MergedSeries:
    """Attach the closest-in-time tracking label to every sample.

    Positions convert mm -> m; rotation and the z axis are dropped.
    """
    gt_t = np.asarray(gt_t, dtype=np.float64)
    if gt_t.size == 0:
        raise MergeError("ground-truth stream is empty")
    if np.any(np.diff(gt_t) <= 0):
        raise OrderingError("ground-truth timestamps must strictly increase")
    pick = nearest_indices(gt_t, series.times)
    labels = np.asarray(gt_pos_mm, dtype=np.float64)[pick, :2] / 1000.0
    return MergedSeries(series.node, series.features, labels, series.times.copy())


def generate_frames(all_nodes: dict, grid: GridSpec) -> FrameDataset:
    """Assemble floor-wide frames around the shortest node series.

    The node with the fewest observations (ties: smallest (strip, node)) is
    the reference; every other node contributes its nearest-in-time sample to
    each reference item. Labels and timestamps average over all nodes. Frames
    whose reference time falls outside the intersection of all node time
    ranges are trimmed.
    """
    order = grid.all_nodes()
    missing = [
        (n.strip, n.node)
        for n in order
        if n not in all_nodes or len(all_nodes[n].times) == 0
    ]
    if missing:
        raise IncompleteGridError(missing)

    ref = min(order, key=lambda n: (len(all_nodes[n].times), (n.strip, n.node)))
    ref_times = all_nodes[ref].times
    n_frames = len(ref_times)

    feature_blocks = []
    label_sum = np.zeros((n_frames, 2))
    time_sum = np.zeros(n_frames)
    lo = -np.inf
    hi = np.inf
    for node in order:
        s = all_nodes[node]
        pick = nearest_indices(s.times, ref_times)
        feature_blocks.append(s.features[pick])
        label_sum += s.labels[pick]
        time_sum += s.times[pick]
        lo = max(lo, s.times[0])
        hi = min(hi, s.times[-1])

    keep = (ref_times >= lo) & (ref_times <= hi)
    features = np.concatenate(feature_blocks, axis=1)[keep]
    n = len(order)
    return FrameDataset(
        grid=grid,
        times=(time_sum / n)[keep],
        labels=(label_sum / n)[keep],
        features=features,
    )


def dataset_header(grid: GridSpec) -> list:
    cols = ["t", "y_x", "y_y"]
    for s in range(1, grid.n_strips + 1):
        for n in range(1, grid.nodes_per_strip + 1):
            cols.extend(f"f_{s}_{n}_{k}" for k in range(N_FEATURES))
    return cols


def write_dataset(ds: FrameDataset, path) -> None:
    """Persist as CSV: header, then one row per frame with full-precision floats."""
    header = ",".join(dataset_header(ds.grid))
    rows = [header]
    for i in range(ds.n_frames):
        vals = [fmt(ds.times[i]), fmt(ds.labels[i, 0]), fmt(ds.labels[i, 1])]
        vals.extend(fmt(v) for v in ds.features[i])
        rows.append(",".join(vals))
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_dataset(path, grid: GridSpec | None = None) -> FrameDataset:
    """Load a dataset CSV, inferring the grid from the header when not given."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        inferred = _grid_from_header(cols)
        if grid is None:
            grid = inferred
        elif (grid.n_strips, grid.nodes_per_strip) != (
            inferred.n_strips,
            inferred.nodes_per_strip,
        ):
            raise SchemaError(
                f"file is {inferred.n_strips}x{inferred.nodes_per_strip}, "
                f"expected {grid.n_strips}x{grid.nodes_per_strip}"
            )
        expected = dataset_header(grid)
        if cols != expected:
            raise SchemaError("header does not match the expected column naming")
        width = len(expected)
        data = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise SchemaError(f"line {line_no}: expected {width} columns, got {len(parts)}")
            data.append(np.array(parts, dtype=np.float64))
    arr = np.vstack(data) if data else np.empty((0, width))
    return FrameDataset(grid=grid, times=arr[:, 0], labels=arr[:, 1:3], features=arr[:, 3:])


def _grid_from_header(cols) -> GridSpec:
    if cols[:3] != ["t", "y_x", "y_y"] or len(cols) < 4:
        raise SchemaError("header must start with t,y_x,y_y and carry feature columns")
    max_s = max_n = 0
    for c in cols[3:]:
        m = re.match(r"^f_(\d+)_(\d+)_(\d+)$", c)
        if not m:
            raise SchemaError(f"bad feature column name {c!r}")
        max_s = max(max_s, int(m.group(1)))
        max_n = max(max_n, int(m.group(2)))
    default = GridSpec()
    return GridSpec(
        n_strips=max_s,
        nodes_per_strip=max_n,
        hall_length=max_s * default.strip_spacing,
        hall_width=max_n * default.node_spacing,
    )


def ingest_run(payload_lines, gt_lines, grid: GridSpec, rtt: float) -> FrameDataset:
    """Full preprocessing for one recording: parse, interpolate, merge, frame."""
    batches = parse_payload_log(payload_lines, grid)
    gt_t, gt_pos, _ = parse_ground_truth_log(gt_lines)
    merged = {}
    for node, node_batches in batches.items():
        series = interpolate_timestamps(node_batches, rtt)
        merged[node] = merge_with_ground_truth(series, gt_t, gt_pos)
    return generate_frames(merged, grid)
