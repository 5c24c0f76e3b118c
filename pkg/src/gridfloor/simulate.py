"""Discrete-event simulator for the sensor floor.

Produces the two raw streams a recording session yields: per-node payload
logs (buffered measurement bundles flushed by round-robin sink polls) and a
high-rate ground-truth tracking stream, for a robot driving a scripted or
randomized trajectory. Everything is deterministic in the config seed.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError
from .grid import GridSpec, NodeId, node_positions

WAYPOINT_MARGIN = 0.5  # m kept clear of the hall walls
COVERAGE_RADIUS = 2.0  # m: every node must see the robot this close


@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec = GridSpec()
    node_sample_period: float = 0.4
    poll_rtt: float = 4.0
    poll_jitter_sd: float = 0.05
    buffer_capacity: int = 32
    gt_rate: float = 200.0
    robot_speed: float = 1.0
    rng_seed: int = 0
    duration: float | None = None  # None: plan duration plus one poll cycle

    def __post_init__(self):
        if self.node_sample_period <= 0 or self.poll_rtt <= 0:
            raise ValueError("periods must be positive")
        if self.gt_rate <= 0:
            raise ValueError("gt_rate must be positive")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be at least 1")
        if self.poll_jitter_sd < 0:
            raise ValueError("poll_jitter_sd must be non-negative")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class TrajectoryPlan:
    """Waypoint route driven at constant speed."""

    waypoints: tuple
    speed: float = 1.0
    label: str = "run"

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("a plan needs at least two waypoints")
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @property
    def duration(self) -> float:
        length = 0.0
        for (x0, y0), (x1, y1) in zip(self.waypoints, self.waypoints[1:]):
            length += math.hypot(x1 - x0, y1 - y0)
        return length / self.speed

    def check_bounds(self, grid: GridSpec) -> None:
        for x, y in self.waypoints:
            if not (
                WAYPOINT_MARGIN <= x <= grid.hall_length - WAYPOINT_MARGIN
                and WAYPOINT_MARGIN <= y <= grid.hall_width - WAYPOINT_MARGIN
            ):
                raise ValueError(
                    f"waypoint ({x},{y}) outside hall margins for plan {self.label!r}"
                )


@dataclass(frozen=True)
class SignalModel:
    """Synthetic signal physics: log-distance RSSI and a dipole magnet."""

    rssi_ref: float = -40.0  # dBm at 1 m
    path_loss_exp: float = 2.2
    rssi_noise_sd: float = 2.0  # dB
    mag_baseline: tuple = (20.0, 0.0, 44.0)  # uT
    dipole_strength: float = 5.0  # uT * m^3
    mag_noise_sd: float = 0.3  # uT
    accel_noise_sd: float = 0.05  # m/s^2
    gyro_noise_sd: float = 0.5  # deg/s

    def __post_init__(self):
        if self.path_loss_exp <= 0:
            raise ValueError("path_loss_exp must be positive")
        for sd in (self.rssi_noise_sd, self.mag_noise_sd, self.accel_noise_sd, self.gyro_noise_sd):
            if sd < 0:
                raise ValueError("noise standard deviations must be non-negative")

    def noise_sds(self) -> np.ndarray:
        return np.array(
            [self.accel_noise_sd] * 3
            + [self.gyro_noise_sd] * 3
            + [self.mag_noise_sd] * 3
            + [self.rssi_noise_sd],
            dtype=np.float64,
        )


@dataclass
class PayloadRecord:
    node: NodeId
    t: float
    samples: np.ndarray  # (k, 10) in capture order


@dataclass
class EventLog:
    """One recording: payload bundles in poll order plus the tracking stream."""

    grid: GridSpec
    payloads: list = field(default_factory=list)  # list[PayloadRecord]
    gt_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    gt_pos_mm: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    gt_rot_rad: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    overflow_dropped: int = 0


# The recording robot holds "about" unit speed, not exactly: each run gets a
# slightly different pace. The spread also keeps kinematic-limit calibration
# meaningful (with every run at exactly the same speed, the velocity
# percentile would sit exactly on the true speed and leave no headroom).
TRAINING_SPEEDS = (1.0, 0.9, 1.1, 0.95, 1.05, 1.15, 0.9, 1.0, 1.1)


def plan_training_runs(grid: GridSpec) -> list:
    """Nine coverage runs: three horizontal serpentines, three vertical, three diagonals.

    The union of the nine paths passes within COVERAGE_RADIUS of every node;
    leg spacing is derived from the hall dimensions so the guarantee holds on
    any hall of at least 3 x 3 m.
    """
    length, width = grid.hall_length, grid.hall_width
    if length < 3.0 or width < 3.0:
        raise CoverageError(f"hall {length}x{width} m too small for coverage runs")
    lo = WAYPOINT_MARGIN + 0.25
    x_hi, y_hi = length - lo, width - lo

    def legs(span_lo, span_hi):
        # Positions spaced <= 2.6 m so every coordinate is within 1.3 m of a leg.
        n = max(2, math.ceil((span_hi - span_lo) / 2.6) + 1)
        return list(np.linspace(span_lo, span_hi, n))

    def serpentine(leg_positions, horizontal, label):
        pts = []
        for i, p in enumerate(leg_positions):
            ends = [(lo, p), (x_hi, p)] if horizontal else [(p, lo), (p, y_hi)]
            if i % 2:
                ends.reverse()
            pts.extend(ends)
        return TrajectoryPlan(tuple(pts), 1.0, label)

    y_legs = legs(lo, y_hi)
    x_legs = legs(lo, x_hi)
    plans = [
        serpentine(y_legs[0::3], True, "train_h0"),
        serpentine(y_legs[1::3], True, "train_h1"),
        serpentine(y_legs[2::3] or y_legs[-1:], True, "train_h2"),
        serpentine(x_legs[0::3], False, "train_v0"),
        serpentine(x_legs[1::3], False, "train_v1"),
        serpentine(x_legs[2::3] or x_legs[-1:], False, "train_v2"),
        TrajectoryPlan(((lo, lo), (x_hi, y_hi)), 1.0, "train_d0"),
        TrajectoryPlan(((lo, y_hi), (x_hi, lo)), 1.0, "train_d1"),
        TrajectoryPlan(
            ((lo, 0.5 * (lo + y_hi)), (0.5 * (lo + x_hi), lo), (x_hi, 0.5 * (lo + y_hi))),
            1.0,
            "train_d2",
        ),
    ]
    plans = [
        TrajectoryPlan(p.waypoints, speed, p.label)
        for p, speed in zip(plans, TRAINING_SPEEDS)
    ]
    for plan in plans:
        plan.check_bounds(grid)
    worst = max_node_distance(grid, plans)
    if worst > COVERAGE_RADIUS:
        raise CoverageError(f"worst node-to-path distance {worst:.2f} m exceeds {COVERAGE_RADIUS} m")
    return plans


def max_node_distance(grid: GridSpec, plans) -> float:
    """Largest over nodes of the smallest distance to any planned path segment."""
    nodes = node_positions(grid)
    best = np.full(grid.n_nodes, np.inf)
    for plan in plans:
        w = np.asarray(plan.waypoints, dtype=np.float64)
        for (x0, y0), (x1, y1) in zip(w, w[1:]):
            d = _point_segment_distance(nodes, x0, y0, x1, y1)
            np.minimum(best, d, out=best)
    return float(best.max())


def _point_segment_distance(points, x0, y0, x1, y1):
    seg = np.array([x1 - x0, y1 - y0])
    rel = points - np.array([x0, y0])
    denom = float(seg @ seg)
    if denom == 0.0:
        return np.hypot(rel[:, 0], rel[:, 1])
    u = np.clip(rel @ seg / denom, 0.0, 1.0)
    closest = np.outer(u, seg)
    return np.hypot(rel[:, 0] - closest[:, 0], rel[:, 1] - closest[:, 1])


def plan_random_run(grid: GridSpec, seed: int, n_waypoints: int) -> TrajectoryPlan:
    """Uniform in-bounds waypoints, deterministic in the seed."""
    if n_waypoints < 2:
        raise ValueError("need at least two waypoints")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(WAYPOINT_MARGIN, grid.hall_length - WAYPOINT_MARGIN, n_waypoints)
    ys = rng.uniform(WAYPOINT_MARGIN, grid.hall_width - WAYPOINT_MARGIN, n_waypoints)
    return TrajectoryPlan(tuple(zip(xs.tolist(), ys.tolist())), 1.0, f"random_{seed}")


def robot_position(plan: TrajectoryPlan, t: float) -> tuple:
    """Constant-speed piecewise-linear position; clamps beyond the last waypoint."""
    path = _RobotPath([plan])
    x, y = path.position(max(t, 0.0))
    return (float(x), float(y))


class _RobotPath:
    """Concatenated plans with constant-speed glide segments between them."""

    def __init__(self, plans):
        pts = []
        speeds = []  # one speed per segment, i.e. per point after the first
        for plan in plans:
            for p in ((float(x), float(y)) for x, y in plan.waypoints):
                if not pts:
                    pts.append(p)
                elif p != pts[-1]:
                    speeds.append(plan.speed)
                    pts.append(p)
        if len(pts) < 2:
            pts = pts * 2 if pts else [(0.0, 0.0), (0.0, 0.0)]
            speeds = [plans[0].speed if plans else 1.0]
        self.points = np.asarray(pts, dtype=np.float64)
        seg = np.diff(self.points, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        seg_dur = seg_len / np.asarray(speeds, dtype=np.float64)
        self.t_knots = np.concatenate([[0.0], np.cumsum(seg_dur)])
        self.duration = float(self.t_knots[-1])

    def position(self, t: float):
        tt = min(max(t, 0.0), self.duration)
        i = int(np.searchsorted(self.t_knots, tt, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 2)
        t0, t1 = self.t_knots[i], self.t_knots[i + 1]
        u = 0.0 if t1 == t0 else (tt - t0) / (t1 - t0)
        p = self.points[i] + u * (self.points[i + 1] - self.points[i])
        return p[0], p[1]

    def heading(self, t: float) -> float:
        tt = min(max(t, 0.0), self.duration)
        i = int(np.searchsorted(self.t_knots, tt, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 2)
        d = self.points[i + 1] - self.points[i]
        return float(math.atan2(d[1], d[0])) if (d[0] or d[1]) else 0.0


def sense(model: SignalModel, node_pos, robot_pos, rng) -> np.ndarray:
    """One 10-feature measurement for a node given the robot position.

    RSSI follows a log-distance path-loss model; the magnetometer sees the
    Earth-field baseline plus a 1/d^3 dipole term directed from the node
    toward the robot; accel and gyro are zero-mean noise. Distance is floored
    at 0.1 m.
    """
    dx = robot_pos[0] - node_pos[0]
    dy = robot_pos[1] - node_pos[1]
    d = max(math.hypot(dx, dy), 0.1)
    out = rng.normal(0.0, 1.0, 10) * model.noise_sds()
    out[6] += model.mag_baseline[0]
    out[7] += model.mag_baseline[1]
    out[8] += model.mag_baseline[2]
    if dx or dy:
        scale = model.dipole_strength / d ** 3 / math.hypot(dx, dy)
        out[6] += scale * dx
        out[7] += scale * dy
    out[9] += model.rssi_ref - 10.0 * model.path_loss_exp * math.log10(d)
    return out


def simulate(config: SimConfig, plans, model: SignalModel) -> EventLog:
    """Run the event-queue simulation for the given plans on one timeline.

    Each node samples on its own phase-offset clock into a bounded FIFO
    buffer; each strip's sink sweeps its nodes round-robin once per jittered
    poll cycle, flushing whatever the buffer holds into a payload stamped
    with the poll time. Ground truth is emitted on a fixed-rate clock.
    """
    grid = config.grid
    for plan in plans:
        plan.check_bounds(grid)
    path = _RobotPath(plans)
    duration = config.duration if config.duration is not None else path.duration + config.poll_rtt

    root = np.random.SeedSequence(config.rng_seed)
    phase_rng = np.random.default_rng(root.spawn(1)[0])
    phases = phase_rng.uniform(0.0, config.node_sample_period, grid.n_nodes)
    node_seeds = root.spawn(grid.n_nodes)
    node_rngs = [np.random.default_rng(s) for s in node_seeds]
    strip_rngs = [np.random.default_rng(s) for s in root.spawn(grid.n_strips)]

    npos = node_positions(grid)
    noise_sds = model.noise_sds()
    mag_base = np.asarray(model.mag_baseline, dtype=np.float64)

    log = EventLog(grid=grid)
    buffers = [[] for _ in range(grid.n_nodes)]

    # Event tuple: (time, kind, seq, a, b). Kinds order sample < poll < gt so a
    # sample landing exactly at a poll instant is included in that flush.
    SAMPLE, POLL, GT = 0, 1, 2
    heap = []
    seq = 0
    for i in range(grid.n_nodes):
        heapq.heappush(heap, (phases[i], SAMPLE, seq, i, 0))
        seq += 1

    def push_cycle(strip_idx, start):
        nonlocal seq
        jitter = float(strip_rngs[strip_idx].normal(0.0, config.poll_jitter_sd))
        cycle = max(config.poll_rtt + jitter, 0.5 * config.poll_rtt)
        slot = cycle / grid.nodes_per_strip
        for k in range(grid.nodes_per_strip):
            t = start + (k + 1) * slot
            if t <= duration:
                heapq.heappush(heap, (t, POLL, seq, strip_idx, k))
                seq += 1
        return start + cycle

    cycle_starts = [push_cycle(s, 0.0) for s in range(grid.n_strips)]

    n_gt = int(math.floor(duration * config.gt_rate)) + 1
    gt_t = np.arange(n_gt, dtype=np.float64) / config.gt_rate
    for k, t in enumerate(gt_t):
        heapq.heappush(heap, (float(t), GT, seq, k, 0))
        seq += 1

    gt_pos = np.zeros((n_gt, 3))
    gt_rot = np.zeros((n_gt, 3))

    while heap:
        t, kind, _, a, b = heapq.heappop(heap)
        if t > duration:
            continue
        if kind == SAMPLE:
            x, y = path.position(t)
            node_i = a
            v = node_rngs[node_i].normal(0.0, 1.0, 10) * noise_sds
            v[6:9] += mag_base
            dx, dy = x - npos[node_i, 0], y - npos[node_i, 1]
            d_true = math.hypot(dx, dy)
            d = max(d_true, 0.1)
            if d_true > 0.0:
                scale = model.dipole_strength / d ** 3 / d_true
                v[6] += scale * dx
                v[7] += scale * dy
            v[9] += model.rssi_ref - 10.0 * model.path_loss_exp * math.log10(d)
            buf = buffers[node_i]
            if len(buf) >= config.buffer_capacity:
                buf.pop(0)
                log.overflow_dropped += 1
            buf.append(v)
            t_next = phases[node_i] + (b + 1) * config.node_sample_period
            if t_next <= duration:
                heapq.heappush(heap, (t_next, SAMPLE, seq, node_i, b + 1))
                seq += 1
        elif kind == POLL:
            strip_idx, k = a, b
            node_i = strip_idx * grid.nodes_per_strip + k
            buf = buffers[node_i]
            if buf:
                samples = np.stack(buf)
                buffers[node_i] = []
                log.payloads.append(
                    PayloadRecord(NodeId(strip_idx + 1, k + 1), float(t), samples)
                )
            if k == grid.nodes_per_strip - 1 and cycle_starts[strip_idx] < duration:
                cycle_starts[strip_idx] = push_cycle(strip_idx, cycle_starts[strip_idx])
        else:
            x, y = path.position(t)
            gt_pos[a, 0] = x * 1000.0
            gt_pos[a, 1] = y * 1000.0
            gt_rot[a, 2] = path.heading(t)

    log.gt_t = gt_t
    log.gt_pos_mm = gt_pos
    log.gt_rot_rad = gt_rot
    return log


def payload_topic(node: NodeId) -> str:
    return f"/imu_reader/{node.strip}/{node.node}"


def write_payload_log(log: EventLog, path) -> None:
    lines = []
    for rec in log.payloads:
        obj = {
            "topic": payload_topic(rec.node),
            "t": rec.t,
            "samples": [[float(v) for v in row] for row in rec.samples],
        }
        lines.append(json.dumps(obj, separators=(",", ":")))
    _write_lines(path, lines)


def write_ground_truth_log(log: EventLog, path) -> None:
    lines = []
    for t, pos, rot in zip(log.gt_t, log.gt_pos_mm, log.gt_rot_rad):
        obj = {
            "t": float(t),
            "pos_mm": [float(v) for v in pos],
            "rot_rad": [float(v) for v in rot],
        }
        lines.append(json.dumps(obj, separators=(",", ":")))
    _write_lines(path, lines)


def _write_lines(path, lines) -> None:
    from .ioutil import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
