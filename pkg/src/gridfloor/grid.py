"""Grid geometry and shared domain types for the sensor floor.

The floor is a regular grid of sensor nodes: ``n_strips`` rows along the
hall length, each carrying ``nodes_per_strip`` nodes across the hall width.
Node ids are 1-based (external convention); flat array indices are 0-based
and strip-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidNodeError

# Per-node feature vector layout, fixed everywhere.
FEATURE_NAMES = ("ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "rssi")
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class GridSpec:
    """Grid dimensions and the physical hall they span (meters)."""

    n_strips: int = 23
    nodes_per_strip: int = 15
    hall_length: float = 30.0
    hall_width: float = 15.0

    def __post_init__(self):
        if self.n_strips < 1 or self.nodes_per_strip < 1:
            raise ValueError("grid must have at least one strip and one node per strip")
        if not (self.hall_length > 0 and self.hall_width > 0):
            raise ValueError("hall dimensions must be positive")

    @property
    def n_nodes(self) -> int:
        return self.n_strips * self.nodes_per_strip

    @property
    def strip_spacing(self) -> float:
        return self.hall_length / self.n_strips

    @property
    def node_spacing(self) -> float:
        return self.hall_width / self.nodes_per_strip

    def contains(self, node: "NodeId") -> bool:
        return 1 <= node.strip <= self.n_strips and 1 <= node.node <= self.nodes_per_strip

    def check(self, node: "NodeId") -> None:
        if not self.contains(node):
            raise InvalidNodeError(
                f"node ({node.strip},{node.node}) outside "
                f"{self.n_strips}x{self.nodes_per_strip} grid"
            )

    def flat_index(self, node: "NodeId") -> int:
        """0-based strip-major index used for feature column layout."""
        self.check(node)
        return (node.strip - 1) * self.nodes_per_strip + (node.node - 1)

    def all_nodes(self) -> list["NodeId"]:
        """All node ids in strip-major (flat index) order."""
        return [
            NodeId(s, n)
            for s in range(1, self.n_strips + 1)
            for n in range(1, self.nodes_per_strip + 1)
        ]


@dataclass(frozen=True, order=True)
class NodeId:
    """1-based (strip, node) address of one sensor."""

    strip: int
    node: int

    def __post_init__(self):
        if self.strip < 1 or self.node < 1:
            raise InvalidNodeError(f"node indices are 1-based, got ({self.strip},{self.node})")


@dataclass(frozen=True)
class Measurement:
    """One sensor reading: accel (m/s^2), gyro (deg/s), mag (uT), rssi (dBm)."""

    accel: tuple
    gyro: tuple
    mag: tuple
    rssi: float

    def as_array(self) -> np.ndarray:
        v = np.array([*self.accel, *self.gyro, *self.mag, self.rssi], dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("measurement values must be finite")
        return v

    @staticmethod
    def from_array(v) -> "Measurement":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("measurement values must be finite")
        return Measurement(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]), float(v[9]))


@dataclass(frozen=True)
class GroundTruthSample:
    """One tracking-system sample: time (s), position (mm), rotation (rad)."""

    t: float
    pos_mm: tuple
    rot_rad: tuple


def node_position(grid: GridSpec, node: NodeId) -> tuple:
    """Physical (x, y) of a node in meters, cell-centered within the hall."""
    grid.check(node)
    x = (node.strip - 0.5) * grid.strip_spacing
    y = (node.node - 0.5) * grid.node_spacing
    return (x, y)


def node_positions(grid: GridSpec) -> np.ndarray:
    """(n_nodes, 2) array of node positions in flat-index order."""
    s = (np.arange(grid.n_strips, dtype=np.float64) + 0.5) * grid.strip_spacing
    n = (np.arange(grid.nodes_per_strip, dtype=np.float64) + 0.5) * grid.node_spacing
    xx, yy = np.meshgrid(s, n, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def neighbors(grid: GridSpec, node: NodeId) -> set:
    """All nodes at Chebyshev distance 1, clipped at the grid edges."""
    grid.check(node)
    out = set()
    for ds in (-1, 0, 1):
        for dn in (-1, 0, 1):
            if ds == 0 and dn == 0:
                continue
            s, n = node.strip + ds, node.node + dn
            if 1 <= s <= grid.n_strips and 1 <= n <= grid.nodes_per_strip:
                out.add(NodeId(s, n))
    return out
