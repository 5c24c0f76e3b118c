"""Feature scaling and spatial feature construction.

Two preparation paths share the channel selection (magnetometer + RSSI):
the forest path min-max scales per feature column and sums each node with
its 8-neighborhood; the network path z-normalizes per channel and packs
frames into (strips x nodes x channels) grid tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .grid import N_FEATURES, GridSpec, NodeId, neighbors
from .ioutil import atomic_write_text

# Channels kept for both estimators, in order: mag x/y/z then rssi.
SELECTED_CHANNELS = (6, 7, 8, 9)
N_SELECTED = len(SELECTED_CHANNELS)


@dataclass(frozen=True)
class MinMaxParams:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.mins > self.maxs):
            raise ValueError("per-column min must not exceed max")


@dataclass(frozen=True)
class ZNormParams:
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        if np.any(self.sds < 0):
            raise ValueError("standard deviations must be non-negative")


def _check_width(features: np.ndarray, grid: GridSpec, per_node: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[None, :]
    want = grid.n_nodes * per_node
    if features.ndim != 2 or features.shape[1] != want:
        raise SchemaError(
            f"expected {want} columns ({per_node} per node), got shape {features.shape}"
        )
    return features


def select_channels(features: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Keep magnetometer and RSSI columns of a full 10-feature frame matrix."""
    features = _check_width(features, grid, N_FEATURES)
    cols = np.concatenate(
        [np.array(SELECTED_CHANNELS) + N_FEATURES * i for i in range(grid.n_nodes)]
    )
    return features[:, cols]


def fit_minmax(train_features: np.ndarray) -> MinMaxParams:
    x = np.asarray(train_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one training frame")
    return MinMaxParams(mins=x.min(axis=0), maxs=x.max(axis=0))


def apply_minmax(params: MinMaxParams, features: np.ndarray) -> np.ndarray:
    """Scale to [0,1] on the training range; constant columns map to 0.

    Values outside the training range are not clipped.
    """
    x = np.asarray(features, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != len(params.mins):
        raise SchemaError(f"expected {len(params.mins)} columns, got {x.shape[1]}")
    span = params.maxs - params.mins
    safe = np.where(span > 0, span, 1.0)
    out = (x - params.mins) / safe
    out[:, span == 0] = 0.0
    return out[0] if squeeze else out


def neighbor_indices(grid: GridSpec) -> list:
    """Flat neighbor index lists per node, in flat-index order."""
    out = []
    for node in grid.all_nodes():
        out.append(
            np.array(sorted(grid.flat_index(m) for m in neighbors(grid, node)), dtype=np.intp)
        )
    return out


def aggregate_neighborhood(features: np.ndarray, grid: GridSpec, per_node: int = N_SELECTED) -> np.ndarray:
    """Replace each node's features by itself plus the unweighted sum of its
    direct neighbors' features."""
    squeeze = np.asarray(features).ndim == 1
    x = _check_width(features, grid, per_node)
    stacked = x.reshape(x.shape[0], grid.n_nodes, per_node)
    out = stacked.copy()
    for i, nbrs in enumerate(neighbor_indices(grid)):
        out[:, i, :] += stacked[:, nbrs, :].sum(axis=1)
    out = out.reshape(x.shape[0], grid.n_nodes * per_node)
    return out[0] if squeeze else out


def fit_znorm(train_features: np.ndarray, grid: GridSpec, per_node: int = N_SELECTED) -> ZNormParams:
    """Per-channel mean and population standard deviation pooled across nodes."""
    x = _check_width(train_features, grid, per_node)
    if x.shape[0] < 2:
        raise ValueError("need at least two training frames")
    stacked = x.reshape(-1, per_node)
    return ZNormParams(means=stacked.mean(axis=0), sds=stacked.std(axis=0))


def apply_znorm(params: ZNormParams, features: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Normalize each channel to zero mean, unit variance; constant channels map to 0."""
    per_node = len(params.means)
    squeeze = np.asarray(features).ndim == 1
    x = _check_width(features, grid, per_node)
    stacked = x.reshape(x.shape[0], grid.n_nodes, per_node)
    safe = np.where(params.sds > 0, params.sds, 1.0)
    out = (stacked - params.means) / safe
    out[:, :, params.sds == 0] = 0.0
    out = out.reshape(x.shape[0], grid.n_nodes * per_node)
    return out[0] if squeeze else out


def to_grid_tensor(features: np.ndarray, grid: GridSpec, per_node: int = N_SELECTED) -> np.ndarray:
    """Pack frame rows into (strips, nodes, channels) tensors.

    A single frame maps to a 3-d tensor, a frame matrix to a batched 4-d one;
    tensor[s-1][n-1][c] holds channel c of node (s, n).
    """
    squeeze = np.asarray(features).ndim == 1
    x = _check_width(features, grid, per_node)
    t = x.reshape(x.shape[0], grid.n_strips, grid.nodes_per_strip, per_node)
    if not np.all(np.isfinite(t)):
        raise ValueError("grid tensor values must be finite")
    return t[0] if squeeze else t


def from_grid_tensor(tensor: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Inverse of to_grid_tensor."""
    t = np.asarray(tensor, dtype=np.float64)
    squeeze = t.ndim == 3
    if squeeze:
        t = t[None, ...]
    if t.ndim != 4 or t.shape[1] != grid.n_strips or t.shape[2] != grid.nodes_per_strip:
        raise SchemaError(
            f"expected (*, {grid.n_strips}, {grid.nodes_per_strip}, channels), got {t.shape}"
        )
    out = t.reshape(t.shape[0], -1)
    return out[0] if squeeze else out


def value_at(tensor: np.ndarray, node: NodeId) -> np.ndarray:
    """Channels of one node in a packed tensor (0-based internal indexing)."""
    return tensor[node.strip - 1, node.node - 1]


def save_minmax(params: MinMaxParams, path) -> None:
    atomic_write_text(
        path,
        json.dumps(
            {"mins": params.mins.tolist(), "maxs": params.maxs.tolist()},
            separators=(",", ":"),
        )
        + "\n",
    )


def load_minmax(path) -> MinMaxParams:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return MinMaxParams(
        mins=np.asarray(obj["mins"], dtype=np.float64),
        maxs=np.asarray(obj["maxs"], dtype=np.float64),
    )


def save_znorm(params: ZNormParams, path) -> None:
    atomic_write_text(
        path,
        json.dumps(
            {"means": params.means.tolist(), "sds": params.sds.tolist()},
            separators=(",", ":"),
        )
        + "\n",
    )


def load_znorm(path) -> ZNormParams:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return ZNormParams(
        means=np.asarray(obj["means"], dtype=np.float64),
        sds=np.asarray(obj["sds"], dtype=np.float64),
    )
