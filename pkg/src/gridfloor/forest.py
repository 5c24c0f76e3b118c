"""Random forest regression built from scratch: bagged CART trees.

Trees predict the (x, y) label jointly; splits greedily maximize the
reduction of the summed per-dimension label variance over a random feature
subset. Everything is deterministic in the forest seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CrossValidationError, FitError, SchemaError
from .ioutil import atomic_write_text

MODEL_VERSION = 1


@dataclass
class TreeNode:
    """Internal split (feature, threshold, children) or leaf (value, count)."""

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: np.ndarray | None = None  # (2,) mean label at a leaf
    count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None: ceil(d / 3)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ValueError("features_per_split must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")


@dataclass
class Forest:
    params: ForestParams
    n_features: int
    trees: list = field(default_factory=list)


@dataclass
class CVReport:
    """Grid-search outcome: held-out errors per candidate and the winner."""

    grid: list
    fold_errors: np.ndarray  # (n_candidates, n_folds)
    mean_errors: np.ndarray  # (n_candidates,)
    best_index: int

    @property
    def best_params(self) -> ForestParams:
        return self.grid[self.best_index]


def best_split(x_col: np.ndarray, labels: np.ndarray, min_leaf: int):
    """Best threshold on one feature by summed-variance reduction.

    Returns (score, threshold) where score is the reduction of the summed
    per-dimension sum of squared deviations, or None when no valid split
    exists. Thresholds are midpoints between consecutive distinct values.
    """
    n = len(x_col)
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    ys = labels[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1]
    k = np.arange(1, n)
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        valid &= (k >= min_leaf) & (n - k >= min_leaf)
    if not np.any(valid):
        return None
    left = csum[:-1]
    right = total - left
    # Maximizing sum_d (L_d^2/k + R_d^2/(n-k)) maximizes the SSE reduction.
    score = ((left ** 2).sum(axis=1) / k) + ((right ** 2).sum(axis=1) / (n - k))
    score[~valid] = -np.inf
    best = int(np.argmax(score))
    base = float((total ** 2).sum() / n)
    sse_parent = float((ys ** 2).sum()) - base
    reduction = float(score[best]) - base
    if not math.isfinite(reduction) or reduction <= 1e-12 or sse_parent <= 1e-12:
        return None
    return reduction, 0.5 * (xs[best] + xs[best + 1])


def _grow_tree(features, labels, params: ForestParams, rng) -> TreeNode:
    d = features.shape[1]
    m = params.features_per_split or max(1, math.ceil(d / 3))
    m = min(m, d)
    root = TreeNode()
    stack = [(root, np.arange(len(features)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        y = labels[idx]
        node.count = len(idx)
        depth_ok = params.max_depth is None or depth < params.max_depth
        choice = None
        if depth_ok and len(idx) >= 2 * params.min_leaf:
            subset = np.sort(rng.choice(d, size=m, replace=False))
            best = None
            for f in subset:
                cand = best_split(features[idx, f], y, params.min_leaf)
                if cand is not None and (best is None or cand[0] > best[0]):
                    best = cand
                    choice = (int(f), float(cand[1]))
            if best is None:
                choice = None
        if choice is None:
            node.value = y.mean(axis=0)
            continue
        node.feature, node.threshold = choice
        go_left = features[idx, node.feature] <= node.threshold
        node.left = TreeNode()
        node.right = TreeNode()
        stack.append((node.right, idx[~go_left], depth + 1))
        stack.append((node.left, idx[go_left], depth + 1))
    return root


def fit_forest(features: np.ndarray, labels: np.ndarray, params: ForestParams) -> Forest:
    """Grow n_trees CART trees, each on its own seeded bootstrap resample."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or len(features) < 1:
        raise FitError("need at least one training sample")
    if labels.shape != (len(features), 2):
        raise FitError(f"labels must be (n, 2), got {labels.shape}")
    forest = Forest(params=params, n_features=features.shape[1])
    n = len(features)
    for i in range(params.n_trees):
        rng = np.random.default_rng(params.seed + i)
        if params.bootstrap:
            idx = rng.integers(0, n, size=n)
            fx, fy = features[idx], labels[idx]
        else:
            fx, fy = features, labels
        forest.trees.append(_grow_tree(fx, fy, params, rng))
    return forest


def _predict_tree(tree: TreeNode, features: np.ndarray) -> np.ndarray:
    out = np.empty((len(features), 2))
    stack = [(tree, np.arange(len(features)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if node.is_leaf:
            out[idx] = node.value
            continue
        go_left = features[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def predict_forest(forest: Forest, features: np.ndarray) -> np.ndarray:
    """Unweighted mean of the per-tree leaf predictions, shape (n, 2)."""
    features = np.asarray(features, dtype=np.float64)
    squeeze = features.ndim == 1
    if squeeze:
        features = features[None, :]
    if features.shape[1] != forest.n_features:
        raise SchemaError(
            f"forest was fit on {forest.n_features} features, got {features.shape[1]}"
        )
    acc = np.zeros((len(features), 2))
    for tree in forest.trees:
        acc += _predict_tree(tree, features)
    acc /= len(forest.trees)
    return acc[0] if squeeze else acc


def default_param_grid(seed: int = 0) -> list:
    """The searched candidates: {50,100,200} trees x depth {8,16,unlimited}."""
    return [
        ForestParams(n_trees=t, max_depth=d, seed=seed)
        for t in (50, 100, 200)
        for d in (8, 16, None)
    ]


def cross_validate(features: np.ndarray, labels: np.ndarray, grid: list) -> CVReport:
    """Contiguous-block 10-fold search; the frame order is left intact so
    folds stay temporally coherent."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = len(features)
    if n < 10:
        raise CrossValidationError(f"need at least 10 samples for 10 folds, got {n}")
    if not grid:
        raise ValueError("empty parameter grid")
    bounds = np.linspace(0, n, 11).astype(int)
    fold_errors = np.zeros((len(grid), 10))
    for gi, params in enumerate(grid):
        for fi in range(10):
            lo, hi = bounds[fi], bounds[fi + 1]
            mask = np.ones(n, dtype=bool)
            mask[lo:hi] = False
            model = fit_forest(features[mask], labels[mask], params)
            pred = predict_forest(model, features[~mask])
            errs = np.hypot(*(pred - labels[~mask]).T)
            fold_errors[gi, fi] = errs.mean()
    mean_errors = fold_errors.mean(axis=1)
    return CVReport(
        grid=list(grid),
        fold_errors=fold_errors,
        mean_errors=mean_errors,
        best_index=int(np.argmin(mean_errors)),
    )


def _node_to_obj(node: TreeNode):
    if node.is_leaf:
        return {"v": [float(node.value[0]), float(node.value[1])], "n": node.count}
    return {
        "f": node.feature,
        "t": node.threshold,
        "n": node.count,
        "l": _node_to_obj(node.left),
        "r": _node_to_obj(node.right),
    }


def _node_from_obj(obj) -> TreeNode:
    if "v" in obj:
        return TreeNode(value=np.asarray(obj["v"], dtype=np.float64), count=int(obj["n"]))
    return TreeNode(
        feature=int(obj["f"]),
        threshold=float(obj["t"]),
        count=int(obj["n"]),
        left=_node_from_obj(obj["l"]),
        right=_node_from_obj(obj["r"]),
    )


def save_forest(forest: Forest, path) -> None:
    p = forest.params
    obj = {
        "version": MODEL_VERSION,
        "n_features": forest.n_features,
        "params": {
            "n_trees": p.n_trees,
            "max_depth": p.max_depth,
            "min_leaf": p.min_leaf,
            "features_per_split": p.features_per_split,
            "bootstrap": p.bootstrap,
            "seed": p.seed,
        },
        "trees": [_node_to_obj(t) for t in forest.trees],
    }
    atomic_write_text(path, json.dumps(obj, separators=(",", ":")) + "\n")


def load_forest(path) -> Forest:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {obj.get('version')!r}")
    params = ForestParams(**obj["params"])
    return Forest(
        params=params,
        n_features=int(obj["n_features"]),
        trees=[_node_from_obj(t) for t in obj["trees"]],
    )
