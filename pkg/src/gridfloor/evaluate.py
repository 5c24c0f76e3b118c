"""Euclidean error metrics and their persisted report form."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError
from .ioutil import atomic_write_text, fmt

HISTOGRAM_BINS = 50


@dataclass
class ErrorReport:
    errors: np.ndarray  # per-frame euclidean distances
    mean: float
    median: float
    variance: float
    hist_edges: np.ndarray  # (HISTOGRAM_BINS + 1,)
    hist_counts: np.ndarray  # (HISTOGRAM_BINS,)


def euclid_error(y, y_hat) -> float:
    """Euclidean distance between a truth and a prediction vector."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise AlignmentError(f"shape mismatch {y.shape} vs {y_hat.shape}")
    return float(np.sqrt(((y - y_hat) ** 2).sum()))


def euclid_errors(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-row euclidean distances for aligned (n, d) arrays."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise AlignmentError(f"shape mismatch {truth.shape} vs {pred.shape}")
    return np.sqrt(((truth - pred) ** 2).sum(axis=1))


def summarize(errors) -> ErrorReport:
    """Mean, median, population variance and a 50-bin histogram over [0, max]."""
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("cannot summarize an empty error list")
    top = float(errors.max())
    counts, edges = np.histogram(errors, bins=HISTOGRAM_BINS, range=(0.0, top or 1.0))
    return ErrorReport(
        errors=errors,
        mean=float(errors.mean()),
        median=float(np.median(errors)),
        variance=float(errors.var()),
        hist_edges=edges,
        hist_counts=counts,
    )


def write_errors_csv(path, times, errors) -> None:
    lines = ["t,d_eucl"]
    for t, e in zip(times, errors):
        lines.append(f"{fmt(t)},{fmt(e)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_metrics_json(path, report: ErrorReport) -> None:
    obj = {
        "count": int(report.errors.size),
        "mean": report.mean,
        "median": report.median,
        "variance": report.variance,
        "hist_edges": [float(v) for v in report.hist_edges],
        "hist_counts": [int(v) for v in report.hist_counts],
    }
    atomic_write_text(path, json.dumps(obj, separators=(",", ":")) + "\n")


def read_metrics_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
