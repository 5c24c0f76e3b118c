"""Deterministic SVG emission: trajectory overlays and per-frame heatmaps.

SVGs are assembled as plain strings so re-rendering identical inputs yields
identical bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import AlignmentError
from .grid import GridSpec
from .ioutil import atomic_write_text, fmt

MODEL_COLORS = {
    "truth": "#000000",
    "rf": "#1f77b4",
    "cnn": "#ff7f0e",
    "rcnn": "#2ca02c",
}
_FALLBACK_COLORS = ("#d62728", "#9467bd", "#8c564b", "#e377c2")

PX_PER_M = 24.0
PAD = 30.0


def _color_for(name: str, index: int) -> str:
    return MODEL_COLORS.get(name, _FALLBACK_COLORS[index % len(_FALLBACK_COLORS)])


def green_white(u: float) -> str:
    """Green-to-white ramp; higher values map whiter."""
    u = min(max(float(u), 0.0), 1.0)
    r = int(round(255 * u))
    g = int(round(128 + 127 * u))
    b = int(round(255 * u))
    return f"#{r:02x}{g:02x}{b:02x}"


def _fxy(grid: GridSpec, x: float, y: float):
    # y axis flipped so the origin sits bottom-left in the drawing.
    return PAD + x * PX_PER_M, PAD + (grid.hall_width - y) * PX_PER_M


def _polyline(grid: GridSpec, xs, ys, color: str, width: float) -> str:
    pts = " ".join(
        f"{px:.2f},{py:.2f}" for px, py in (_fxy(grid, x, y) for x, y in zip(xs, ys))
    )
    return (
        f'<polyline points="{pts}" fill="none" stroke="{color}" '
        f'stroke-width="{width}"/>'
    )


def render_trajectory_svg(path, grid: GridSpec, truth_xy, model_tracks: dict) -> None:
    """Overlay of the ground-truth track and each model's predicted track.

    truth_xy: (n, 2); model_tracks: name -> (m, 2) arrays (lengths may differ,
    each is drawn as its own polyline).
    """
    w = 2 * PAD + grid.hall_length * PX_PER_M
    h = 2 * PAD + grid.hall_width * PX_PER_M + 20.0 * (1 + len(model_tracks))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">',
        f'<rect x="{PAD}" y="{PAD}" width="{grid.hall_length * PX_PER_M:.2f}" '
        f'height="{grid.hall_width * PX_PER_M:.2f}" fill="#fafafa" stroke="#666"/>',
    ]
    truth_xy = np.asarray(truth_xy, dtype=np.float64)
    parts.append(_polyline(grid, truth_xy[:, 0], truth_xy[:, 1], MODEL_COLORS["truth"], 1.8))
    legend_y = PAD + grid.hall_width * PX_PER_M + 20.0
    parts.append(
        f'<text x="{PAD}" y="{legend_y:.1f}" font-size="12" '
        f'fill="{MODEL_COLORS["truth"]}">truth</text>'
    )
    for i, (name, track) in enumerate(model_tracks.items()):
        track = np.asarray(track, dtype=np.float64)
        color = _color_for(name, i)
        parts.append(_polyline(grid, track[:, 0], track[:, 1], color, 1.2))
        legend_y += 16.0
        parts.append(
            f'<text x="{PAD}" y="{legend_y:.1f}" font-size="12" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def render_heatmap_svg(path, grid: GridSpec, frame_values, robot_xy, times) -> None:
    """Small-multiple panels, one per frame: one colored cell per node plus
    the robot position. frame_values: (k, n_nodes); shared color scale."""
    frame_values = np.asarray(frame_values, dtype=np.float64)
    robot_xy = np.asarray(robot_xy, dtype=np.float64)
    if len(frame_values) != len(robot_xy) or len(frame_values) != len(times):
        raise AlignmentError("frames, robot positions and times must align")
    if frame_values.ndim != 2 or frame_values.shape[1] != grid.n_nodes:
        raise AlignmentError(
            f"expected {grid.n_nodes} values per frame, got {frame_values.shape}"
        )
    k = len(frame_values)
    lo = float(frame_values.min())
    hi = float(frame_values.max())
    span = (hi - lo) or 1.0

    cell_w = 10.0
    panel_w = grid.n_strips * cell_w + 10.0
    panel_h = grid.nodes_per_strip * cell_w + 26.0
    per_row = max(1, int(np.ceil(np.sqrt(k))))
    rows = int(np.ceil(k / per_row))
    w = per_row * panel_w + 10.0
    h = rows * panel_h + 10.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.0f} {h:.0f}">'
    ]
    for fi in range(k):
        ox = 10.0 + (fi % per_row) * panel_w
        oy = 10.0 + (fi // per_row) * panel_h
        parts.append(
            f'<text x="{ox:.1f}" y="{oy + 10:.1f}" font-size="9">t={times[fi]:.2f}s</text>'
        )
        oy += 16.0
        for ni in range(grid.n_nodes):
            s = ni // grid.nodes_per_strip
            n = ni % grid.nodes_per_strip
            u = (frame_values[fi, ni] - lo) / span
            x = ox + s * cell_w
            y = oy + (grid.nodes_per_strip - 1 - n) * cell_w
            parts.append(
                f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell_w:.1f}" '
                f'height="{cell_w:.1f}" fill="{green_white(u)}"/>'
            )
        rx, ry = robot_xy[fi]
        px = ox + rx / grid.strip_spacing * cell_w
        py = oy + (grid.nodes_per_strip - ry / grid.node_spacing) * cell_w
        parts.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="#cc0000"/>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def render_comparison_csv(path, rows) -> None:
    """rows: (model, mean, median, variance) per trained model."""
    lines = ["model,mean,median,variance"]
    for model, mean, median, variance in rows:
        lines.append(f"{model},{fmt(mean)},{fmt(median)},{fmt(variance)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
