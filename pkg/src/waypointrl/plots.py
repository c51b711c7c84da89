"""Self-contained SVG figure writers (heatmaps and curves).

SVG is the only figure format; files are plain XML built from rects and
polylines so tests can make structural assertions without a raster pipeline.
"""

from __future__ import annotations

import numpy as np

from . import planner
from .env import MazeSpec

CELL_PX = 32


def _color(value: float) -> str:
    """Two-segment colormap: dark blue -> orange -> light yellow."""
    v = float(np.clip(value, 0.0, 1.0))
    stops = [(0.0, (20, 24, 82)), (0.5, (214, 108, 35)), (1.0, (252, 244, 163))]
    for (t0, c0), (t1, c1) in zip(stops[:-1], stops[1:]):
        if v <= t1:
            f = (v - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#fcf4a3"


def waypoint_heatmap_values(maze: MazeSpec, s0, sg, state_classifier,
                            temperature: float = 1.0):
    """Softmax waypoint probabilities over free cell centers.

    Returns (cells, centers, probs); the candidate set is one point per free
    cell, so probabilities are per-cell masses.
    """
    cells = sorted(maze.free_cells)
    centers = (np.array(cells, dtype=np.float64) + 0.5) * maze.cell_size
    scores = planner.score_candidates(np.asarray(s0, dtype=np.float64),
                                      np.asarray(sg, dtype=np.float64),
                                      centers, state_classifier)
    probs = planner.softmax(scores, temperature)
    return cells, centers, probs


def write_heatmap_svg(path, maze: MazeSpec, cells, probs, s0=None, sg=None):
    """Grid heatmap: one rect per cell (walls dark gray), optional start/goal
    markers. Returns the number of cell rects written."""
    w, h = maze.width * CELL_PX, maze.height * CELL_PX
    value = {cell: p for cell, p in zip(cells, probs)}
    vmax = max(probs) if len(probs) else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    ]
    n_rects = 0
    for iy in range(maze.height):
        for ix in range(maze.width):
            if maze.walls[iy, ix]:
                fill = "#303030"
            else:
                fill = _color(value.get((ix, iy), 0.0) / vmax if vmax > 0 else 0.0)
            parts.append(
                f'<rect class="cell" x="{ix * CELL_PX}" y="{iy * CELL_PX}" '
                f'width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>'
            )
            n_rects += 1
    for marker, color in ((s0, "#00c853"), (sg, "#d50000")):
        if marker is not None:
            cx = float(marker[0]) / maze.cell_size * CELL_PX
            cy = float(marker[1]) / maze.cell_size * CELL_PX
            parts.append(
                f'<circle class="marker" cx="{cx:.1f}" cy="{cy:.1f}" '
                f'r="{CELL_PX / 3:.1f}" fill="{color}" stroke="white" stroke-width="2"/>'
            )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")
    return n_rects


def write_heatmap_csv(path, cells, probs):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("ix,iy,prob\n")
        for (ix, iy), p in zip(cells, probs):
            handle.write(f"{ix},{iy},{p:.12g}\n")


def write_curves_svg(path, labeled_curves, width=640, height=400,
                     x_label="environment steps", y_label="median min distance"):
    """Line plot of (steps, values) curves; one polyline per labeled curve."""
    margin = 56
    palette = ["#1565c0", "#e65100", "#2e7d32", "#6a1b9a", "#c62828", "#00838f"]
    xs_all = np.concatenate([np.asarray(c[1], dtype=np.float64) for c in labeled_curves])
    ys_all = np.concatenate([np.asarray(c[2], dtype=np.float64) for c in labeled_curves])
    x_max = max(float(xs_all.max()), 1.0)
    y_max = max(float(ys_all.max()), 1e-9)

    def sx(x):
        return margin + (width - 2 * margin) * x / x_max

    def sy(y):
        return height - margin - (height - 2 * margin) * y / y_max

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">{x_label}</text>',
        f'<text x="16" y="{height / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.0f})">{y_label}</text>',
    ]
    for k, (label, xs, ys) in enumerate(labeled_curves):
        color = palette[k % len(palette)]
        points = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline class="curve" fill="none" stroke="{color}" '
            f'stroke-width="2" points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 16 * k + 10}" '
            f'font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")
