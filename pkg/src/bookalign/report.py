"""Delimited reports and scatter figures.

Every evaluation subcommand writes CSV next to a JSON summary; correlation
additionally renders an SVG scatter per region type with the least-squares
line. SVG metadata is stripped of timestamps so identical runs produce
identical files.
"""

from __future__ import annotations

import csv
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "bookalign"  # deterministic element ids

import matplotlib.pyplot as plt

from .metrics import least_squares_fit


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def scatter_points_csv(path, points: Sequence[tuple[str, float, float]],
                       x_name: str, y_name: str):
    write_csv(path, ["page_id", x_name, y_name],
              [(pid, x, y) for pid, x, y in points])


def render_scatter(path, points: Sequence[tuple[str, float, float]],
                   x_label: str, y_label: str, title: str = "",
                   fit: Optional[tuple[float, float]] = None):
    """Scatter plot with an optional least-squares line, saved as SVG.

    With fewer than 2 points the figure is skipped (caller still has the
    CSV). Returns the (slope, intercept) actually drawn, or None.
    """
    if len(points) < 2:
        return None
    xs = [p[1] for p in points]
    ys = [p[2] for p in points]
    if fit is None:
        try:
            fit = least_squares_fit(xs, ys)
        except ValueError:
            fit = None
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.scatter(xs, ys, s=14, alpha=0.7, edgecolors="none")
    if fit is not None:
        slope, intercept = fit
        x0, x1 = min(xs), max(xs)
        ax.plot([x0, x1], [slope * x0 + intercept, slope * x1 + intercept],
                color="crimson", linewidth=1.2)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    if title:
        ax.set_title(title)
    if 0 <= min(xs) and max(xs) <= 1:
        ax.set_xlim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return fit
