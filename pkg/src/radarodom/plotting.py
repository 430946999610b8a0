"""Matplotlib figures for trajectory overlays and drift reports.

Figures are built on :class:`matplotlib.figure.Figure` directly so no
interactive backend is ever touched.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.hashsalt": "radarodom",  # stable element ids -> reproducible SVG
    "svg.fonttype": "none",
}

ESTIMATE_COLOR = "#c0392b"
GT_COLOR = "#2c3e50"


def figure_size(width: float = 5.0, ratio: float | None = None) -> tuple[float, float]:
    if ratio is None:
        ratio = (math.sqrt(5.0) - 1.0) / 2.0
    return width, width * ratio


def new_figure(width: float = 5.0, ratio: float | None = None) -> tuple[Figure, object]:
    fig = Figure(figsize=figure_size(width, ratio))
    ax = fig.add_subplot(1, 1, 1)
    return fig, ax


def save_figure(fig: Figure, path) -> Path:
    import matplotlib

    path = Path(path)
    fmt = path.suffix.lstrip(".") or "svg"
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format=fmt, bbox_inches="tight", metadata={"Date": None} if fmt == "svg" else None)
    return path


def _path(ax, poses: np.ndarray, color: str, label: str, style: str = "-"):
    ax.plot(poses[:, 0], poses[:, 1], style, color=color, lw=1.2, label=label, gid=label)
    ax.plot(poses[0, 0], poses[0, 1], "o", color=color, ms=5, mfc="none", gid=f"{label}-start")
    if len(poses) > 1:
        ax.plot(poses[-1, 0], poses[-1, 1], "s", color=color, ms=5, gid=f"{label}-end")


def trajectory_figure(traj, ground_truth=None, title: str | None = None) -> Figure:
    """XY overlay of an estimate and optionally its ground truth."""
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure(5.0, 0.9)
        if ground_truth is not None and len(ground_truth):
            _path(ax, ground_truth.poses, GT_COLOR, "ground truth", "--")
        _path(ax, traj.poses, ESTIMATE_COLOR, "estimate")
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True, lw=0.4, alpha=0.6)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", frameon=False)
    return fig


def drift_figure(result) -> Figure:
    """Translation and rotation drift per sub-path length."""
    import matplotlib

    lengths = sorted(result.per_length)
    t = [result.per_length[k][0] for k in lengths]
    r = [result.per_length[k][1] for k in lengths]
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure(5.0)
        ax.plot(lengths, t, "o-", color=ESTIMATE_COLOR, label="translation [%]")
        ax.set_xlabel("sub-path length [m]")
        ax.set_ylabel("translation error [%]")
        ax2 = ax.twinx()
        ax2.plot(lengths, r, "x-", color=GT_COLOR, label="rotation [deg/100 m]")
        ax2.set_ylabel("rotation error [deg/100 m]")
        ax.grid(True, lw=0.4, alpha=0.6)
    return fig


def timing_figure(statuses) -> Figure:
    """Per-frame processing time, stacked by pipeline stage."""
    import matplotlib

    stages = ["filter", "compensate", "surface", "register", "keyframes"]
    frames = np.array([s.frame for s in statuses])
    with matplotlib.rc_context(STYLE):
        fig, ax = new_figure(5.0)
        bottom = np.zeros(len(statuses))
        for stage in stages:
            vals = np.array([s.timings_ms.get(stage, 0.0) for s in statuses])
            ax.fill_between(frames, bottom, bottom + vals, step="mid", alpha=0.7, label=stage, lw=0)
            bottom += vals
        ax.set_xlabel("frame")
        ax.set_ylabel("time [ms]")
        ax.legend(loc="upper right", frameon=False, ncol=3)
        ax.grid(True, lw=0.4, alpha=0.6)
    return fig
