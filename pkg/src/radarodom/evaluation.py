"""Trajectory files and the KITTI-style relative drift metric (planar)."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose2

DEFAULT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)


class TrajectoryFormatError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


class InsufficientLengthError(ValueError):
    pass


class Trajectory:
    """Timestamped SE(2) poses, stored as a (N,) time array and a (N, 3) pose array."""

    def __init__(self, timestamps=(), poses=(), check: bool = True):
        self.timestamps = np.asarray(list(timestamps), dtype=float).reshape(-1)
        rows = [p.as_array() if isinstance(p, Pose2) else np.asarray(p, dtype=float) for p in poses]
        self.poses = np.array(rows, dtype=float).reshape(-1, 3)
        if self.timestamps.shape[0] != self.poses.shape[0]:
            raise ValueError("timestamps and poses differ in length")
        if check and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def __getitem__(self, i) -> tuple[float, Pose2]:
        return float(self.timestamps[i]), Pose2.from_array(self.poses[i])

    @property
    def samples(self) -> list[tuple[float, Pose2]]:
        return [self[i] for i in range(len(self))]

    def pose_list(self) -> list[Pose2]:
        return [Pose2.from_array(p) for p in self.poses]

    def transformed(self, g: Pose2) -> Trajectory:
        """Left-multiply every pose by ``g``."""
        return Trajectory(self.timestamps, [g.compose(p) for p in self.pose_list()], check=False)

    def arc_length(self) -> np.ndarray:
        step = np.hypot(np.diff(self.poses[:, 0]), np.diff(self.poses[:, 1]))
        return np.concatenate([[0.0], np.cumsum(step)])


def parse_trajectory(text: str) -> Trajectory:
    stamps, poses = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise TrajectoryFormatError(f"line {lineno}: expected 4 fields (timestamp x y theta), got {len(fields)}")
        try:
            t, x, y, th = (float(v) for v in fields)
        except ValueError as exc:
            raise TrajectoryFormatError(f"line {lineno}: non-numeric field") from exc
        stamps.append(t)
        poses.append((x, y, th))
    try:
        return Trajectory(stamps, poses)
    except ValueError as exc:
        raise TrajectoryFormatError(str(exc)) from exc


def format_trajectory(traj: Trajectory) -> str:
    return "".join(f"{t!r} {x!r} {y!r} {th!r}\n"
                   for t, (x, y, th) in zip(traj.timestamps.tolist(), traj.poses.tolist()))


def read_trajectory(path: str | os.PathLike) -> Trajectory:
    return parse_trajectory(Path(path).read_text())


def write_trajectory(traj: Trajectory, path: str | os.PathLike) -> None:
    Path(path).write_text(format_trajectory(traj))


@dataclass
class EvalResult:
    translation_error_percent: float
    rotation_error_deg_per_100m: float
    pair_count: int
    # length -> (translation %, rotation deg/100m, number of sub-paths)
    per_length: dict[float, tuple[float, float, int]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "translation_error_percent": self.translation_error_percent,
            "rotation_error_deg_per_100m": self.rotation_error_deg_per_100m,
            "pair_count": self.pair_count,
        }
        for length, (t, r, n) in sorted(self.per_length.items()):
            key = f"length_{length:g}"
            out[f"{key}.translation_error_percent"] = t
            out[f"{key}.rotation_error_deg_per_100m"] = r
            out[f"{key}.pair_count"] = n
        return out


def _relative(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise ``p^-1 * q`` for (N, 3) pose arrays."""
    c, s = np.cos(p[:, 2]), np.sin(p[:, 2])
    dx, dy = q[:, 0] - p[:, 0], q[:, 1] - p[:, 1]
    dth = np.angle(np.exp(1j * (q[:, 2] - p[:, 2])))
    return np.column_stack([c * dx + s * dy, -s * dx + c * dy, dth])


def kitti_relative_errors(ground_truth: Trajectory, estimate: Trajectory,
                          lengths=DEFAULT_LENGTHS, stride: int = 1) -> EvalResult:
    """Mean relative translation (%) and rotation (deg/100 m) drift over sub-paths.

    For every start sample and every length ``L`` the sub-path ends at the
    first ground-truth sample whose arc length from the start is at least
    ``L``.  Sub-paths running past the end of the trajectory are skipped.
    """
    if len(ground_truth) != len(estimate):
        raise AlignmentError(f"sample counts differ: {len(ground_truth)} vs {len(estimate)}")
    if not np.allclose(ground_truth.timestamps, estimate.timestamps, rtol=0, atol=1e-6):
        raise AlignmentError("timestamps of ground truth and estimate do not match")
    lengths = [float(v) for v in lengths]
    dist = ground_truth.arc_length()
    if len(dist) == 0 or dist[-1] < min(lengths) - 1e-9:
        total = dist[-1] if len(dist) else 0.0
        raise InsufficientLengthError(f"trajectory length {total:.3f} m is shorter than {min(lengths)} m")

    starts = np.arange(0, len(dist), max(1, int(stride)))
    t_all, r_all = [], []
    per_length = {}
    for length in lengths:
        last = np.searchsorted(dist, dist[starts] + length - 1e-9, side="left")
        valid = last < len(dist)
        first, last = starts[valid], last[valid]
        if first.size == 0:
            continue
        d_gt = _relative(ground_truth.poses[first], ground_truth.poses[last])
        d_est = _relative(estimate.poses[first], estimate.poses[last])
        err = _relative(d_est, d_gt)
        t_err = np.hypot(err[:, 0], err[:, 1]) / length
        r_err = np.abs(err[:, 2]) / length
        t_all.append(t_err)
        r_all.append(r_err)
        per_length[length] = (float(t_err.mean() * 100.0), float(np.degrees(r_err.mean()) * 100.0), int(first.size))

    if not t_all:
        raise InsufficientLengthError("no sub-path reaches any of the requested lengths")
    t_all = np.concatenate(t_all)
    r_all = np.concatenate(r_all)
    return EvalResult(float(t_all.mean() * 100.0), float(np.degrees(r_all.mean()) * 100.0), int(t_all.size), per_length)


def format_report(result: EvalResult) -> str:
    lines = [f"translation_error_percent = {result.translation_error_percent:.6f}",
             f"rotation_error_deg_per_100m = {result.rotation_error_deg_per_100m:.6f}",
             f"pair_count = {result.pair_count}"]
    for length, (t, r, n) in sorted(result.per_length.items()):
        lines.append(f"length_{length:g}.translation_error_percent = {t:.6f}")
        lines.append(f"length_{length:g}.rotation_error_deg_per_100m = {r:.6f}")
        lines.append(f"length_{length:g}.pair_count = {n}")
    return "\n".join(lines) + "\n"


def write_report(result: EvalResult, report_path: str | os.PathLike, json_path: str | os.PathLike | None = None,
                 csv_path: str | os.PathLike | None = None) -> None:
    Path(report_path).write_text(format_report(result))
    if json_path is not None:
        Path(json_path).write_text(json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        rows = ["length_m,translation_error_percent,rotation_error_deg_per_100m,pair_count"]
        rows += [f"{length:g},{t:.6f},{r:.6f},{n}" for length, (t, r, n) in sorted(result.per_length.items())]
        Path(csv_path).write_text("\n".join(rows) + "\n")


def emit_plot(traj: Trajectory, ground_truth: Trajectory | None = None, path: str | os.PathLike = "trajectory.svg"):
    """Render the XY path(s) to a vector-graphic file; returns the path written."""
    from .plotting import save_figure, trajectory_figure

    if len(traj) == 0:
        raise ValueError("cannot plot an empty trajectory")
    fig = trajectory_figure(traj, ground_truth)
    return save_figure(fig, path)
