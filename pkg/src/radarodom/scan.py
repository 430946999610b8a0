"""Rotating radar sweeps: polar storage, Cartesian conversion and filtering.

A sweep is an ``m x n`` grid of power returns (``m`` azimuths, ``n`` range
bins of width ``range_resolution``).  Filters turn a sweep into a
:class:`PointCloud` of Cartesian returns that remember which azimuth they
came from and when, within the sweep, they were observed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose2, se2_exp


class ScanFormatError(ValueError):
    """Base class for problems reading a portable scan file."""


class HeaderError(ScanFormatError):
    pass


class DimensionMismatchError(ScanFormatError):
    pass


class TimestampOrderError(ScanFormatError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RadarConfig:
    num_azimuths: int
    num_bins: int
    range_resolution: float
    min_range: float = 0.0
    max_range: float | None = None
    sweep_period: float = 0.25

    def __post_init__(self):
        if self.max_range is None:
            object.__setattr__(self, "max_range", self.num_bins * self.range_resolution)
        if self.num_azimuths < 4 or self.num_bins < 1:
            raise ConfigError(f"need m >= 4 and n >= 1, got m={self.num_azimuths} n={self.num_bins}")
        if not self.range_resolution > 0:
            raise ConfigError("range_resolution must be positive")
        # small slack: max_range is often written as the rounded product n*gamma
        if not (0 <= self.min_range < self.max_range <= self.num_bins * self.range_resolution * (1 + 1e-9)):
            raise ConfigError(
                f"need 0 <= min_range < max_range <= n*gamma, got "
                f"[{self.min_range}, {self.max_range}] with n*gamma={self.num_bins * self.range_resolution}")
        if self.sweep_period < 0:
            raise ConfigError("sweep_period must be non-negative")


@dataclass(frozen=True, eq=False)
class PolarScan:
    config: RadarConfig
    power: np.ndarray
    azimuth_timestamps: np.ndarray
    scan_timestamp: float = 0.0

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        stamps = np.asarray(self.azimuth_timestamps, dtype=float)
        m, n = self.config.num_azimuths, self.config.num_bins
        if power.shape != (m, n):
            raise DimensionMismatchError(f"power grid is {power.shape}, expected {(m, n)}")
        if np.any(power < 0) or not np.all(np.isfinite(power)):
            raise ScanFormatError("power values must be finite and non-negative")
        if stamps.shape != (m,):
            raise DimensionMismatchError(f"expected {m} azimuth timestamps, got {stamps.shape[0]}")
        if np.any(np.diff(stamps) < 0):
            raise TimestampOrderError("azimuth timestamps must be non-decreasing")
        power.setflags(write=False)
        stamps.setflags(write=False)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "azimuth_timestamps", stamps)
        object.__setattr__(self, "scan_timestamp", float(self.scan_timestamp))

    def sweep_fractions(self) -> np.ndarray:
        """Normalized observation time of each azimuth, in [0, 1].

        Azimuth order gives ``a/m``.  Strictly increasing timestamps together
        with a known sweep period take precedence.
        """
        m = self.config.num_azimuths
        stamps = self.azimuth_timestamps
        period = self.config.sweep_period
        if period > 0 and np.all(np.diff(stamps) > 0):
            return np.clip((stamps - stamps[0]) / period, 0.0, 1.0)
        return np.arange(m) / m


@dataclass(frozen=True)
class Point2:
    x: float
    y: float
    intensity: float
    azimuth_index: int
    sweep_fraction: float


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Filtered Cartesian returns stored column-wise."""

    xy: np.ndarray
    intensity: np.ndarray
    azimuth_index: np.ndarray
    sweep_fraction: np.ndarray
    source_timestamp: float = 0.0

    def __len__(self) -> int:
        return self.xy.shape[0]

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> PointCloud:
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=int), np.zeros(0), timestamp)

    @classmethod
    def from_points(cls, points, timestamp: float = 0.0) -> PointCloud:
        points = list(points)
        if not points:
            return cls.empty(timestamp)
        return cls(
            np.array([[p.x, p.y] for p in points], dtype=float),
            np.array([p.intensity for p in points], dtype=float),
            np.array([p.azimuth_index for p in points], dtype=int),
            np.array([p.sweep_fraction for p in points], dtype=float),
            timestamp,
        )

    @property
    def points(self) -> list[Point2]:
        return [Point2(float(x), float(y), float(i), int(a), float(t))
                for (x, y), i, a, t in zip(self.xy, self.intensity, self.azimuth_index, self.sweep_fraction)]

    def with_xy(self, xy: np.ndarray) -> PointCloud:
        return PointCloud(xy, self.intensity, self.azimuth_index, self.sweep_fraction, self.source_timestamp)


@dataclass(frozen=True)
class FilterConfig:
    k: int = 12
    z_min: float = 55.0

    def __post_init__(self):
        if self.k < 1 or self.z_min < 0:
            raise ConfigError("k must be >= 1 and z_min >= 0")


@dataclass(frozen=True)
class Velocity2:
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.omega)):
            raise ValueError("velocity components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega])

    def __neg__(self) -> Velocity2:
        return Velocity2(-self.vx, -self.vy, -self.omega)


# ---------------------------------------------------------------------------
# file format

def parse_scan(content: str | bytes) -> PolarScan:
    """Parse a portable polar scan file.

    Header: ``m n gamma min_range max_range sweep_period scan_timestamp``.
    A short five-field header ``m n gamma min_range max_range`` is also
    accepted; the sweep period and scan time are then taken from the
    azimuth timestamps.  Each of the ``m`` following lines holds the azimuth
    timestamp followed by ``n`` powers.
    """
    if isinstance(content, bytes):
        content = content.decode("ascii")
    lines = [ln for ln in content.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise HeaderError("empty scan file")
    head = lines[0].split()
    if len(head) not in (5, 7):
        raise HeaderError(f"header must have 5 or 7 fields, got {len(head)}")
    try:
        m, n = int(head[0]), int(head[1])
        gamma, rmin, rmax = (float(v) for v in head[2:5])
        extra = [float(v) for v in head[5:]]
    except ValueError as exc:
        raise HeaderError(f"malformed header: {lines[0]!r}") from exc
    if m < 1 or n < 1:
        raise HeaderError("header dimensions must be positive")

    rows = lines[1:]
    if len(rows) != m:
        raise DimensionMismatchError(f"header declares {m} azimuths, file has {len(rows)} rows")
    stamps = np.empty(m)
    power = np.empty((m, n))
    for a, row in enumerate(rows):
        fields = row.split()
        if len(fields) != n + 1:
            raise DimensionMismatchError(
                f"azimuth row {a} has {len(fields) - 1} power values, expected {n}")
        try:
            vals = np.array(fields, dtype=float)
        except ValueError as exc:
            raise ScanFormatError(f"non-numeric value in azimuth row {a}") from exc
        stamps[a] = vals[0]
        power[a] = vals[1:]
    if np.any(np.diff(stamps) < 0):
        raise TimestampOrderError("azimuth timestamps are not monotonically non-decreasing")

    if extra:
        period, stamp = extra
    else:
        span = stamps[-1] - stamps[0]
        period = span * m / (m - 1) if m > 1 and span > 0 else 0.0
        stamp = stamps[0] + 0.5 * period
    try:
        config = RadarConfig(m, n, gamma, rmin, rmax, period)
    except ConfigError as exc:
        raise HeaderError(str(exc)) from exc
    return PolarScan(config, power, stamps, stamp)


def format_scan(scan: PolarScan) -> str:
    c = scan.config
    out = [f"{c.num_azimuths} {c.num_bins} {c.range_resolution!r} {c.min_range!r} "
           f"{c.max_range!r} {c.sweep_period!r} {scan.scan_timestamp!r}"]
    for t, row in zip(scan.azimuth_timestamps, scan.power):
        out.append(repr(float(t)) + " " + " ".join("%.6g" % v for v in row))
    return "\n".join(out) + "\n"


def read_scan(path: str | os.PathLike) -> PolarScan:
    return parse_scan(Path(path).read_text())


def write_scan(scan: PolarScan, path: str | os.PathLike) -> None:
    Path(path).write_text(format_scan(scan))


def list_scan_files(directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    return sorted((p for p in directory.iterdir() if p.is_file() and not p.name.startswith(".")),
                  key=lambda p: p.name)


def read_sequence(directory: str | os.PathLike) -> list[PolarScan]:
    return [read_scan(p) for p in list_scan_files(directory)]


# ---------------------------------------------------------------------------
# conversion and filtering

def polar_to_cartesian(a: int, d: int, config: RadarConfig) -> Point2:
    m, n = config.num_azimuths, config.num_bins
    if not (0 <= a < m and 0 <= d < n):
        raise IndexError(f"cell ({a}, {d}) outside {m}x{n} grid")
    theta = 2.0 * math.pi * a / m
    rng = d * config.range_resolution
    return Point2(rng * math.cos(theta), rng * math.sin(theta), 0.0, a, a / m)


def _cells_to_cloud(scan: PolarScan, az: np.ndarray, bins: np.ndarray) -> PointCloud:
    cfg = scan.config
    theta = 2.0 * np.pi * az / cfg.num_azimuths
    rng = bins * cfg.range_resolution
    xy = np.column_stack([rng * np.cos(theta), rng * np.sin(theta)])
    frac = scan.sweep_fractions()[az]
    return PointCloud(xy, scan.power[az, bins].copy(), az.astype(int), frac, scan.scan_timestamp)


def _gate_mask(cfg: RadarConfig, min_range: float | None, max_range: float | None) -> np.ndarray:
    lo = cfg.min_range if min_range is None else max(cfg.min_range, min_range)
    hi = cfg.max_range if max_range is None else min(cfg.max_range, max_range)
    rng = np.arange(cfg.num_bins) * cfg.range_resolution
    return (rng >= lo) & (rng <= hi)


def k_strongest_filter(scan: PolarScan, filt: FilterConfig = FilterConfig(),
                       min_range: float | None = None, max_range: float | None = None) -> PointCloud:
    """Keep, per azimuth, the ``k`` strongest in-gate returns with power above ``z_min``.

    Equal powers are ranked by range bin, nearer first.  ``min_range`` and
    ``max_range`` tighten the sensor's own range gate.
    """
    gate = np.flatnonzero(_gate_mask(scan.config, min_range, max_range))
    if gate.size == 0:
        return PointCloud.empty(scan.scan_timestamp)
    lo, hi = gate[0], gate[-1] + 1
    flat = np.flatnonzero(scan.power[:, lo:hi] > filt.z_min)
    if flat.size == 0:
        return PointCloud.empty(scan.scan_timestamp)
    az, bins = np.divmod(flat, hi - lo)
    bins += lo
    pw = scan.power[az, bins]
    # candidates arrive ordered by (azimuth, bin); a stable sort keeps nearer bins first on ties
    order = np.lexsort((-pw, az))
    az, bins = az[order], bins[order]
    # rank of each candidate within its azimuth
    starts = np.flatnonzero(np.r_[True, az[1:] != az[:-1]])
    counts = np.diff(np.r_[starts, az.size])
    rank = np.arange(az.size) - np.repeat(starts, counts)
    keep = rank < filt.k
    return _cells_to_cloud(scan, az[keep], bins[keep])


def cfar_mask(power: np.ndarray, window: int = 40, guard: int = 2, scale: float = 1.2) -> np.ndarray:
    """1D cell-averaging CFAR along each row of ``power``.

    Training cells for bin ``d`` are the bins at offsets ``guard < |o| <= window``;
    at the edges only the cells that exist are averaged.
    """
    if window <= 0 or guard < 0 or scale <= 0:
        raise ConfigError("need window > 0, guard >= 0, scale > 0")
    power = np.atleast_2d(np.asarray(power, dtype=float))
    n = power.shape[1]
    if window <= guard:
        raise ConfigError("window must exceed guard, otherwise there are no training cells")
    csum = np.concatenate([np.zeros((power.shape[0], 1)), np.cumsum(power, axis=1)], axis=1)
    d = np.arange(n)

    def span(lo, hi):
        lo = np.clip(lo, 0, n)
        hi = np.clip(hi, 0, n)
        hi = np.maximum(hi, lo)
        return csum[:, hi] - csum[:, lo], hi - lo

    left_sum, left_cnt = span(d - window, d - guard)
    right_sum, right_cnt = span(d + guard + 1, d + window + 1)
    cnt = left_cnt + right_cnt
    if np.any(cnt == 0):
        raise ConfigError(f"some bins have no training cells (n={n}, window={window}, guard={guard})")
    mean = (left_sum + right_sum) / cnt
    return power > scale * mean


def cfar_filter(scan: PolarScan, window: int = 40, guard: int = 2, scale: float = 1.2,
                min_range: float | None = None, max_range: float | None = None) -> PointCloud:
    det = cfar_mask(scan.power, window, guard, scale)
    det &= _gate_mask(scan.config, min_range, max_range)[None, :]
    az, bins = np.nonzero(det)
    return _cells_to_cloud(scan, az, bins)


def twist_poses(velocity: Velocity2, dt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized constant-twist displacement: returns (tx, ty, dtheta) for each duration."""
    dt = np.asarray(dt, dtype=float)
    w = velocity.omega * dt
    small = np.abs(w) < 1e-6
    ws = np.where(small, 1.0, w)
    a = np.where(small, 1.0 - w * w / 6.0, np.sin(ws) / ws)
    b = np.where(small, w / 2.0 - w ** 3 / 24.0, (1.0 - np.cos(ws)) / ws)
    vx, vy = velocity.vx * dt, velocity.vy * dt
    return a * vx - b * vy, b * vx + a * vy, w


def motion_compensate(cloud: PointCloud, velocity: Velocity2, sweep_period: float) -> PointCloud:
    """Re-express every point in the sensor frame at mid-sweep.

    A point seen at sweep fraction ``tau`` is moved by the constant-twist pose
    accumulated over ``(tau - 0.5) * sweep_period``.
    """
    if len(cloud) == 0:
        return cloud
    dt = (cloud.sweep_fraction - 0.5) * sweep_period
    tx, ty, th = twist_poses(velocity, dt)
    c, s = np.cos(th), np.sin(th)
    x, y = cloud.xy[:, 0], cloud.xy[:, 1]
    xy = np.column_stack([c * x - s * y + tx, s * x + c * y + ty])
    return cloud.with_xy(xy)


def velocity_pose(velocity: Velocity2, dt: float) -> Pose2:
    return se2_exp(velocity.vx * dt, velocity.vy * dt, velocity.omega * dt)
