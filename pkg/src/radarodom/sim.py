"""Synthetic rotating radar over a 2D line-segment world.

Each azimuth casts a ray from the sensor pose at the moment that azimuth
is measured, so a moving sensor produces genuinely distorted sweeps.  The
first wall hit becomes a power peak of height ``power_gain * reflectivity
/ range`` spread over +-2 range bins.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import Trajectory
from .geometry import Pose2, se2_exp, wrap_angle
from .scan import PolarScan, RadarConfig

# reflectivity 1 at 10 m reads ~180 raw units
POWER_GAIN = 1800.0
PEAK_HALF_WIDTH = 2


class WorldFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WorldModel:
    a: np.ndarray
    b: np.ndarray
    reflectivity: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1, 2)
        b = np.asarray(self.b, dtype=float).reshape(-1, 2)
        refl = np.asarray(self.reflectivity, dtype=float).reshape(-1)
        if not (a.shape == b.shape and refl.shape[0] == a.shape[0]):
            raise ValueError("segment arrays disagree in length")
        if np.any(np.all(np.isclose(a, b, rtol=0, atol=1e-12), axis=1)):
            raise ValueError("degenerate segment: endpoints coincide")
        if np.any((refl < 0) | (refl > 1)):
            raise ValueError("reflectivity must lie in [0, 1]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "reflectivity", refl)

    def __len__(self) -> int:
        return self.a.shape[0]

    @classmethod
    def from_segments(cls, segments) -> WorldModel:
        segs = np.asarray(list(segments), dtype=float).reshape(-1, 5)
        return cls(segs[:, 0:2], segs[:, 2:4], segs[:, 4])

    def segments(self) -> np.ndarray:
        return np.column_stack([self.a, self.b, self.reflectivity])


def parse_world(text: str) -> WorldModel:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 5:
            raise WorldFormatError(f"line {lineno}: expected 'ax ay bx by reflectivity'")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise WorldFormatError(f"line {lineno}: non-numeric field") from exc
    try:
        return WorldModel.from_segments(rows)
    except ValueError as exc:
        raise WorldFormatError(str(exc)) from exc


def read_world(path: str | os.PathLike) -> WorldModel:
    return parse_world(Path(path).read_text())


def write_world(world: WorldModel, path: str | os.PathLike) -> None:
    Path(path).write_text("".join(" ".join(repr(float(v)) for v in row) + "\n" for row in world.segments()))


@dataclass(frozen=True)
class SimNoise:
    power_noise_std: float = 0.0
    range_jitter_std: float = 0.0
    speckle_rate: float = 0.0
    speckle_power_max: float = 150.0
    multipath_rate: float = 0.0
    multipath_gain: float = 0.6

    def __post_init__(self):
        for name in ("speckle_rate", "multipath_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.power_noise_std < 0 or self.range_jitter_std < 0 or self.speckle_power_max < 0:
            raise ValueError("noise magnitudes must be non-negative")


@dataclass(frozen=True)
class TrajectorySpec:
    """Ground-truth motion, either piecewise constant twists or timed waypoints.

    ``segments`` holds ``(speed, turn_rate, duration)`` triples driven from
    ``start``.  ``waypoints`` holds ``(t, x, y, theta)`` rows, linearly
    interpolated.  Scans are taken every ``1/scan_rate`` seconds.
    """

    segments: tuple = ()
    waypoints: tuple = ()
    scan_rate: float = 4.0
    start: Pose2 = field(default_factory=Pose2)

    def __post_init__(self):
        if bool(self.segments) == bool(self.waypoints):
            raise ValueError("give exactly one of segments or waypoints")
        if self.scan_rate <= 0:
            raise ValueError("scan_rate must be positive")
        if self.segments:
            if any(d < 0 for _, _, d in self.segments):
                raise ValueError("segment durations must be non-negative")
        else:
            t = np.array([w[0] for w in self.waypoints], dtype=float)
            if np.any(np.diff(t) <= 0):
                raise ValueError("waypoint timestamps must be strictly increasing")
        if self.duration <= 0:
            raise ValueError("trajectory has zero duration")

    @classmethod
    def parametric(cls, speed: float, turn_rate: float, duration: float, scan_rate: float = 4.0,
                   start: Pose2 = Pose2()) -> TrajectorySpec:
        return cls(segments=((speed, turn_rate, duration),), scan_rate=scan_rate, start=start)

    @property
    def t0(self) -> float:
        return 0.0 if self.segments else float(self.waypoints[0][0])

    @property
    def duration(self) -> float:
        if self.segments:
            return float(sum(d for _, _, d in self.segments))
        return float(self.waypoints[-1][0] - self.waypoints[0][0]) if len(self.waypoints) > 1 else 0.0

    @property
    def scan_count(self) -> int:
        return int(math.floor(self.duration * self.scan_rate + 1e-9))

    def poses_at(self, times) -> np.ndarray:
        """(N, 3) array of poses at absolute times (clamped/extrapolated at the ends)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if self.waypoints:
            w = np.asarray(self.waypoints, dtype=float)
            theta = np.unwrap(w[:, 3])
            out = np.column_stack([np.interp(times, w[:, 0], w[:, i]) for i in (1, 2)] + [np.interp(times, w[:, 0], theta)])
            out[:, 2] = np.angle(np.exp(1j * out[:, 2]))
            return out
        # piecewise constant twist; the final segment extends past its end
        starts, poses, t = [], [], 0.0
        pose = self.start
        for speed, rate, dur in self.segments:
            starts.append(t)
            poses.append(pose)
            pose = pose.compose(se2_exp(speed * dur, 0.0, rate * dur))
            t += dur
        idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
        out = np.empty((len(times), 3))
        for k, (tt, i) in enumerate(zip(times, idx)):
            speed, rate, _ = self.segments[i]
            dt = tt - starts[i]
            out[k] = poses[i].compose(se2_exp(speed * dt, 0.0, rate * dt)).as_array()
        return out


class TrajectorySpecError(ValueError):
    pass


def parse_trajectory_spec(text: str) -> TrajectorySpec:
    """Parse a ``key = value`` motion description.

    Keys: ``rate`` (Hz), ``start = x y theta``, repeatable
    ``segment = speed turn_rate duration`` and ``waypoint = t x y theta``,
    or the single-segment shorthand ``speed``/``turn_rate``/``duration``.
    """
    segments, waypoints, single = [], [], {}
    rate, start = 4.0, Pose2()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise TrajectorySpecError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            nums = [float(v) for v in value.split()]
        except ValueError as exc:
            raise TrajectorySpecError(f"line {lineno}: non-numeric value for {key!r}") from exc
        expected = {"rate": 1, "speed": 1, "turn_rate": 1, "duration": 1, "start": 3, "segment": 3, "waypoint": 4}
        if key not in expected:
            raise TrajectorySpecError(f"line {lineno}: unknown key {key!r}")
        if len(nums) != expected[key]:
            raise TrajectorySpecError(f"line {lineno}: {key!r} takes {expected[key]} value(s)")
        if key == "rate":
            rate = nums[0]
        elif key == "start":
            start = Pose2(*nums)
        elif key == "segment":
            segments.append(tuple(nums))
        elif key == "waypoint":
            waypoints.append(tuple(nums))
        else:
            single[key] = nums[0]
    if single:
        if "duration" not in single:
            raise TrajectorySpecError("shorthand form needs 'duration'")
        segments.append((single.get("speed", 0.0), single.get("turn_rate", 0.0), single["duration"]))
    try:
        return TrajectorySpec(segments=tuple(segments), waypoints=tuple(waypoints), scan_rate=rate, start=start)
    except ValueError as exc:
        raise TrajectorySpecError(str(exc)) from exc


def format_trajectory_spec(spec: TrajectorySpec) -> str:
    lines = [f"rate = {spec.scan_rate!r}",
             f"start = {spec.start.x!r} {spec.start.y!r} {spec.start.theta!r}"]
    lines += ["segment = " + " ".join(repr(float(v)) for v in seg) for seg in spec.segments]
    lines += ["waypoint = " + " ".join(repr(float(v)) for v in w) for w in spec.waypoints]
    return "\n".join(lines) + "\n"


def _ray_hits(origins: np.ndarray, angles: np.ndarray, world: WorldModel, max_range: float):
    """Distance to the first segment along each ray, and the hit segment index (-1 for none)."""
    m = len(angles)
    if len(world) == 0:
        return np.full(m, np.inf), np.full(m, -1)
    d = np.column_stack([np.cos(angles), np.sin(angles)])[:, None, :]  # (m,1,2)
    o = origins[:, None, :]
    e = (world.b - world.a)[None, :, :]  # (1,S,2)
    w = world.a[None, :, :] - o  # (m,S,2)
    denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]) / denom
        u = (w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]) / denom
    hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0) & (u <= 1) & (t <= max_range)
    t = np.where(hit, t, np.inf)
    seg = np.argmin(t, axis=1)
    dist = t[np.arange(m), seg]
    seg = np.where(np.isfinite(dist), seg, -1)
    return dist, seg


def _deposit(power: np.ndarray, rows: np.ndarray, ranges: np.ndarray, amps: np.ndarray, gamma: float) -> None:
    n = power.shape[1]
    centre = np.rint(ranges / gamma).astype(int)
    for off in range(-PEAK_HALF_WIDTH, PEAK_HALF_WIDTH + 1):
        b = centre + off
        ok = (b >= 0) & (b < n)
        shape = np.exp(-0.5 * ((b[ok] * gamma - ranges[ok]) / gamma) ** 2)
        np.add.at(power, (rows[ok], b[ok]), amps[ok] * shape)


def raycast_scan(world: WorldModel, pose, radar: RadarConfig, noise: SimNoise = SimNoise(), seed: int = 0,
                 start_time: float = 0.0) -> PolarScan:
    """Simulate one sweep.

    ``pose`` is either a single :class:`Pose2` (static sensor) or an
    ``(m, 3)`` array with the sensor pose at each azimuth's measurement time.
    """
    m, n, gamma = radar.num_azimuths, radar.num_bins, radar.range_resolution
    rng = np.random.default_rng(seed)
    if isinstance(pose, Pose2):
        poses = np.tile(pose.as_array(), (m, 1))
    else:
        poses = np.asarray(pose, dtype=float).reshape(m, 3)
    beam = poses[:, 2] + 2.0 * np.pi * np.arange(m) / m
    max_r = n * gamma
    dist, seg = _ray_hits(poses[:, :2], beam, world, max_r)

    power = np.zeros((m, n))
    rows = np.flatnonzero(seg >= 0)
    if rows.size:
        ranges = dist[rows]
        if noise.range_jitter_std > 0:
            ranges = ranges + rng.normal(0.0, noise.range_jitter_std, rows.size)
        amps = POWER_GAIN * world.reflectivity[seg[rows]] / np.maximum(ranges, gamma)
        _deposit(power, rows, ranges, amps, gamma)
        if noise.multipath_rate > 0:
            ghost = rng.random(rows.size) < noise.multipath_rate
            _deposit(power, rows[ghost], 2.0 * ranges[ghost], noise.multipath_gain * amps[ghost], gamma)
    if noise.power_noise_std > 0:
        power += rng.normal(0.0, noise.power_noise_std, power.shape)
    if noise.speckle_rate > 0:
        spots = rng.random(power.shape) < noise.speckle_rate
        power[spots] += rng.uniform(0.0, noise.speckle_power_max, int(spots.sum()))
    np.clip(power, 0.0, None, out=power)

    period = radar.sweep_period
    stamps = start_time + period * np.arange(m) / m
    return PolarScan(radar, power, stamps, start_time + 0.5 * period)


def generate_sequence(world: WorldModel, traj: TrajectorySpec, radar: RadarConfig, noise: SimNoise = SimNoise(),
                      seed: int = 0) -> tuple[list[PolarScan], Trajectory]:
    """One distorted sweep per scan interval plus the mid-sweep ground truth."""
    m = radar.num_azimuths
    count = traj.scan_count
    seeds = np.random.SeedSequence(seed).spawn(count)
    scans, stamps, gt = [], [], []
    for i in range(count):
        t_start = traj.t0 + i / traj.scan_rate
        az_times = t_start + radar.sweep_period * np.arange(m) / m
        poses = traj.poses_at(az_times)
        scan = raycast_scan(world, poses, radar, noise, seed=seeds[i], start_time=t_start)
        scans.append(scan)
        stamps.append(scan.scan_timestamp)
        gt.append(traj.poses_at([scan.scan_timestamp])[0])
    return scans, Trajectory(stamps, gt)


# ---------------------------------------------------------------------------
# ready-made scenes

def box_world(xmin: float, ymin: float, xmax: float, ymax: float, reflectivity: float = 1.0) -> list[tuple]:
    c = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    return [(*c[i], *c[(i + 1) % 4], reflectivity) for i in range(4)]


def rounded_rectangle_loop(length: float = 200.0, aspect: float = 1.5, corner_radius: float = 5.0,
                           speed: float = 2.5, scan_rate: float = 4.0) -> TrajectorySpec:
    """Closed counter-clockwise loop of the given perimeter made of straights and quarter arcs."""
    straight = length - 2.0 * math.pi * corner_radius
    if straight <= 0:
        raise ValueError("corner radius too large for loop length")
    b = straight / (2.0 * (1.0 + aspect))
    a = aspect * b
    turn = speed / corner_radius
    arc_t = (0.5 * math.pi * corner_radius) / speed
    segs = []
    for side in (a, b, a, b):
        segs.append((speed, 0.0, side / speed))
        segs.append((speed, turn, arc_t))
    return TrajectorySpec(segments=tuple(segs), scan_rate=scan_rate)


def loop_world(traj: TrajectorySpec, margin: float = 12.0, clutter: int = 60, clearance: float = 3.0,
               seed: int = 7) -> WorldModel:
    """Four walls around a trajectory plus randomly oriented short clutter segments."""
    rng = np.random.default_rng(seed)
    samples = traj.poses_at(np.linspace(traj.t0, traj.t0 + traj.duration, 2000))[:, :2]
    lo = samples.min(axis=0) - margin
    hi = samples.max(axis=0) + margin
    segs = box_world(lo[0], lo[1], hi[0], hi[1])
    placed = 0
    while placed < clutter:
        c = rng.uniform(lo + 1.0, hi - 1.0)
        half = 0.5 * rng.uniform(1.0, 4.0)
        ang = rng.uniform(0.0, math.pi)
        a = c - half * np.array([math.cos(ang), math.sin(ang)])
        b = c + half * np.array([math.cos(ang), math.sin(ang)])
        if np.min(np.hypot(*(samples - c).T)) < clearance + half:
            continue
        segs.append((a[0], a[1], b[0], b[1], rng.uniform(0.6, 1.0)))
        placed += 1
    return WorldModel.from_segments(segs)
