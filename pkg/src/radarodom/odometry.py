"""Per-scan odometry pipeline with a sliding window of keyframes."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .evaluation import Trajectory
from .geometry import Pose2, se2_log
from .registration import RegConfig, register
from .scan import (ConfigError, FilterConfig, PolarScan, Velocity2, k_strongest_filter,
                   motion_compensate, velocity_pose)
from .surface import SurfaceConfig, SurfacePointSet, extract_surface_points


class TimeRegressionError(ValueError):
    pass


@dataclass(frozen=True)
class OdometryConfig:
    keyframe_min_translation: float = 1.5
    keyframe_min_rotation: float = 5.0  # degrees
    window_size: int = 3
    enable_motion_compensation: bool = True
    enable_prediction: bool = True
    min_range: float = 5.0
    max_range: float = 100.0
    filter: FilterConfig = field(default_factory=FilterConfig)
    surface: SurfaceConfig = field(default_factory=SurfaceConfig)
    registration: RegConfig = field(default_factory=RegConfig)
    workers: int = 1

    def __post_init__(self):
        if self.keyframe_min_translation <= 0 or self.keyframe_min_rotation <= 0:
            raise ConfigError("keyframe thresholds must be positive")
        if self.window_size < 1:
            raise ConfigError("window_size must be at least 1")
        if not 0 <= self.min_range < self.max_range:
            raise ConfigError("need 0 <= min_range < max_range")


@dataclass
class Keyframe:
    pose: Pose2
    surface: SurfacePointSet
    timestamp: float
    world: SurfacePointSet = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.surface) == 0:
            raise ValueError("keyframe surface set must be non-empty")
        self.world = self.surface.transformed(self.pose)


@dataclass
class KeyframeWindow:
    capacity: int = 3
    frames: list[Keyframe] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def newest(self) -> Keyframe | None:
        return self.frames[-1] if self.frames else None

    def push(self, frame: Keyframe) -> None:
        if self.frames and frame.timestamp <= self.frames[-1].timestamp:
            raise TimeRegressionError("keyframe timestamps must be strictly increasing")
        self.frames.append(frame)
        while len(self.frames) > self.capacity:
            self.frames.pop(0)

    def world_surfaces(self) -> list[SurfacePointSet]:
        return [f.world for f in self.frames]


@dataclass
class OdometryState:
    window: KeyframeWindow
    last_pose: Pose2 = field(default_factory=Pose2)
    velocity: Velocity2 = field(default_factory=Velocity2)
    last_timestamp: float | None = None
    frame_count: int = 0

    @classmethod
    def initial(cls, config: OdometryConfig = OdometryConfig()) -> OdometryState:
        return cls(KeyframeWindow(config.window_size))


@dataclass
class FrameStatus:
    frame: int
    timestamp: float
    ok: bool
    converged: bool
    correspondence_count: int
    final_cost: float
    point_count: int
    surface_count: int
    keyframe_created: bool
    keyframe_count: int
    timings_ms: dict[str, float] = field(default_factory=dict)
    reason: str = ""


def predict(state: OdometryState, timestamp: float) -> Pose2:
    """Extrapolate the last pose with the current body-frame velocity."""
    if state.last_timestamp is None:
        return state.last_pose
    dt = timestamp - state.last_timestamp
    if dt < 0:
        raise TimeRegressionError(f"timestamp {timestamp} precedes last frame {state.last_timestamp}")
    return state.last_pose.compose(velocity_pose(state.velocity, dt))


def keyframe_needed(newest_pose: Pose2 | None, pose: Pose2, config: OdometryConfig) -> bool:
    if newest_pose is None:
        return True
    rel = newest_pose.between(pose)
    return (rel.translation_norm() > config.keyframe_min_translation
            or abs(math.degrees(rel.theta)) > config.keyframe_min_rotation)


def update_keyframes(window: KeyframeWindow, pose: Pose2, surface: SurfacePointSet,
                     config: OdometryConfig, timestamp: float | None = None) -> bool:
    """Append a keyframe when the motion since the newest one exceeds either threshold."""
    newest = window.newest
    if not keyframe_needed(newest.pose if newest else None, pose, config):
        return False
    window.push(Keyframe(pose, surface, surface.timestamp if timestamp is None else timestamp))
    return True


def process_scan(state: OdometryState, scan: PolarScan, config: OdometryConfig = OdometryConfig()) -> tuple[Pose2, FrameStatus]:
    """Run one scan through the pipeline, mutating ``state`` in place."""
    t_start = time.perf_counter()
    stamp = scan.scan_timestamp
    if state.last_timestamp is not None and stamp < state.last_timestamp:
        raise TimeRegressionError(f"scan timestamp {stamp} precedes last frame {state.last_timestamp}")
    timings: dict[str, float] = {}

    def lap(name, t0):
        now = time.perf_counter()
        timings[name] = (now - t0) * 1e3
        return now

    t = t_start
    cloud = k_strongest_filter(scan, config.filter, config.min_range, config.max_range)
    t = lap("filter", t)
    if config.enable_motion_compensation:
        cloud = motion_compensate(cloud, state.velocity, scan.config.sweep_period)
    t = lap("compensate", t)
    surface = extract_surface_points(cloud, config.surface, workers=config.workers)
    t = lap("surface", t)

    first = state.frame_count == 0
    prediction = predict(state, stamp) if config.enable_prediction else state.last_pose
    if first:
        prediction = Pose2()

    result = None
    reason = ""
    if len(surface) == 0:
        pose, ok, reason = prediction, False, "empty surface set"
    elif first or len(state.window) == 0:
        pose, ok = prediction, True
    else:
        result = register(state.window.world_surfaces(), surface, prediction, config.registration)
        if result.converged:
            pose, ok = result.pose, True
        else:
            pose, ok, reason = prediction, False, "registration did not converge"
    t = lap("register", t)

    if state.last_timestamp is not None:
        dt = stamp - state.last_timestamp
        if dt > 0:
            vx, vy, w = se2_log(state.last_pose.between(pose))
            state.velocity = Velocity2(vx / dt, vy / dt, w / dt)

    created = False
    if len(surface) > 0:
        created = update_keyframes(state.window, pose, surface, config, stamp)
    lap("keyframes", t)

    state.last_pose = pose
    state.last_timestamp = stamp
    state.frame_count += 1
    timings["total"] = (time.perf_counter() - t_start) * 1e3

    status = FrameStatus(
        frame=state.frame_count - 1,
        timestamp=stamp,
        ok=ok,
        converged=bool(result.converged) if result else ok,
        correspondence_count=result.correspondence_count if result else 0,
        final_cost=result.final_cost if result else 0.0,
        point_count=len(cloud),
        surface_count=len(surface),
        keyframe_created=created,
        keyframe_count=len(state.window),
        timings_ms=timings,
        reason=reason,
    )
    return pose, status


def run_odometry(scans, config: OdometryConfig = OdometryConfig()) -> tuple[Trajectory, list[FrameStatus], OdometryState]:
    state = OdometryState.initial(config)
    stamps, poses, statuses = [], [], []
    for scan in scans:
        pose, status = process_scan(state, scan, config)
        stamps.append(scan.scan_timestamp)
        poses.append(pose)
        statuses.append(status)
    return Trajectory(stamps, poses, check=False), statuses, state
