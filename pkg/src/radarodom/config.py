"""Run configuration: flat ``key = value`` files with dotted sections.

Example::

    filter.k = 12
    surface.radius = 3.5
    registration.association_radius = auto   # follows surface.radius

Every key has a default (the published parameter set for the odometry
part); files and ``--set`` overrides only need to list what changes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .odometry import OdometryConfig
from .registration import RegConfig
from .scan import ConfigError, FilterConfig, RadarConfig
from .sim import SimNoise
from .surface import SurfaceConfig

AUTO = "auto"

# key -> default; the default's type decides how values are parsed
DEFAULTS: dict[str, object] = {
    "filter.k": 12,
    "filter.z_min": 55.0,
    "surface.radius": 3.5,
    "surface.resample_factor": 1.0,
    "surface.condition_max": 1e5,
    "surface.min_neighbors": 6,
    "surface.min_azimuths": 2,
    "registration.huber_delta": 0.1,
    "registration.normal_tolerance": 30.0,
    "registration.association_radius": AUTO,
    "registration.max_outer_iterations": 8,
    "registration.param_tolerance": 1e-4,
    "registration.min_correspondences": 10,
    "registration.max_inner_iterations": 50,
    "registration.gradient_tolerance": 1e-8,
    "odometry.keyframe_min_translation": 1.5,
    "odometry.keyframe_min_rotation": 5.0,
    "odometry.window_size": 3,
    "odometry.enable_motion_compensation": True,
    "odometry.enable_prediction": True,
    "odometry.min_range": 5.0,
    "odometry.max_range": 100.0,
    "odometry.threads": 1,
    "radar.num_azimuths": 400,
    "radar.num_bins": 800,
    "radar.range_resolution": 0.175,
    "radar.min_range": 0.0,
    "radar.max_range": AUTO,
    "radar.sweep_period": 0.25,
    "sim.power_noise_std": 0.0,
    "sim.range_jitter_std": 0.0,
    "sim.speckle_rate": 0.0,
    "sim.speckle_power_max": 150.0,
    "sim.multipath_rate": 0.0,
    "sim.multipath_gain": 0.6,
    "seed": 0,
}

_AUTO_KEYS = {"registration.association_radius", "radar.max_range"}


def _coerce(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    if key in _AUTO_KEYS and text.lower() == AUTO:
        return AUTO
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc


def parse_assignments(lines, source: str = "<config>") -> dict[str, object]:
    """Parse ``key = value`` lines (``#`` comments allowed) into typed values."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, overrides=()) -> RunConfig:
        """Defaults, then the file at ``path``, then ``key=value`` overrides."""
        values = dict(DEFAULTS)
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            values.update(parse_assignments(text.splitlines(), str(path)))
        values.update(parse_assignments(list(overrides), "--set"))
        cfg = cls(values)
        cfg.odometry()  # validate early
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in DEFAULTS)

    def dump(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.dumps())

    def odometry(self) -> OdometryConfig:
        v = self.values
        radius = v["surface.radius"]
        assoc = v["registration.association_radius"]
        return OdometryConfig(
            keyframe_min_translation=v["odometry.keyframe_min_translation"],
            keyframe_min_rotation=v["odometry.keyframe_min_rotation"],
            window_size=v["odometry.window_size"],
            enable_motion_compensation=v["odometry.enable_motion_compensation"],
            enable_prediction=v["odometry.enable_prediction"],
            min_range=v["odometry.min_range"],
            max_range=v["odometry.max_range"],
            filter=FilterConfig(k=v["filter.k"], z_min=v["filter.z_min"]),
            surface=SurfaceConfig(radius=radius, resample_factor=v["surface.resample_factor"],
                                  condition_max=v["surface.condition_max"],
                                  min_neighbors=v["surface.min_neighbors"],
                                  min_azimuths=v["surface.min_azimuths"]),
            registration=RegConfig(huber_delta=v["registration.huber_delta"],
                                   normal_tolerance=v["registration.normal_tolerance"],
                                   association_radius=radius if assoc == AUTO else assoc,
                                   max_outer_iterations=v["registration.max_outer_iterations"],
                                   param_tolerance=v["registration.param_tolerance"],
                                   min_correspondences=v["registration.min_correspondences"],
                                   max_inner_iterations=v["registration.max_inner_iterations"],
                                   gradient_tolerance=v["registration.gradient_tolerance"]),
            workers=v["odometry.threads"],
        )

    def radar(self) -> RadarConfig:
        v = self.values
        max_range = v["radar.max_range"]
        return RadarConfig(v["radar.num_azimuths"], v["radar.num_bins"], v["radar.range_resolution"],
                           v["radar.min_range"], None if max_range == AUTO else max_range,
                           v["radar.sweep_period"])

    def noise(self) -> SimNoise:
        v = self.values
        try:
            return SimNoise(**{k[4:]: v[k] for k in DEFAULTS if k.startswith("sim.")})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def seed(self) -> int:
        return self.values["seed"]
