"""SE(2) poses and constant-twist motion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(theta, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> Pose2:
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v) -> Pose2:
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        return rot(self.theta)

    def compose(self, other: Pose2) -> Pose2:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    __matmul__ = compose

    def inverse(self) -> Pose2:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def between(self, other: Pose2) -> Pose2:
        """Relative pose taking this frame to ``other``: ``self^-1 * other``."""
        return self.inverse().compose(other)

    def apply(self, p) -> np.ndarray:
        """Map points (shape (2,) or (N, 2)) from the local frame into the parent frame."""
        p = np.asarray(p, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        x = c * p[..., 0] - s * p[..., 1] + self.x
        y = s * p[..., 0] + c * p[..., 1] + self.y
        return np.stack([x, y], axis=-1)

    def translation_norm(self) -> float:
        return math.hypot(self.x, self.y)

    def isclose(self, other: Pose2, tol: float = 1e-9) -> bool:
        return (abs(self.x - other.x) <= tol and abs(self.y - other.y) <= tol
                and abs(wrap_angle(self.theta - other.theta)) <= tol)


def pose_apply(pose: Pose2, p) -> np.ndarray:
    return pose.apply(p)


def _sinc_terms(w: float):
    # A = sin(w)/w, B = (1 - cos(w))/w with series fallback near zero
    if abs(w) < 1e-6:
        w2 = w * w
        return 1.0 - w2 / 6.0, w / 2.0 - w * w2 / 24.0
    return math.sin(w) / w, (1.0 - math.cos(w)) / w


def se2_exp(vx: float, vy: float, w: float) -> Pose2:
    """Pose reached by following the body-frame twist (vx, vy, w) for unit time."""
    a, b = _sinc_terms(w)
    return Pose2(a * vx - b * vy, b * vx + a * vy, w)


def se2_log(pose: Pose2) -> tuple[float, float, float]:
    """Inverse of :func:`se2_exp`."""
    w = pose.theta
    a, b = _sinc_terms(w)
    det = a * a + b * b
    vx = (a * pose.x + b * pose.y) / det
    vy = (-b * pose.x + a * pose.y) / det
    return vx, vy, w
