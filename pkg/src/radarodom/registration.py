"""Point-to-line registration of a scan against a window of keyframes.

Keyframe surface sets are expected in a common (world) frame; the
optimized pose maps source points into that frame.  Each source point is
matched to the nearest keyframe point within the association radius whose
normal agrees within ``normal_tolerance``.  The residual is the offset
projected on the target normal and is passed through a Huber loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose2, pose_apply  # noqa: F401  (re-exported)
from .optim import bfgs
from .scan import ConfigError
from .surface import SurfacePointSet


class RegistrationInputError(ValueError):
    pass


@dataclass(frozen=True)
class RegConfig:
    huber_delta: float = 0.1
    normal_tolerance: float = 30.0  # degrees
    association_radius: float = 3.5
    max_outer_iterations: int = 8
    param_tolerance: float = 1e-4
    min_correspondences: int = 10
    max_inner_iterations: int = 50
    gradient_tolerance: float = 1e-8

    def __post_init__(self):
        if not self.huber_delta > 0:
            raise ConfigError("huber_delta must be positive")
        if not 0 < self.normal_tolerance < 90:
            raise ConfigError("normal_tolerance must lie in (0, 90) degrees")
        if not self.association_radius > 0:
            raise ConfigError("association_radius must be positive")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ConfigError("iteration limits must be positive")


@dataclass(frozen=True)
class Correspondence:
    source_index: int
    target_index: int
    keyframe_index: int = 0


@dataclass
class RegistrationResult:
    pose: Pose2
    converged: bool
    final_cost: float
    correspondence_count: int
    outer_iterations: int
    tolerance_reached: bool = False
    # cost at each accepted inner iterate, one list per outer iteration
    history: list[list[float]] = field(default_factory=list, repr=False)


def huber(s, delta: float):
    """Huber loss: quadratic for ``|s| <= delta``, linear beyond."""
    a = np.abs(s)
    out = np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return float(out) if np.ndim(out) == 0 else out


def huber_derivative(s, delta: float):
    return np.clip(s, -delta, delta)


def _tree(target: SurfacePointSet) -> cKDTree:
    tree = target.__dict__.get("_kdtree")
    if tree is None:
        tree = cKDTree(target.mean)
        object.__setattr__(target, "_kdtree", tree)
    return tree


def _associate_arrays(source: SurfacePointSet, target: SurfacePointSet, pose: Pose2,
                      config: RegConfig) -> tuple[np.ndarray, np.ndarray]:
    if len(source) == 0 or len(target) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    moved = pose.apply(source.mean)
    dist, j = _tree(target).query(moved, k=1, distance_upper_bound=config.association_radius)
    found = np.isfinite(dist) & (dist <= config.association_radius)
    i = np.flatnonzero(found)
    j = j[found]
    n_src = source.normal[i] @ pose.rotation().T
    dots = np.abs(np.einsum("ij,ij->i", n_src, target.normal[j]))
    ok = dots >= math.cos(math.radians(config.normal_tolerance)) - 1e-12
    return i[ok], j[ok]


def associate(source: SurfacePointSet, target: SurfacePointSet, pose: Pose2, config: RegConfig = RegConfig(),
              keyframe_index: int = 0) -> list[Correspondence]:
    """Nearest-neighbour association with a normal-angle gate, at most one match per source point."""
    i, j = _associate_arrays(source, target, pose, config)
    return [Correspondence(int(a), int(b), keyframe_index) for a, b in zip(i, j)]


class _Problem:
    """Stacked correspondences with frozen association.

    With ``P = n.mu_src``, ``Q = n x mu_src`` and ``K = n.mu_tgt`` each
    residual is ``nx*x + ny*y + cos(th)*P + sin(th)*Q - K``.
    """

    def __init__(self, src: np.ndarray, tgt_mean: np.ndarray, tgt_normal: np.ndarray, delta: float):
        self.src, self.tgt_mean, self.tgt_normal, self.delta = src, tgt_mean, tgt_normal, delta
        nx, ny = tgt_normal[:, 0], tgt_normal[:, 1]
        sx, sy = src[:, 0], src[:, 1]
        self.A = np.column_stack([nx, ny, nx * sx + ny * sy, ny * sx - nx * sy])
        self.K = nx * tgt_mean[:, 0] + ny * tgt_mean[:, 1]

    def __len__(self):
        return self.src.shape[0]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        return self.A @ np.array([x[0], x[1], math.cos(x[2]), math.sin(x[2])]) - self.K

    def cost(self, x: np.ndarray) -> float:
        if len(self) == 0:
            return 0.0
        a = np.abs(self.residuals(x))
        q = np.minimum(a, self.delta)
        return float(q @ (a - 0.5 * q))

    def cost_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        if len(self) == 0:
            return 0.0, np.zeros(3)
        c, s = math.cos(x[2]), math.sin(x[2])
        r = self.A @ np.array([x[0], x[1], c, s]) - self.K
        a = np.abs(r)
        q = np.minimum(a, self.delta)
        g = np.copysign(q, r) @ self.A
        return float(q @ (a - 0.5 * q)), np.array([g[0], g[1], c * g[3] - s * g[2]])

    def initial_inverse_hessian(self, x: np.ndarray) -> np.ndarray:
        """IRLS-weighted Gauss-Newton curvature, inverted, to seed BFGS."""
        c, s = math.cos(x[2]), math.sin(x[2])
        r = self.residuals(x)
        w = self.delta / np.maximum(np.abs(r), self.delta)
        J = np.column_stack([self.A[:, 0], self.A[:, 1], c * self.A[:, 3] - s * self.A[:, 2]])
        B = (J * w[:, None]).T @ J
        B += (1e-9 * np.trace(B) + 1e-12) * np.eye(3)
        try:
            return np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return np.eye(3)


def _build_problem(keyframes, source: SurfacePointSet, pairs, delta: float) -> _Problem:
    src, tm, tn = [], [], []
    for kf, (i, j) in zip(keyframes, pairs):
        src.append(source.mean[i])
        tm.append(kf.mean[j])
        tn.append(kf.normal[j])
    if not src:
        return _Problem(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), delta)
    return _Problem(np.concatenate(src), np.concatenate(tm), np.concatenate(tn), delta)


def _pairs_from_corrs(keyframes, corrs):
    pairs = []
    for k in range(len(keyframes)):
        sel = [c for c in corrs if c.keyframe_index == k]
        pairs.append((np.array([c.source_index for c in sel], dtype=int),
                      np.array([c.target_index for c in sel], dtype=int)))
    return pairs


def p2l_cost(target: SurfacePointSet, source: SurfacePointSet, pose: Pose2, corrs, config: RegConfig = RegConfig()) -> float:
    """Sum of Huber point-to-line residuals over the given correspondences."""
    pairs = _pairs_from_corrs([target], [Correspondence(c.source_index, c.target_index, 0) for c in corrs])
    return _build_problem([target], source, pairs, config.huber_delta).cost(pose.as_array())


def s2ks_cost(keyframes, source: SurfacePointSet, pose: Pose2, config: RegConfig = RegConfig()) -> float:
    """Joint cost against every keyframe, each associated at ``pose``."""
    total = 0.0
    for kf in keyframes:
        total += p2l_cost(kf, source, pose, associate(source, kf, pose, config), config)
    return total


def associate_all(keyframes, source: SurfacePointSet, pose: Pose2, config: RegConfig = RegConfig()) -> list[Correspondence]:
    out = []
    for k, kf in enumerate(keyframes):
        out.extend(associate(source, kf, pose, config, keyframe_index=k))
    return out


def s2ks_gradient(keyframes, source: SurfacePointSet, pose: Pose2, corrs, config: RegConfig = RegConfig()) -> np.ndarray:
    """Gradient of the joint cost w.r.t. (x, y, theta) with associations held fixed."""
    problem = _build_problem(keyframes, source, _pairs_from_corrs(keyframes, corrs), config.huber_delta)
    return problem.cost_and_grad(pose.as_array())[1]


def s2ks_fixed_cost(keyframes, source: SurfacePointSet, pose: Pose2, corrs, config: RegConfig = RegConfig()) -> float:
    problem = _build_problem(keyframes, source, _pairs_from_corrs(keyframes, corrs), config.huber_delta)
    return problem.cost(pose.as_array())


def _same_pairs(a, b) -> bool:
    return all(np.array_equal(i1, i2) and np.array_equal(j1, j2) for (i1, j1), (i2, j2) in zip(a, b))


def register(keyframes, source: SurfacePointSet, init: Pose2 = Pose2(), config: RegConfig = RegConfig()) -> RegistrationResult:
    """Estimate the pose of ``source`` in the keyframes' frame.

    Alternates association and a BFGS solve over frozen correspondences
    until the update ``|dt| + r*|dtheta|`` drops below ``param_tolerance``.
    """
    keyframes = list(keyframes)
    if not keyframes:
        raise RegistrationInputError("at least one keyframe is required")
    if len(source) == 0:
        raise RegistrationInputError("source surface set is empty")

    pose = init
    history: list[list[float]] = []
    reached = False
    solves = 0
    previous = None
    pairs = None
    for _ in range(config.max_outer_iterations):
        pairs = [_associate_arrays(source, kf, pose, config) for kf in keyframes]
        if previous is not None and _same_pairs(pairs, previous):
            # the inner solve already ran on exactly this association
            reached = True
            break
        problem = _build_problem(keyframes, source, pairs, config.huber_delta)
        if len(problem) == 0:
            break
        previous = pairs
        x0 = pose.as_array()
        res = bfgs(problem.cost_and_grad, x0, problem.initial_inverse_hessian(x0),
                   max_iter=config.max_inner_iterations, gtol=config.gradient_tolerance)
        solves += 1
        history.append(res.trace)
        x = res.x
        pose = Pose2.from_array(x)
        pairs = None  # stale after the pose moved
        step = math.hypot(x[0] - x0[0], x[1] - x0[1]) + config.association_radius * abs(x[2] - x0[2])
        if step < config.param_tolerance:
            reached = True
            break

    if pairs is None:
        pairs = [_associate_arrays(source, kf, pose, config) for kf in keyframes]
    problem = _build_problem(keyframes, source, pairs, config.huber_delta)
    count = len(problem)
    return RegistrationResult(
        pose=pose,
        converged=count >= config.min_correspondences,
        final_cost=problem.cost(pose.as_array()),
        correspondence_count=count,
        outer_iterations=solves,
        tolerance_reached=reached,
        history=history,
    )
