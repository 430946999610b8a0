"""Oriented surface points from a filtered radar point cloud.

The cloud is thinned to one centroid per grid cell of side ``r/f``; around
every centroid the raw points within ``r`` give a sample mean and
covariance.  Well-conditioned neighbourhoods become oriented points whose
normal is the covariance eigenvector of the smallest eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Pose2
from .scan import ConfigError, PointCloud


@dataclass(frozen=True)
class SurfaceConfig:
    radius: float = 3.5
    resample_factor: float = 1.0
    condition_max: float = 1e5
    min_neighbors: int = 6
    min_azimuths: int = 2

    def __post_init__(self):
        if not (self.radius > 0 and self.resample_factor > 0):
            raise ConfigError("radius and resample_factor must be positive")
        if not self.condition_max > 1:
            raise ConfigError("condition_max must exceed 1")
        if self.min_neighbors < 2:
            raise ConfigError("min_neighbors must be at least 2")
        if self.min_azimuths < 1:
            raise ConfigError("min_azimuths must be at least 1")

    @property
    def cell_size(self) -> float:
        return self.radius / self.resample_factor


@dataclass(frozen=True)
class OrientedPoint:
    mean: np.ndarray
    normal: np.ndarray
    covariance: np.ndarray
    support_count: int


@dataclass(frozen=True, eq=False)
class SurfacePointSet:
    """Column-wise store of oriented points (means, unit normals, covariances)."""

    mean: np.ndarray
    normal: np.ndarray
    covariance: np.ndarray
    support: np.ndarray
    timestamp: float = 0.0
    origin_pose_hint: Pose2 | None = None

    def __len__(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> SurfacePointSet:
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros(0, dtype=int), timestamp)

    @classmethod
    def from_arrays(cls, mean, normal, covariance=None, support=None, timestamp: float = 0.0) -> SurfacePointSet:
        mean = np.asarray(mean, dtype=float).reshape(-1, 2)
        normal = np.asarray(normal, dtype=float).reshape(-1, 2)
        normal = normal / np.linalg.norm(normal, axis=1, keepdims=True)
        k = mean.shape[0]
        if covariance is None:
            covariance = np.zeros((k, 2, 2))
        if support is None:
            support = np.zeros(k, dtype=int)
        return cls(mean, normal, np.asarray(covariance, dtype=float), np.asarray(support, dtype=int), timestamp)

    @property
    def points(self) -> list[OrientedPoint]:
        return [OrientedPoint(m.copy(), n.copy(), c.copy(), int(s))
                for m, n, c, s in zip(self.mean, self.normal, self.covariance, self.support)]

    def transformed(self, pose: Pose2) -> SurfacePointSet:
        """Rigidly move the whole set by ``pose``."""
        R = pose.rotation()
        return SurfacePointSet(
            pose.apply(self.mean) if len(self) else self.mean.copy(),
            self.normal @ R.T,
            R @ self.covariance @ R.T,
            self.support.copy(),
            self.timestamp,
            self.origin_pose_hint,
        )


def grid_downsample(cloud: PointCloud | np.ndarray, cell_size: float) -> np.ndarray:
    """Centroid of every occupied square cell, ordered by (ix, iy) cell index."""
    if cell_size <= 0:
        raise ConfigError("cell_size must be positive")
    xy = cloud.xy if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 2)
    if xy.shape[0] == 0:
        return np.zeros((0, 2))
    idx = np.floor(xy / cell_size).astype(np.int64)
    idx -= idx.min(axis=0)
    # row-major key keeps the (ix, iy) lexicographic order
    key = idx[:, 0] * (int(idx[:, 1].max()) + 1) + idx[:, 1]
    cells, inverse = np.unique(key, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(cells))
    cx = np.bincount(inverse, weights=xy[:, 0], minlength=len(cells)) / counts
    cy = np.bincount(inverse, weights=xy[:, 1], minlength=len(cells)) / counts
    return np.column_stack([cx, cy])


def canonical_normal(n: np.ndarray) -> np.ndarray:
    """Flip rows of ``n`` so the first non-zero component is positive."""
    n = np.array(n, dtype=float, copy=True)
    lead = np.where(np.abs(n[..., 0]) > 1e-12, n[..., 0], n[..., 1])
    n[lead < 0] *= -1.0
    return n


def estimate_oriented_points(centroids: np.ndarray, cloud: PointCloud, config: SurfaceConfig = SurfaceConfig(),
                             workers: int = 1) -> SurfacePointSet:
    centroids = np.asarray(centroids, dtype=float).reshape(-1, 2)
    if len(centroids) == 0 or len(cloud) == 0:
        return SurfacePointSet.empty(cloud.source_timestamp)

    cloud_tree = cKDTree(cloud.xy)
    # cheap count first: only centroids that can meet min_neighbors get full neighbourhoods
    counts = cloud_tree.query_ball_point(centroids, config.radius, return_length=True, workers=workers)
    cand = np.flatnonzero(counts >= config.min_neighbors)
    if cand.size == 0:
        return SurfacePointSet.empty(cloud.source_timestamp)
    centroids = centroids[cand]
    pairs = cKDTree(centroids).sparse_distance_matrix(cloud_tree, config.radius, output_type="ndarray")
    group = pairs["i"].astype(np.int64)
    members = pairs["j"].astype(np.int64)
    g = len(centroids)
    sizes = np.bincount(group, minlength=g)

    pts = cloud.xy[members]
    safe = np.maximum(sizes, 1)
    mu = np.column_stack([np.bincount(group, weights=pts[:, 0], minlength=g),
                          np.bincount(group, weights=pts[:, 1], minlength=g)]) / safe[:, None]
    dev = pts - mu[group]
    denom = np.maximum(sizes - 1, 1)
    sxx = np.bincount(group, weights=dev[:, 0] * dev[:, 0], minlength=g) / denom
    sxy = np.bincount(group, weights=dev[:, 0] * dev[:, 1], minlength=g) / denom
    syy = np.bincount(group, weights=dev[:, 1] * dev[:, 1], minlength=g) / denom
    cov = np.stack([np.stack([sxx, sxy], -1), np.stack([sxy, syy], -1)], -2)

    span = int(cloud.azimuth_index.max()) + 1
    az_keys = np.unique(group * span + cloud.azimuth_index[members])
    n_az = np.bincount(az_keys // span, minlength=g)

    evals, evecs = np.linalg.eigh(cov)
    lam_min, lam_max = evals[:, 0], evals[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(lam_min > 0, lam_max / lam_min, np.inf)
    ok = (sizes >= config.min_neighbors) & (n_az >= config.min_azimuths) & (lam_min > 0) & (kappa <= config.condition_max)

    normal = canonical_normal(evecs[ok][:, :, 0])
    return SurfacePointSet(mu[ok], normal, cov[ok], sizes[ok], cloud.source_timestamp)


def extract_surface_points(cloud: PointCloud, config: SurfaceConfig = SurfaceConfig(), workers: int = 1) -> SurfacePointSet:
    """Downsample with cell ``r/f`` and estimate oriented points around each centroid."""
    return estimate_oriented_points(grid_downsample(cloud, config.cell_size), cloud, config, workers=workers)
