"""Learning-free 2D radar odometry.

Pipeline: k-strongest filtering of polar sweeps, oriented surface points,
and Huber point-to-line registration against a sliding keyframe window.
"""

from .geometry import Pose2
from .scan import (FilterConfig, PointCloud, PolarScan, RadarConfig, Velocity2, cfar_filter,
                   k_strongest_filter, motion_compensate, parse_scan, polar_to_cartesian)
from .surface import SurfaceConfig, SurfacePointSet, estimate_oriented_points, extract_surface_points, grid_downsample
from .registration import RegConfig, associate, huber, p2l_cost, register, s2ks_cost, s2ks_gradient
from .evaluation import Trajectory, kitti_relative_errors, read_trajectory, write_trajectory
from .odometry import OdometryConfig, OdometryState, predict, process_scan, run_odometry, update_keyframes
from .sim import SimNoise, TrajectorySpec, WorldModel, generate_sequence, raycast_scan

__version__ = "0.1.0"
