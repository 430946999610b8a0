import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarodom import OdometryConfig, RadarConfig, SimNoise, extract_surface_points, k_strongest_filter
from radarodom.geometry import Pose2
from radarodom.registration import (Correspondence, RegConfig, RegistrationInputError, associate, associate_all,
                                    huber, huber_derivative, p2l_cost, register, s2ks_cost, s2ks_fixed_cost,
                                    s2ks_gradient)
from radarodom.scan import ConfigError
from radarodom.sim import WorldModel, box_world, raycast_scan
from radarodom.surface import SurfacePointSet


def sps(means, normals):
    return SurfacePointSet.from_arrays(means, normals)


def random_set(rng, count=80, spread=15.0):
    ang = rng.uniform(0, 2 * np.pi, count)
    return sps(rng.uniform(-spread, spread, (count, 2)), np.column_stack([np.cos(ang), np.sin(ang)]))


# --- Huber --------------------------------------------------------------------

def test_huber_examples():
    assert huber(0.0, 0.1) == 0.0
    assert huber(0.1, 0.1) == pytest.approx(0.005)
    assert huber(1.0, 0.1) == pytest.approx(0.095)


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 10))
def test_huber_even_and_below_quadratic(s, delta):
    assert huber(s, delta) == huber(-s, delta)
    assert huber(s, delta) <= 0.5 * s * s + 1e-12
    if abs(s) <= delta:
        assert huber(s, delta) == 0.5 * s * s


def test_huber_is_c1_at_knee():
    d, h = 0.1, 1e-9
    assert huber(d + h, d) - huber(d - h, d) == pytest.approx(2 * h * d, rel=1e-3)
    assert huber_derivative(d - 1e-12, d) == pytest.approx(huber_derivative(d + 1e-12, d))
    assert huber_derivative(np.array([-5.0, 0.03]), d).tolist() == [-0.1, 0.03]


def test_config_validation():
    for bad in (dict(huber_delta=0), dict(normal_tolerance=0), dict(normal_tolerance=90), dict(association_radius=0)):
        with pytest.raises(ConfigError):
            RegConfig(**bad)


# --- association --------------------------------------------------------------

def test_self_association_matches_every_point():
    s = random_set(np.random.default_rng(0))
    corrs = associate(s, s, Pose2())
    assert [(c.source_index, c.target_index) for c in corrs] == [(i, i) for i in range(len(s))]


def test_normal_gate_rejects_45_degrees():
    src = sps([[0, 0]], [[1, 0]])
    tgt = sps([[0.5, 0]], [[math.cos(math.pi / 4), math.sin(math.pi / 4)]])
    assert associate(src, tgt, Pose2(), RegConfig(normal_tolerance=30)) == []
    assert len(associate(src, tgt, Pose2(), RegConfig(normal_tolerance=50))) == 1


def test_nearest_target_wins_and_sign_is_ignored():
    src = sps([[0, 0]], [[0, 1]])
    tgt = sps([[0, 2.0], [0, 1.0], [0, -3.9]], [[0, 1], [0, -1], [0, 1]])
    (c,) = associate(src, tgt, Pose2())
    assert c.target_index == 1


def test_association_radius_and_pose():
    src = sps([[0, 0]], [[0, 1]])
    tgt = sps([[5.0, 0.0]], [[0, 1]])
    assert associate(src, tgt, Pose2()) == []
    assert len(associate(src, tgt, Pose2(2.0, 0, 0))) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_association_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    src, tgt = random_set(rng, 40), random_set(rng, 60)
    pose = Pose2(*rng.uniform(-1, 1, 2), rng.uniform(-0.3, 0.3))
    cfg = RegConfig()
    expected = []
    moved = pose.apply(src.mean)
    for i, p in enumerate(moved):
        d = np.hypot(*(tgt.mean - p).T)
        j = int(np.argmin(d))
        if d[j] <= cfg.association_radius:
            n = pose.rotation() @ src.normal[i]
            if abs(n @ tgt.normal[j]) >= math.cos(math.radians(cfg.normal_tolerance)):
                expected.append((i, j))
    assert [(c.source_index, c.target_index) for c in associate(src, tgt, pose, cfg)] == expected


# --- costs ----------------------------------------------------------------------

def test_p2l_cost_examples():
    tgt = sps([[0, 0]], [[0, 1]])
    c = [Correspondence(0, 0)]
    assert p2l_cost(tgt, sps([[5, 0.05]], [[0, 1]]), Pose2(), c) == pytest.approx(0.00125)
    assert p2l_cost(tgt, sps([[5, 1.0]], [[0, 1]]), Pose2(), c) == pytest.approx(0.095)
    assert p2l_cost(tgt, sps([[5, 0.0]], [[0, 1]]), Pose2(), c) == 0.0
    # the pose is applied before projecting
    assert p2l_cost(tgt, sps([[5, 0.0]], [[0, 1]]), Pose2(0, 0.05, 0), c) == pytest.approx(0.00125)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_p2l_cost_invariant_to_normal_sign(seed):
    rng = np.random.default_rng(seed)
    tgt, src = random_set(rng), random_set(rng)
    pose = Pose2(*rng.uniform(-1, 1, 3))
    corrs = [Correspondence(i, j) for i, j in zip(rng.integers(0, 80, 30), rng.integers(0, 80, 30))]
    flip = np.where(rng.random(80) < 0.5, -1.0, 1.0)[:, None]
    flipped = sps(tgt.mean, tgt.normal * flip)
    assert p2l_cost(tgt, src, pose, corrs) == pytest.approx(p2l_cost(flipped, src, pose, corrs), rel=1e-12)


def test_s2ks_cost_is_a_sum_over_keyframes():
    rng = np.random.default_rng(1)
    kf = random_set(rng)
    src = sps(kf.mean + rng.normal(0, 0.1, kf.mean.shape), kf.normal)
    pose = Pose2(0.05, -0.02, 0.01)
    one = s2ks_cost([kf], src, pose)
    assert one == pytest.approx(p2l_cost(kf, src, pose, associate(src, kf, pose)))
    assert s2ks_cost([kf, kf], src, pose) == pytest.approx(2 * one)
    others = [random_set(rng), random_set(rng)]
    parts = [s2ks_cost([k], src, pose) for k in [kf, *others]]
    assert s2ks_cost([kf, *others], src, pose) == pytest.approx(sum(parts))


# --- gradient ---------------------------------------------------------------------

def test_gradient_zero_at_exact_alignment():
    s = random_set(np.random.default_rng(2))
    corrs = associate_all([s], s, Pose2())
    assert np.allclose(s2ks_gradient([s], s, Pose2(), corrs), 0.0, atol=1e-12)


def test_gradient_hand_derived_translation():
    tgt = sps([[0, 0]], [[0, 1]])
    src = sps([[3, 0.04]], [[0, 1]])
    g = s2ks_gradient([tgt], src, Pose2(), [Correspondence(0, 0)])
    assert g[0] == pytest.approx(0.0, abs=1e-15)
    assert g[1] == pytest.approx(0.04)
    # d/dtheta of the residual is n . (R' mu) = 3 at theta = 0
    assert g[2] == pytest.approx(0.04 * 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    kfs = [random_set(rng), random_set(rng)]
    src = sps(kfs[0].mean + rng.normal(0, 0.2, (80, 2)), kfs[0].normal)
    pose = Pose2(*rng.uniform(-0.2, 0.2, 2), rng.uniform(-0.05, 0.05))
    corrs = associate_all(kfs, src, pose)
    g = s2ks_gradient(kfs, src, pose, corrs)
    x, h = pose.as_array(), 1e-6
    fd = np.array([(s2ks_fixed_cost(kfs, src, Pose2(*(x + h * e)), corrs)
                    - s2ks_fixed_cost(kfs, src, Pose2(*(x - h * e)), corrs)) / (2 * h) for e in np.eye(3)])
    # knee crossings inside the stencil cost at most O(h) per residual
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-4)


# --- solver --------------------------------------------------------------------------

def test_register_input_errors():
    s = random_set(np.random.default_rng(3))
    with pytest.raises(RegistrationInputError):
        register([], s)
    with pytest.raises(RegistrationInputError):
        register([s], SurfacePointSet.empty())


def test_register_already_aligned():
    s = random_set(np.random.default_rng(4))
    r = register([s], s, Pose2())
    assert r.converged and r.final_cost == 0.0
    assert r.pose.isclose(Pose2(), 1e-12)
    assert r.correspondence_count == len(s)


def test_register_without_compatible_normals_keeps_init():
    src = sps(np.column_stack([np.arange(20.0), np.zeros(20)]), np.tile([1.0, 0.0], (20, 1)))
    tgt = sps(src.mean, np.tile([0.0, 1.0], (20, 1)))
    init = Pose2(0.1, 0.0, 0.0)
    r = register([tgt], src, init)
    assert not r.converged and r.correspondence_count == 0
    assert r.pose == init


def _box_surface(world, pose):
    cfg = OdometryConfig()
    scan = raycast_scan(world, pose, RadarConfig(400, 800, 0.175), SimNoise())
    return extract_surface_points(k_strongest_filter(scan, cfg.filter, cfg.min_range, cfg.max_range))


def test_register_recovers_constructed_transform():
    world = WorldModel.from_segments(box_world(-22, -14, 26, 17))
    kf = _box_surface(world, Pose2())
    truth = Pose2(0.3, -0.2, math.radians(2))
    r = register([kf], kf.transformed(truth.inverse()), Pose2())
    assert r.converged and r.tolerance_reached
    assert math.hypot(r.pose.x - truth.x, r.pose.y - truth.y) < 0.02
    assert abs(math.degrees(r.pose.theta - truth.theta)) < 0.1


def test_register_recovers_resimulated_scan():
    # independently sampled scans differ in discretization, not just by the transform
    world = WorldModel.from_segments(box_world(-22, -14, 26, 17))
    kf = _box_surface(world, Pose2())
    rng = np.random.default_rng(5)
    for _ in range(10):
        truth = Pose2(*rng.uniform(-0.35, 0.35, 2), math.radians(rng.uniform(-5, 5)))
        r = register([kf], _box_surface(world, truth), Pose2())
        assert math.hypot(r.pose.x - truth.x, r.pose.y - truth.y) < 0.05
        assert abs(math.degrees(r.pose.theta - truth.theta)) < 0.2


def test_inner_costs_non_increasing():
    rng = np.random.default_rng(6)
    kf = random_set(rng, 150)
    src = sps(Pose2(-0.2, 0.1, -0.03).apply(kf.mean) + rng.normal(0, 0.05, (150, 2)), kf.normal)
    r = register([kf], src, Pose2())
    assert r.history
    for trace in r.history:
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert r.outer_iterations == len(r.history) <= RegConfig().max_outer_iterations


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_registration_equivariance(seed):
    rng = np.random.default_rng(seed)
    kf = random_set(rng, 120)
    truth = Pose2(0.2, -0.1, 0.02)
    src = kf.transformed(truth.inverse())
    init = Pose2(0.05, 0.05, 0.0)
    g = Pose2(*rng.uniform(-10, 10, 2), rng.uniform(-math.pi, math.pi))
    a = register([kf], src, init)
    b = register([kf.transformed(g)], src, g @ init)
    # moving the keyframes by g moves the solution by g
    assert (g @ a.pose).isclose(b.pose, 1e-6)


def test_correspondences_cover_all_keyframes():
    rng = np.random.default_rng(7)
    kfs = [random_set(rng), random_set(rng)]
    src = kfs[1]
    corrs = associate_all(kfs, src, Pose2())
    assert {c.keyframe_index for c in corrs} <= {0, 1}
    assert sum(c.keyframe_index == 1 for c in corrs) == len(src)
