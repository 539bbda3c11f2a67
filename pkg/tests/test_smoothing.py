import math

import numpy as np
import pytest

from uavsurvey.environment import DynamicObstacle, Geofence, StaticObstacle, WorldState, build_grid
from uavsurvey.guidance import UavConstraints, wrap_angle
from uavsurvey.local_planner import AvoidanceConfig, PathNode, buffer_radius, dubins_3d, simplify_path, smooth_path, smooth_segment
from uavsurvey.local_planner.smoothing import sample_times

C = UavConstraints()
FENCE = Geofence(((-600, -600), (600, -600), (600, 600), (-600, 600)), 0.0, 300.0)


def _curvature_ok(traj):
    dpsi = np.abs(wrap_angle(np.diff(traj.psi)))
    ds = np.linalg.norm(np.diff(traj.points[:, :2], axis=0), axis=1)
    return bool(np.all(dpsi <= ds / C.r_min * 1.001 + 1e-9))


def test_no_obstacles_identical_to_dubins():
    a, b = PathNode(0.0, -200.0, 100.0, 0.3), PathNode(150.0, 250.0, 120.0, 1.2)
    got = smooth_segment(a, b, WorldState(FENCE), 0.0, C)
    ref = dubins_3d(a, b, C)
    np.testing.assert_array_equal(got.points, ref.points)
    assert got.meta["dodge_points"] == []


def test_popup_obstacle_single_dodge_point():
    obst = StaticObstacle((10.0, 0.0), 32.0, 200.0, spawn_time=5.0)
    world = WorldState(FENCE, [obst])
    a, b = PathNode(0.0, -250.0, 120.0, 0.0), PathNode(0.0, 250.0, 120.0, 0.0)
    before = smooth_segment(a, b, world, 0.0, C)
    assert before.meta["dodge_points"] == []
    after = smooth_segment(a, b, world, 5.0, C)
    assert len(after.meta["dodge_points"]) == 1
    assert obst.clearance(after.points).min() >= 3.0
    r_buff = buffer_radius(obst.radius, C, AvoidanceConfig())
    assert after.length <= 500.0 + math.pi * r_buff
    assert _curvature_ok(after)


def test_clearance_with_margin_and_two_obstacles():
    obstacles = [StaticObstacle((0.0, -60.0), 30.0, 250.0), StaticObstacle((-20.0, 90.0), 28.0, 250.0)]
    world = WorldState(FENCE, obstacles)
    cfg = AvoidanceConfig(guidance_margin=8.0)
    a, b = PathNode(0.0, -300.0, 120.0, 0.0), PathNode(0.0, 300.0, 120.0, 0.0)
    traj = smooth_segment(a, b, world, 0.0, C, cfg)
    for o in obstacles:
        assert o.clearance(traj.points).min() >= 3.0 + 8.0 - 1e-9
    assert _curvature_ok(traj)
    climb = np.arctan2(np.diff(traj.points[:, 2]), np.linalg.norm(np.diff(traj.points[:, :2], axis=0), axis=1))
    assert np.all(np.abs(climb) <= C.climb_angle_limit() + 1e-9)


def test_known_dynamic_obstacle_avoided():
    obst = DynamicObstacle(((0.0, 105.0, 120.0), (0.0, -400.0, 120.0)), 15.0, 30.0)
    world = WorldState(FENCE, dynamic_obstacles=[obst])
    a, b = PathNode(0.0, 0.0, 120.0, 0.0), PathNode(0.0, 400.0, 120.0, 0.0)
    traj = smooth_segment(a, b, world, 0.0, C)
    assert traj.meta["dodge_points"]
    times = sample_times(traj, 0.0, a.v)
    gap = np.linalg.norm(traj.points - obst.positions(times), axis=1) - obst.radius
    assert gap.min() >= 3.0


def test_smooth_path_node_index():
    nodes = [PathNode(0.0, 0.0, 100.0, 0.0), PathNode(0.0, 200.0, 100.0, 0.0), PathNode(200.0, 400.0, 100.0, 1.0)]
    traj = smooth_path(nodes, WorldState(FENCE), 0.0, C)
    for node, idx in zip(nodes, traj.meta["node_index"]):
        np.testing.assert_allclose(traj.points[idx], node.position, atol=1e-9)


def test_simplify_keeps_required_nodes():
    world = WorldState(FENCE)
    grid = build_grid(world, 0.0, 22.0)
    pts = np.array([[x, 0.0, 150.0] for x in np.linspace(-300, 300, 13)])
    assert simplify_path(pts, grid, 0.5, C) == [0, 12]
    assert simplify_path(pts, grid, 0.5, C, keep={5}) == [0, 5, 12]


def test_simplify_respects_obstacles():
    world = WorldState(FENCE, [StaticObstacle((0.0, 0.0), 40.0, 300.0)])
    grid = build_grid(world, 0.0, 22.0)
    pts = np.array([[-300.0, 0.0, 150.0], [-100.0, 200.0, 150.0], [100.0, 200.0, 150.0], [300.0, 0.0, 150.0]])
    idx = simplify_path(pts, grid, 0.5, C)
    assert idx[0] == 0 and idx[-1] == 3 and len(idx) >= 3


def test_smooth_path_ignores_obstacles_not_yet_spawned():
    # the second leg is flown after t=5, but planning at t=0 must not see the pop-up
    obst = StaticObstacle((0.0, 200.0), 30.0, 200.0, spawn_time=5.0)
    world = WorldState(FENCE, [obst])
    nodes = [PathNode(0.0, -250.0, 120.0, 0.0), PathNode(0.0, 0.0, 120.0, 0.0), PathNode(0.0, 400.0, 120.0, 0.0)]
    early = smooth_path(nodes, world, 0.0, C)
    assert early.meta["dodge_points"] == []
    late = smooth_path(nodes, world, 5.0, C)
    assert len(late.meta["dodge_points"]) >= 1
