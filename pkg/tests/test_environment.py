import math

import numpy as np
import pytest

from uavsurvey.environment import (
    DynamicObstacle,
    Geofence,
    StaticObstacle,
    WorldState,
    build_grid,
    collision_risk,
    global_score,
    grid_dims,
    local_score,
    obstacle_position,
)
from uavsurvey.errors import ScenarioError


def square_fence(side=400.0, alt_min=0.0, alt_max=200.0):
    return Geofence(((0.0, 0.0), (side, 0.0), (side, side), (0.0, side)), alt_min, alt_max)


def test_global_score_inside_obstacle():
    obst = StaticObstacle((0.0, 0.0), 10.0, 50.0)
    assert global_score([[1.0, 2.0, 10.0]], [obst])[0] == 1.0


def test_global_score_single_obstacle_values():
    obst = StaticObstacle((0.0, 0.0), 10.0, 50.0)
    assert global_score([[12.0, 0.0, 10.0]], [obst])[0] == pytest.approx(0.5)
    assert global_score([[10.5, 0.0, 10.0]], [obst])[0] == 1.0


def test_global_score_empty_world():
    assert global_score([[3.0, 4.0, 5.0]], [])[0] == 0.0


def test_global_score_mean_over_obstacles():
    a = StaticObstacle((0.0, 0.0), 5.0, 50.0)
    b = StaticObstacle((100.0, 0.0), 5.0, 50.0)
    # clearances 5 and 85
    s = global_score([[10.0, 0.0, 10.0]], [a, b])[0]
    assert s == pytest.approx((1 / 5 + 1 / 85) / 2)


def test_cylinder_clearance_above_top():
    obst = StaticObstacle((0.0, 0.0), 10.0, 50.0)
    assert obst.clearance([[0.0, 0.0, 60.0]])[0] == pytest.approx(10.0)
    assert obst.clearance([[13.0, 0.0, 54.0]])[0] == pytest.approx(5.0)
    assert obst.clearance([[13.0, 0.0, 40.0]])[0] == pytest.approx(3.0)


def test_global_score_outside_fence():
    fence = square_fence()
    assert global_score([[-5.0, 10.0, 10.0]], [], geofence=fence)[0] == 1.0
    assert global_score([[5.0, 10.0, 250.0]], [], geofence=fence)[0] == 1.0


def test_local_score_examples():
    g = np.zeros((3, 3, 3))
    assert local_score(g)[1, 1, 1] == 0.0
    g[1, 1, 1] = 1.0
    assert local_score(g)[1, 1, 1] == pytest.approx(1 / 27)
    corner = local_score(np.zeros((4, 4, 4)))[0, 0, 0]
    assert corner == pytest.approx(19 / 27)


def test_collision_risk_is_max():
    assert collision_risk(0.3, 0.7) == 0.7
    assert collision_risk(1.0, 0.2) == 1.0


def test_grid_dims_reference_volume():
    assert grid_dims((834.0, 577.0, 300.0), 44.0) == (19, 14, 7)


def test_degenerate_fence_rejected():
    with pytest.raises(ScenarioError):
        Geofence(((0, 0), (10, 0)), 0, 100)
    with pytest.raises(ScenarioError):
        Geofence(((0, 0), (10, 0), (20, 0)), 0, 100)
    with pytest.raises(ScenarioError):
        Geofence(((0, 0), (10, 10), (10, 0), (0, 10)), 0, 100)
    with pytest.raises(ScenarioError):
        Geofence(((0, 0), (10, 0), (10, 10)), 100, 100)


def test_empty_world_grid():
    world = WorldState(square_fence(440.0, 0.0, 220.0))
    grid = build_grid(world, 0.0, 22.0)
    assert grid.dims == (10, 10, 5)
    assert np.all(grid.risk[1:-1, 1:-1, 1:-1] == 0.0)
    assert grid.risk[0, 5, 2] == pytest.approx(9 / 27)
    assert grid.risk[0, 0, 0] == pytest.approx(19 / 27)


def _brute_force_risk(fence, obstacles, dims, origin, res):
    """Cell-by-cell reference written with plain loops."""
    nx, ny, nz = dims
    g = np.zeros(dims)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                cx = origin[0] + (i + 0.5) * res
                cy = origin[1] + (j + 0.5) * res
                cz = origin[2] + (k + 0.5) * res
                inside = fence.contains_xy(cx, cy) and fence.alt_min <= cz <= fence.alt_max
                if not inside:
                    g[i, j, k] = 1.0
                    continue
                hit = False
                total = 0.0
                for o in obstacles:
                    # nearest point of the cell box to the axis
                    nxp = min(max(o.center[0], cx - res / 2), cx + res / 2)
                    nyp = min(max(o.center[1], cy - res / 2), cy + res / 2)
                    if math.hypot(nxp - o.center[0], nyp - o.center[1]) <= o.radius and cz - res / 2 <= o.height:
                        hit = True
                    rho = math.hypot(cx - o.center[0], cy - o.center[1])
                    if cz <= o.height:
                        gap = rho - o.radius
                    elif rho <= o.radius:
                        gap = cz - o.height
                    else:
                        gap = math.hypot(rho - o.radius, cz - o.height)
                    if gap <= 0:
                        hit = True
                    else:
                        total += 1.0 / gap
                g[i, j, k] = 1.0 if hit else min(1.0, total / len(obstacles))
    risk = np.zeros(dims)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                acc = 0.0
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        for dk in (-1, 0, 1):
                            a, b, c = i + di, j + dj, k + dk
                            if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                                acc += g[a, b, c]
                            else:
                                acc += 1.0
                risk[i, j, k] = max(g[i, j, k], acc / 27.0)
    return risk


def test_full_grid_matches_brute_force():
    res = 20.0
    fence = Geofence(((0, 0), (400, 0), (400, 400), (0, 400)), 0.0, 200.0)
    obstacles = [
        StaticObstacle((100.0, 120.0), 25.0, 120.0),
        StaticObstacle((260.0, 300.0), 35.0, 80.0),
        StaticObstacle((310.0, 90.0), 18.0, 150.0),
    ]
    world = WorldState(fence, obstacles)
    grid = build_grid(world, 0.0, res / 2)
    assert grid.dims == (20, 20, 10)
    expected = _brute_force_risk(fence, obstacles, grid.dims, grid.origin, res)
    np.testing.assert_allclose(grid.risk, expected, rtol=0, atol=1e-12)


def test_build_grid_deterministic_and_bounded():
    fence = Geofence(((0, 0), (500, 40), (460, 420), (20, 380)), 20.0, 250.0)
    world = WorldState(fence, [StaticObstacle((200.0, 200.0), 30.0, 100.0)])
    a = build_grid(world, 0.0, 22.0)
    b = build_grid(world, 0.0, 22.0)
    assert np.array_equal(a.risk, b.risk)
    assert a.risk.min() >= 0.0 and a.risk.max() <= 1.0
    assert np.all(a.risk >= a.global_scores)
    assert np.all(local_score(a.global_scores) >= a.global_scores / 27)


def test_obstacle_cells_and_radial_monotonicity():
    fence = square_fence(880.0, 0.0, 220.0)
    obst = StaticObstacle((440.0, 440.0), 30.0, 300.0)
    grid = build_grid(WorldState(fence, [obst]), 0.0, 22.0)
    centers = grid.centers()
    lo, hi = centers - 22.0, centers + 22.0
    overlap = obst.overlaps_boxes(lo, hi).reshape(grid.dims)
    assert np.all(grid.risk[overlap] == 1.0)
    # walk east along the middle row at mid altitude, away from the obstacle
    j = int((440.0 - grid.origin[1]) // grid.resolution)
    row = grid.risk[:, j, 2]
    i0 = int((440.0 - grid.origin[0]) // grid.resolution)
    east = row[i0:-1]
    assert east[0] == 1.0
    assert np.all(np.diff(east) <= 1e-12)


def test_dynamic_obstacle_position():
    d = DynamicObstacle(((0.0, 0.0, 100.0), (300.0, 0.0, 100.0)), speed=15.0, radius=30.0, spawn_time=5.0)
    np.testing.assert_allclose(obstacle_position(d, 5.0), d.initial_center)
    np.testing.assert_allclose(obstacle_position(d, 6.0), [15.0, 0.0, 100.0])
    np.testing.assert_allclose(obstacle_position(d, 500.0), [300.0, 0.0, 100.0])
    with pytest.raises(ValueError):
        obstacle_position(d, 4.0)


def test_world_hides_future_obstacles():
    fence = square_fence()
    later = StaticObstacle((200.0, 200.0), 20.0, 100.0, spawn_time=30.0)
    world = WorldState(fence, [StaticObstacle((50.0, 50.0), 10.0, 50.0), later])
    assert later not in world.known_obstacles(29.9)
    assert later in world.known_obstacles(30.0)
    g0 = build_grid(world, 0.0, 22.0)
    g1 = build_grid(world, 30.0, 22.0)
    assert g1.risk.sum() > g0.risk.sum()


def test_dynamic_obstacle_enters_grid_at_current_position():
    fence = square_fence(440.0, 0.0, 220.0)
    d = DynamicObstacle(((100.0, 220.0, 110.0), (340.0, 220.0, 110.0)), 10.0, 20.0)
    world = WorldState(fence, dynamic_obstacles=[d])
    g0 = build_grid(world, 0.0, 22.0)
    g20 = build_grid(world, 20.0, 22.0)
    assert g0.risk_at([[100.0, 220.0, 110.0]])[0] == 1.0
    assert g20.risk_at([[300.0, 220.0, 110.0]])[0] == 1.0
    assert g20.risk_at([[100.0, 220.0, 110.0]])[0] < 1.0
