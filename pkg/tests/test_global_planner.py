import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_simple_path_cost, best_medoid_pair_cost, exhaustive_walk_cost, optimal_open_tour_length
from uavsurvey.environment import Geofence, OccupancyGrid, StaticObstacle, WorldState, build_grid
from uavsurvey.errors import MilestoneUnreachable, NoFreeSpace
from uavsurvey.global_planner import (AdjacencyGraph, Milestone, PlannerConfig, SafeSample, astar, build_prm,
                                      estimate_milestone_count, kmedoids, order_milestones, plan_tour,
                                      revisit_penalty, sample_safe_cells)
from uavsurvey.guidance import UavConstraints

C = UavConstraints()
FENCE = Geofence(((-417.0, -288.0), (417.0, -288.0), (417.0, 288.0), (-417.0, 288.0)), 60.0, 280.0)
FOUR = [StaticObstacle((-200.0, 100.0), 25.0, 200.0), StaticObstacle((0.0, -20.0), 35.0, 250.0),
        StaticObstacle((200.0, 120.0), 28.0, 220.0), StaticObstacle((150.0, -180.0), 30.0, 230.0)]


# ---- milestone count -------------------------------------------------------

def test_milestone_count_examples():
    assert estimate_milestone_count(834 * 577, 180.0, math.radians(60)) == 14
    disc = math.pi * 180.0 ** 2 * math.tan(math.radians(30)) ** 2
    assert estimate_milestone_count(disc, 180.0, math.radians(60)) == 1
    assert estimate_milestone_count(2 * 481218, 180.0, math.radians(60)) == 28
    assert estimate_milestone_count(1.0, 180.0, math.radians(60)) == 1
    with pytest.raises(ValueError):
        estimate_milestone_count(100.0, 180.0, math.pi)


# ---- sampling ---------------------------------------------------------------

def test_sampling_all_free_cells_and_errors():
    grid = build_grid(WorldState(FENCE), 0.0, C.r_min)
    free = int((grid.risk < 1.0).sum())
    got = sample_safe_cells(grid, 1.0, 10 ** 6, seed=1)
    assert len(got) == free
    assert all(FENCE.contains(s.position[None, :])[0] for s in got)
    with pytest.raises(NoFreeSpace, match="no free space"):
        sample_safe_cells(grid, 0.0, 10, seed=1)


def test_sampling_is_seeded():
    grid = build_grid(WorldState(FENCE, FOUR), 0.0, C.r_min)
    a = sample_safe_cells(grid, 0.4, 200, seed=7)
    b = sample_safe_cells(grid, 0.4, 200, seed=7)
    assert [tuple(s.position) for s in a] == [tuple(s.position) for s in b]
    assert all(s.risk < 0.4 for s in a)


# ---- k-medoids --------------------------------------------------------------

def test_kmedoids_each_point_own_medoid():
    pts = np.random.default_rng(0).normal(size=(9, 3))
    res = kmedoids(pts, 9, seed=0)
    assert res.cost == 0.0
    assert sorted(res.medoids.tolist()) == list(range(9))


def test_kmedoids_two_blobs():
    rng = np.random.default_rng(3)
    a = rng.normal(0.0, 1.0, size=(6, 2))
    b = rng.normal(50.0, 1.0, size=(6, 2))
    pts = np.vstack([a, b])
    res = kmedoids(pts, 2, seed=5)
    assert res.assignment[:6].tolist() == [res.assignment[0]] * 6
    assert res.assignment[6:].tolist() == [res.assignment[6]] * 6
    assert res.assignment[0] != res.assignment[6]
    assert res.cost == pytest.approx(best_medoid_pair_cost(pts), abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_kmedoids_monotone_and_optimal_pairs(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, size=(int(rng.integers(4, 13)), 2))
    res = kmedoids(pts, 2, seed=seed)
    assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
    assert res.cost == pytest.approx(best_medoid_pair_cost(pts), abs=1e-9)


def test_kmedoids_rejects_large_k():
    with pytest.raises(ValueError):
        kmedoids(np.zeros((3, 2)), 4)


# ---- tour order -------------------------------------------------------------

def test_order_on_line_and_single():
    assert order_milestones([[3, 0, 0], [1, 0, 0], [2, 0, 0]], [0, 0, 0]) == [1, 2, 0]
    assert order_milestones([[5, 5, 5]], [0, 0, 0]) == [0]
    # tie goes to the lower index
    assert order_milestones([[1, 0, 0], [-1, 0, 0]], [0, 0, 0])[0] == 0


@pytest.mark.parametrize("seed", range(5))
def test_greedy_tour_within_bound(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 500, size=(7, 3))
    src = rng.uniform(0, 500, size=3)
    order = order_milestones(pts, src)
    chain = np.vstack([src, pts[order]])
    length = np.linalg.norm(np.diff(chain, axis=0), axis=1).sum()
    assert sorted(order) == list(range(7))
    assert length <= 2.5 * optimal_open_tour_length(src, pts)


# ---- roadmap ----------------------------------------------------------------

def _flat_grid(risk):
    risk = np.asarray(risk, dtype=float)
    return OccupancyGrid(np.zeros(3), 10.0, risk.copy(), risk)


def test_prm_two_visible_samples():
    grid = _flat_grid(np.zeros((10, 1, 1)))
    s = [SafeSample(np.array([5.0, 5.0, 5.0]), 0.0), SafeSample(np.array([85.0, 5.0, 5.0]), 0.0)]
    rm = build_prm(s, 3, grid, 0.5, C)
    assert rm.adjacency == [[1], [0]]


def test_prm_wall_blocks_edges():
    risk = np.zeros((10, 3, 1))
    risk[5] = 1.0
    grid = _flat_grid(risk)
    s = [SafeSample(grid.center_of(i), 0.0) for i in np.flatnonzero(risk.ravel() < 0.5)]
    rm = build_prm(s, 8, grid, 0.5, C)
    for u, nb in enumerate(rm.adjacency):
        for v in nb:
            assert (rm.positions[u, 0] < 50) == (rm.positions[v, 0] < 50)
            assert u in rm.adjacency[v]
            assert len(nb) <= 8


def test_prm_prunes_steep_edge():
    grid = _flat_grid(np.zeros((10, 1, 10)))
    s = [SafeSample(np.array([5.0, 5.0, 5.0]), 0.0), SafeSample(np.array([45.0, 5.0, 45.0]), 0.0)]
    assert build_prm(s, 1, grid, 0.5, C).adjacency == [[], []]
    steep_ok = C.with_overrides(climb_angle_max=math.radians(50), pitch_max=math.radians(50),
                               pitch_min=math.radians(-50), climb_rate_max=25.0)
    assert build_prm(s, 1, grid, 0.5, steep_ok).adjacency == [[1], [0]]


# ---- A* ---------------------------------------------------------------------

def test_astar_trivial_and_corridor():
    pos = np.array([[0.0, 0, 100], [50, 0, 100], [100, 0, 100], [150, 0, 100]])
    g = AdjacencyGraph(pos, np.zeros(4), [[1], [0, 2], [1, 3], [2]])
    assert astar(g, 2, 2, C).path == [2] and astar(g, 2, 2, C).cost == 0.0
    res = astar(g, 0, 3, C)
    assert res.path == [0, 1, 2, 3] and res.cost == pytest.approx(150.0)


def test_astar_detours_risky_column():
    n = 5
    pos = np.array([[50.0 * i, 50.0 * j, 100.0] for i in range(n) for j in range(n)])
    risk = np.zeros(n * n)
    risk[[2 * n + j for j in range(n - 1)]] = 1000.0  # column x=2 risky except the top cell
    adj = [[] for _ in range(n * n)]
    for i in range(n):
        for j in range(n):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                if 0 <= i + di < n and 0 <= j + dj < n:
                    adj[i * n + j].append((i + di) * n + j + dj)
    g = AdjacencyGraph(pos, risk, adj)
    res = astar(g, 0, (n - 1) * n, None)
    assert 2 * n + (n - 1) in res.path
    assert res.cost == pytest.approx(all_simple_path_cost(pos, adj, risk, 0, (n - 1) * n), abs=1e-9)


def _oracle_feasible(pos, cons):
    lim_up, lim_dn = cons.climb_angle_limit(), cons.descent_angle_limit()

    def ok(prev, cur, nxt):
        dx, dy, dz = pos[nxt] - pos[cur]
        run = math.hypot(dx, dy)
        slope = math.degrees(math.atan2(dz, run))
        if slope > math.degrees(lim_up) + 1e-9 or -slope > math.degrees(lim_dn) + 1e-9:
            return False
        if prev is None:
            return True
        ax, ay = pos[cur][0] - pos[prev][0], pos[cur][1] - pos[prev][1]
        if math.hypot(ax, ay) < 1e-12:
            return True
        if run < 1e-12:
            return False
        turn = abs(math.remainder(math.atan2(dy, dx) - math.atan2(ay, ax), 2 * math.pi))
        return run >= 2 * cons.r_min * math.sin(turn / 2) - 1e-9
    return ok


def random_graph(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    pos = np.column_stack([rng.uniform(0, 120, n), rng.uniform(0, 120, n), rng.uniform(100, 115, n)])
    adj = [[] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.45:
                adj[i].append(j)
                adj[j].append(i)
    risk = rng.uniform(0, 1, n)
    visits = {int(i): int(rng.integers(0, 3)) for i in range(n)}
    return pos, adj, risk, visits


@pytest.mark.parametrize("seed", range(20))
def test_astar_matches_exhaustive(seed):
    pos, adj, risk, visits = random_graph(seed)
    k = 10.0
    node_cost = [risk[i] + revisit_penalty(visits[i], k) for i in range(len(pos))]
    want, _ = exhaustive_walk_cost(pos, adj, node_cost, 0, len(pos) - 1, _oracle_feasible(pos, C))
    g = AdjacencyGraph(pos, risk, adj)
    if math.isinf(want):
        with pytest.raises(MilestoneUnreachable):
            astar(g, 0, len(pos) - 1, C, k, visits)
    else:
        assert astar(g, 0, len(pos) - 1, C, k, visits).cost == pytest.approx(want, abs=1e-9)


def test_revisit_penalty_only_after_first_visit():
    assert revisit_penalty(0, 1000.0) == 0.0
    assert revisit_penalty(1, 1000.0) == pytest.approx(1000.0)
    assert revisit_penalty(3, 1000.0) == pytest.approx(1000.0 * math.e ** 2)


def test_visited_nodes_are_avoided():
    # two equal routes 0-1-3 and 0-2-3; node 1 already visited
    pos = np.array([[0.0, 0, 100], [100, 50, 100], [100, -50, 100], [200, 0, 100]])
    g = AdjacencyGraph(pos, np.zeros(4), [[1, 2], [0, 3], [0, 3], [1, 2]])
    assert astar(g, 0, 3, C, 1000.0, {1: 1}).path == [0, 2, 3]
    assert astar(g, 0, 3, C, 1000.0, {2: 1}).path == [0, 1, 3]


# ---- tour -------------------------------------------------------------------

def test_tour_empty_world_two_milestones():
    cfg = PlannerConfig(k_milestones=2, rng_seed=3)
    src = np.array([-320.0, 0.0, 170.0])  # same layer as the milestones: no climb detour
    gp = plan_tour(WorldState(FENCE), cfg, src, C)
    assert all(m.position[2] == 170.0 for m in gp.milestones)
    ms = [m.position for m in gp.milestones]
    legs = np.linalg.norm(ms[0] - src) + np.linalg.norm(ms[1] - ms[0])
    assert gp.length <= 1.05 * legs
    for m, idx in zip(gp.milestones, gp.milestone_nodes):
        np.testing.assert_allclose(gp.nodes[idx].position, m.position)
    assert gp.milestone_nodes == sorted(gp.milestone_nodes)


def test_tour_four_obstacles_stays_safe():
    cfg = PlannerConfig(delta=0.5, rng_seed=0)
    world = WorldState(FENCE, FOUR)
    gp = plan_tour(world, cfg, (-320.0, 0.0, 126.0), C)
    assert len(gp.milestones) == estimate_milestone_count(FENCE.area, 180.0, math.radians(60))
    p = gp.positions
    for a, b in zip(p[1:-1], p[2:]):
        seg = a + np.linspace(0, 1, 50)[:, None] * (b - a)
        assert np.all(gp.grid.risk_at(seg) < cfg.delta)
    for o in FOUR:
        assert o.clearance(p).min() > 0.0
    assert all(n.risk < cfg.delta for n in gp.nodes[1:])


def test_tour_unreachable_milestone_named():
    cfg = PlannerConfig(delta=0.5)
    world = WorldState(FENCE, FOUR)
    ok = Milestone(np.array([-300.0, -200.0, 126.0]), 0)
    bad = Milestone(np.array([0.0, -20.0, 126.0]), 1)  # inside an obstacle
    with pytest.raises(MilestoneUnreachable) as err:
        plan_tour(world, cfg, (-320.0, 0.0, 126.0), C, milestones=[ok, bad])
    assert err.value.milestone == 1 and "milestone 1" in str(err.value)


def test_tour_is_deterministic():
    cfg = PlannerConfig(delta=0.4, rng_seed=11)
    a = plan_tour(WorldState(FENCE, FOUR), cfg, (-320.0, 0.0, 126.0), C)
    b = plan_tour(WorldState(FENCE, FOUR), cfg, (-320.0, 0.0, 126.0), C)
    np.testing.assert_array_equal(a.positions, b.positions)
