import dataclasses
import math

import numpy as np
import pytest

from oracles import separation_from_dump
from uavsurvey.environment import Geofence, StaticObstacle, WorldState
from uavsurvey.errors import ScenarioError
from uavsurvey.global_planner import PlannerConfig
from uavsurvey.guidance import UavConstraints
from uavsurvey.scenario_file import example_path, load_scenario
from uavsurvey.simulator import InterceptSpec, Scenario, run, surveyed_area, sweep_experiment

FENCE = Geofence(((-300, -300), (300, -300), (300, 300), (-300, 300)), 60.0, 280.0)
FOV = math.radians(60.0)


def _empty(**kw) -> Scenario:
    base = dict(world=WorldState(FENCE), start=np.array([-250.0, -250.0, 120.0]), start_heading=0.0,
                constraints=UavConstraints(l1_dist=40.0), planner=PlannerConfig(k_milestones=2))
    base.update(kw)
    return Scenario(**base)


def _dump(result):
    w = result.world
    statics = [dict(center=o.center, radius=o.radius, height=o.height, spawn_time=o.spawn_time)
               for o in w.static_obstacles]
    dynamics = [dict(waypoints=o.waypoints, speed=o.speed, radius=o.radius, spawn_time=o.spawn_time)
                for o in w.dynamic_obstacles]
    return statics, dynamics


@pytest.fixture(scope="module")
def four_static():
    return run(load_scenario(example_path("four_static")).scenario)


def test_empty_world_two_milestones():
    res = run(_empty())
    rep = res.report
    assert rep.completed and rep.termination == "home"
    assert rep.milestones_total == 2 and rep.milestones_visited == 2
    assert 0.0 < rep.surveyed_fraction <= 1.0
    assert rep.min_separation == math.inf
    assert rep.path_length > 0 and rep.mission_time == pytest.approx(res.rows[-1, 0])


def test_four_static_safe_and_complete(four_static):
    rep = four_static.report
    assert rep.completed
    assert rep.min_separation > 3.0
    assert rep.milestones_visited + rep.milestones_unsafe == rep.milestones_total


def test_separation_matches_offline_checker(four_static):
    statics, dynamics = _dump(four_static)
    offline = separation_from_dump(four_static.rows, statics, dynamics)
    assert four_static.report.min_separation == pytest.approx(offline, abs=1e-6)


def test_vehicle_stays_in_fence(four_static):
    rows = four_static.rows
    fence = four_static.world.geofence
    out = ~fence.contains_xy(rows[:, 1], rows[:, 2])
    if out.any():
        step = 30.0 * 0.1 + 2.0  # airspeed step plus wind
        assert fence.distance_to_boundary(rows[out, 1], rows[out, 2]).max() <= step


def test_determinism():
    sc = _empty(rng_seed=3)
    a, b = run(sc), run(sc)
    assert a.report == b.report
    np.testing.assert_array_equal(a.rows, b.rows)


def test_milestone_status_monotone(four_static):
    seen = {}
    for _, idx, status in four_static.report.visit_log:
        assert idx not in seen, "a milestone changed status twice"
        seen[idx] = status


def test_future_popup_invisible_to_initial_plan():
    late = StaticObstacle((0.0, 0.0), 30.0, 250.0, spawn_time=1e6)
    with_late = _empty(world=WorldState(FENCE, [late]))
    a, b = run(_empty()), run(with_late)
    np.testing.assert_array_equal(a.planned.points, b.planned.points)


def test_intercept_spawns_at_scripted_time():
    sc = load_scenario(example_path("dynamic_intercept")).scenario
    res = run(sc)
    spec = sc.intercepts[0]
    (obst,) = res.world.dynamic_obstacles
    assert obst.spawn_time == spec.spawn_time
    row = res.rows[np.argmin(np.abs(res.rows[:, 0] - spec.spawn_time))]
    assert np.linalg.norm(obst.initial_center - row[1:4]) == pytest.approx(spec.distance, abs=5.0)
    kinds = [d[1] for d in res.report.decision_log]
    assert "local_dodge" in kinds
    assert res.report.min_separation > 3.0


def test_validation():
    with pytest.raises(ScenarioError):
        run(_empty(dt=0.6))
    with pytest.raises(ScenarioError):
        run(_empty(start=np.array([500.0, 0.0, 120.0])))


def test_surveyed_area_disc():
    h = 100.0
    r = h * math.tan(FOV / 2)
    got = surveyed_area([[0.0, 0.0, h]], FOV, FENCE)
    expected = math.pi * r * r / FENCE.area
    # raster error is bounded by the cells cut by the disc edge
    assert got == pytest.approx(expected, abs=2 * math.pi * r * 5.0 / FENCE.area)
    assert got == pytest.approx(expected, rel=0.03)


def test_surveyed_area_full_coverage():
    xs = np.arange(-300.0, 301.0, 20.0)
    pts = np.array([[x, y, 200.0] for x in xs for y in xs])
    assert surveyed_area(pts, FOV, FENCE) == 1.0


def test_surveyed_area_monotone_in_altitude():
    sweep = np.column_stack([np.linspace(-250, 250, 50), np.zeros(50), np.zeros(50)])
    low, high = sweep.copy(), sweep.copy()
    low[:, 2], high[:, 2] = 80.0, 160.0
    assert surveyed_area(high, FOV, FENCE) >= surveyed_area(low, FOV, FENCE)


def test_single_value_sweep_equals_direct_run():
    sc = _empty()
    (row,) = sweep_experiment(sc, "delta", [sc.planner.delta])
    rep = run(sc).report
    assert row["surveyed_fraction"] == rep.surveyed_fraction
    assert row["path_length"] == rep.path_length
    assert row["min_separation"] == rep.min_separation
    assert row["completed"] == 1.0


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ValueError):
        sweep_experiment(_empty(), "wind", [1.0])


def test_sweep_averages_over_seeds():
    sc = _empty()
    rows = sweep_experiment(sc, "k_milestones", [2], seeds=[0, 1])
    direct = [run(dataclasses.replace(sc, rng_seed=s)).report.path_length for s in (0, 1)]
    assert rows[0]["path_length"] == pytest.approx(np.mean(direct))
    assert rows[0]["seeds"] == 2


def test_intercept_spec_in_empty_world_is_dodged():
    sc = _empty(planner=PlannerConfig(k_milestones=3), intercepts=(InterceptSpec(8.0),))
    res = run(sc)
    statics, dynamics = _dump(res)
    assert separation_from_dump(res.rows, statics, dynamics) == pytest.approx(res.report.min_separation, abs=1e-6)
    assert res.report.min_separation > 3.0
