import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsurvey.decision import (ADJUST_SPEED, CONTINUE, DIVERT, GLOBAL_REPLAN, LOCAL_DODGE, RETURN_HOME,
                                RETURN_TO_LAST_SAFE, PolicyConfig, ThreatAssessment, assess, decide)
from uavsurvey.environment import DynamicObstacle, Geofence, StaticObstacle, WorldState
from uavsurvey.global_planner import UNSAFE, UNVISITED, VISITED, Milestone
from uavsurvey.guidance import UavState

FENCE = Geofence(((-1000, -1000), (1000, -1000), (1000, 1000), (-1000, 1000)), 0.0, 300.0)
CFG = PolicyConfig()
R_BUFF = 33.0


def _north_path(length=1200.0, step=2.0):
    y = np.arange(0.0, length + step, step)
    return np.column_stack([np.zeros_like(y), y, np.full_like(y, 100.0)])


def _r_buff(_):
    return R_BUFF


def _threat(tti=5.0, **kw):
    base = dict(obstacle="o", time_to_intercept=tti, miss_distance=5.0, segment=(10, 20), r_buff=R_BUFF)
    base.update(kw)
    return ThreatAssessment(**base)


def _milestones(*status):
    return [Milestone(np.array([100.0 * i, 0.0, 100.0]), i, s) for i, s in enumerate(status)]


STATE = UavState(np.array([0.0, 0.0, 100.0]), 0.0, v=30.0)


def test_empty_world_no_threats():
    assert assess(WorldState(FENCE), 0.0, _north_path(), 30.0, _r_buff, CFG) == []


def test_crossing_obstacle_ten_seconds_ahead():
    # sphere flying west along y=300 reaches the path at t=10 with the vehicle
    obst = DynamicObstacle(((150.0, 300.0, 100.0), (-150.0, 300.0, 100.0)), 15.0, 20.0, name="x")
    out = assess(WorldState(FENCE, dynamic_obstacles=[obst]), 0.0, _north_path(), 30.0, _r_buff, CFG)
    assert len(out) == 1
    th = out[0]
    assert 0.0 < th.time_to_intercept < 10.0
    # closed-form closest approach: (150-15t, 300-30t) vanishes at t=10
    assert th.miss_distance < R_BUFF
    assert th.miss_distance == pytest.approx(0.0, abs=1.0)
    assert th.ref is obst


def test_parallel_obstacle_at_twice_buffer_is_not_a_threat():
    static = StaticObstacle((2 * R_BUFF, 500.0), 30.0, 250.0)
    mover = DynamicObstacle(((-2 * R_BUFF, 0.0, 100.0), (-2 * R_BUFF, 1200.0, 100.0)), 30.0, 30.0)
    world = WorldState(FENCE, [static], [mover])
    assert assess(world, 0.0, _north_path(), 30.0, _r_buff, CFG) == []


def test_static_obstacle_on_path_segment_and_sorting():
    near = StaticObstacle((0.0, 200.0), 20.0, 250.0, name="near")
    far = StaticObstacle((10.0, 700.0), 20.0, 250.0, name="far")
    out = assess(WorldState(FENCE, [far, near]), 0.0, _north_path(), 30.0, _r_buff, CFG)
    assert [a.obstacle for a in out] == ["near", "far"]
    a = out[0]
    lo, hi = a.segment
    # path enters the protected circle at y = 200 - 33
    assert _north_path()[lo][1] == pytest.approx(200.0 - R_BUFF, abs=2.0)
    assert _north_path()[hi][1] == pytest.approx(200.0 + R_BUFF, abs=2.0)
    assert a.time_to_intercept == pytest.approx((200.0 - R_BUFF) / 30.0, abs=0.1)
    assert a.miss_distance == pytest.approx(0.0, abs=1e-9)


def test_horizon_limits_assessment():
    far = StaticObstacle((0.0, 1100.0), 20.0, 250.0)
    assert assess(WorldState(FENCE, [far]), 0.0, _north_path(), 30.0, _r_buff, CFG) == []


def test_unspawned_obstacle_ignored():
    o = StaticObstacle((0.0, 200.0), 20.0, 250.0, spawn_time=5.0)
    world = WorldState(FENCE, [o])
    assert assess(world, 0.0, _north_path(), 30.0, _r_buff, CFG) == []
    assert len(assess(world, 5.0, _north_path(), 30.0, _r_buff, CFG)) == 1


def test_speed_resolvable_flag():
    # crosses the path well ahead; flying at v_min the vehicle arrives after it has passed
    obst = DynamicObstacle(((300.0, 600.0, 100.0), (-300.0, 600.0, 100.0)), 15.0, 10.0)
    out = assess(WorldState(FENCE, dynamic_obstacles=[obst]), 0.0, _north_path(), 30.0, _r_buff, CFG)
    assert len(out) == 1 and out[0].speed_resolvable


def test_decide_continue_when_clear():
    assert decide([], STATE, _milestones(UNVISITED, UNVISITED), CFG).kind == CONTINUE


def test_decide_return_home_when_done():
    assert decide([], STATE, _milestones(VISITED, UNSAFE), CFG).kind == RETURN_HOME


def test_decide_restores_speed():
    slow = UavState(STATE.position, 0.0, v=24.0)
    a = decide([], slow, _milestones(UNVISITED), CFG)
    assert a.kind == ADJUST_SPEED and a.delta_v == pytest.approx(3.0)


def test_decide_slows_for_distant_resolvable_threat():
    a = decide([_threat(12.0, speed_resolvable=True)], STATE, _milestones(UNVISITED), CFG)
    assert a.kind == ADJUST_SPEED and a.delta_v == pytest.approx(-3.0)


def test_decide_near_threat_not_left_to_speed():
    a = decide([_threat(3.0, speed_resolvable=True, dodge_feasible=True)], STATE, _milestones(UNVISITED), CFG)
    assert a.kind == LOCAL_DODGE


def test_decide_dodge():
    assert decide([_threat(dodge_feasible=True)], STATE, _milestones(UNVISITED), CFG).kind == LOCAL_DODGE


def test_decide_dodge_infeasible_replan_succeeds():
    ms = _milestones(UNVISITED, UNVISITED)
    first = decide([_threat(dodge_feasible=False)], STATE, ms, CFG)
    assert first.kind == GLOBAL_REPLAN and first.milestone == 0
    second = decide([_threat(dodge_feasible=False)], STATE, ms, CFG, replan_ok=True)
    assert second.kind == GLOBAL_REPLAN


def test_decide_divert_to_nearest_unvisited():
    ms = _milestones(VISITED, UNVISITED, UNVISITED, UNVISITED)
    state = UavState(np.array([310.0, 0.0, 100.0]), 0.0)
    a = decide([_threat(dodge_feasible=False)], state, ms, CFG, replan_ok=False)
    assert a.kind == DIVERT and a.milestone == 3


def test_decide_single_other_milestone():
    ms = _milestones(UNVISITED, UNVISITED)
    a = decide([_threat(dodge_feasible=False)], STATE, ms, CFG, replan_ok=False)
    assert a.kind == DIVERT and a.milestone == 1


def test_decide_return_to_last_safe():
    ms = _milestones(VISITED, UNVISITED)
    a = decide([_threat(dodge_feasible=False)], STATE, ms, CFG, replan_ok=False)
    assert a.kind == RETURN_TO_LAST_SAFE


def test_retry_cap_skips_replan():
    ms = _milestones(UNVISITED, UNVISITED)
    a = decide([_threat(dodge_feasible=False)], STATE, ms, CFG, retries=CFG.retry_cap)
    assert a.kind == DIVERT


@pytest.mark.parametrize("kw", [dict(tti_local=9.0), dict(tti_speed=40.0), dict(v_min_frac=0.0),
                                dict(v_max_frac=1.2), dict(speed_quantum=0.0), dict(retry_cap=-1)])
def test_policy_config_validation(kw):
    with pytest.raises(ValueError):
        PolicyConfig(**kw)


threats = st.lists(st.builds(
    _threat, st.floats(0.0, 30.0), speed_resolvable=st.booleans(),
    dodge_feasible=st.sampled_from([None, True, False])), max_size=3).map(
        lambda ts: sorted(ts, key=lambda a: a.time_to_intercept))
statuses = st.lists(st.sampled_from([UNVISITED, VISITED, UNSAFE]), min_size=1, max_size=5)


@settings(max_examples=200, deadline=None)
@given(ts=threats, sts=statuses, v=st.floats(21.0, 30.0), ok=st.sampled_from([None, True, False]),
       retries=st.integers(0, 3))
def test_decide_pure_and_speed_bounded(ts, sts, v, ok, retries):
    ms = _milestones(*sts)
    state = UavState(np.array([50.0, 20.0, 100.0]), 0.3, v=v)
    snapshot = copy.deepcopy((ts, ms))
    a1 = decide(ts, state, ms, CFG, ok, retries)
    a2 = decide(ts, state, ms, CFG, ok, retries)
    assert a1 == a2
    assert [m.status for m in ms] == [m.status for m in snapshot[1]]
    if a1.kind == ADJUST_SPEED:
        assert CFG.v_min - 1e-9 <= v + a1.delta_v <= CFG.v_max + 1e-9
    if a1.kind == DIVERT:
        assert next(m for m in ms if m.tour_index == a1.milestone).status == UNVISITED
