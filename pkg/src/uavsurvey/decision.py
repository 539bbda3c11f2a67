"""Deterministic replanning policy: threat assessment and tiered action choice."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import DynamicObstacle, WorldState
from .global_planner.milestones import UNVISITED, Milestone
from .guidance import UavState
from .local_planner.smoothing import clearance_profile

CONTINUE = "continue"
ADJUST_SPEED = "adjust_speed"
LOCAL_DODGE = "local_dodge"
GLOBAL_REPLAN = "global_replan"
DIVERT = "divert_to_milestone"
RETURN_TO_LAST_SAFE = "return_to_last_safe"
RETURN_HOME = "return_home"
ACTIONS = (CONTINUE, ADJUST_SPEED, LOCAL_DODGE, GLOBAL_REPLAN, DIVERT, RETURN_TO_LAST_SAFE, RETURN_HOME)


@dataclass(frozen=True)
class PolicyConfig:
    """Thresholds of the tiered policy. None of these values is taken from measured data.

    tti_local: threats closer in time than this are never left to speed changes.
    tti_speed: a speed change is considered only for threats at least this far away.
    horizon: look-ahead window (s) of the assessment.
    """
    tti_local: float = 2.0
    tti_speed: float = 8.0
    horizon: float = 30.0
    miss_margin: float = 0.0
    speed_quantum: float = 3.0
    v_min_frac: float = 0.7
    v_max_frac: float = 1.0
    v_cruise: float = 30.0
    retry_cap: int = 2

    def __post_init__(self):
        if not 0.0 <= self.tti_local < self.tti_speed < self.horizon:
            raise ValueError("thresholds must satisfy 0 <= tti_local < tti_speed < horizon")
        if not 0.0 < self.v_min_frac <= self.v_max_frac <= 1.0:
            raise ValueError("speed fractions must satisfy 0 < min <= max <= 1")
        if self.speed_quantum <= 0 or self.retry_cap < 0:
            raise ValueError("speed quantum must be positive and retry cap non-negative")

    @property
    def v_min(self) -> float:
        return self.v_min_frac * self.v_cruise

    @property
    def v_max(self) -> float:
        return self.v_max_frac * self.v_cruise


@dataclass(frozen=True)
class ThreatAssessment:
    obstacle: str
    time_to_intercept: float
    miss_distance: float
    segment: tuple[int, int]
    r_buff: float
    speed_resolvable: bool = False
    dodge_feasible: bool | None = None
    ref: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PolicyAction:
    kind: str
    delta_v: float = 0.0
    milestone: int | None = None
    reason: str = ""


def _miss(points, times, obst) -> np.ndarray:
    """Distance from the obstacle axis (cylinders) or center (spheres)."""
    return clearance_profile(points, [obst], times)[0] + obst.radius


def assess(world: WorldState, t: float, points: np.ndarray, speed: float, r_buff_of, cfg: PolicyConfig,
           index_offset: int = 0) -> list[ThreatAssessment]:
    """Threats along ``points`` (the path still to fly, starting at the vehicle) within the horizon.

    ``r_buff_of(obst)`` gives the protected radius; an obstacle is a threat
    when the predicted miss distance falls below it plus ``miss_margin``.
    Moving obstacles are tested against their predicted positions and also
    re-tested at the lowest allowed speed (``speed_resolvable``).
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return []
    ds = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(ds)])
    out = []
    for k, obst in enumerate(world.known_obstacles(t)):
        limit = r_buff_of(obst) + cfg.miss_margin
        times = t + s / speed
        window = times <= t + cfg.horizon
        miss = _miss(pts[window], times[window], obst)
        bad = np.flatnonzero(miss < limit)
        if bad.size == 0:
            continue
        first = int(bad[0])
        # contiguous violation run starting at the first bad sample
        run_end = first
        while run_end + 1 < len(miss) and miss[run_end + 1] < limit:
            run_end += 1
        resolvable = False
        if isinstance(obst, DynamicObstacle):
            slow_t = t + s / cfg.v_min
            w2 = slow_t <= t + cfg.horizon
            resolvable = bool(np.all(_miss(pts[w2], slow_t[w2], obst) >= limit))
        out.append(ThreatAssessment(obst.name or f"obstacle {k}", float(times[first] - t),
                                    float(max(0.0, miss.min())), (index_offset + first, index_offset + run_end),
                                    limit, resolvable, ref=obst))
    out.sort(key=lambda a: (a.time_to_intercept, a.obstacle))
    return out


def _current(milestones: list[Milestone]) -> Milestone | None:
    pending = [m for m in milestones if m.status == UNVISITED]
    return min(pending, key=lambda m: m.tour_index) if pending else None


def decide(assessments: list[ThreatAssessment], state: UavState, milestones: list[Milestone], cfg: PolicyConfig,
           replan_ok: bool | None = None, retries: int = 0) -> PolicyAction:
    """Tiered rule over the sorted assessments.

    ``replan_ok`` reports the outcome of a global replan requested earlier in
    this tick (None: not tried). ``retries`` counts replans already spent on
    the current milestone; at the cap the replan tier is skipped.
    """
    current = _current(milestones)
    if not assessments:
        if state.v < cfg.v_max - 1e-9:
            return PolicyAction(ADJUST_SPEED, min(cfg.speed_quantum, cfg.v_max - state.v), reason="path clear, restore speed")
        if current is None:
            return PolicyAction(RETURN_HOME, reason="all milestones visited or unsafe")
        return PolicyAction(CONTINUE, reason="no threat")

    threat = assessments[0]
    if threat.speed_resolvable and threat.time_to_intercept >= cfg.tti_speed and state.v > cfg.v_min + 1e-9:
        return PolicyAction(ADJUST_SPEED, -min(cfg.speed_quantum, state.v - cfg.v_min),
                            reason=f"slow down for {threat.obstacle}")
    if threat.dodge_feasible:
        return PolicyAction(LOCAL_DODGE, reason=f"dodge {threat.obstacle}")
    if replan_ok is None and retries < cfg.retry_cap:
        return PolicyAction(GLOBAL_REPLAN, milestone=None if current is None else current.tour_index,
                            reason=f"dodge infeasible around {threat.obstacle}")
    if replan_ok and retries <= cfg.retry_cap:
        return PolicyAction(GLOBAL_REPLAN, milestone=None if current is None else current.tour_index,
                            reason="replanned path is clear")
    others = [m for m in milestones if m.status == UNVISITED and m is not current]
    if others:
        pos = np.asarray(state.position, dtype=float)
        target = min(others, key=lambda m: (float(np.linalg.norm(np.asarray(m.position) - pos)), m.tour_index))
        return PolicyAction(DIVERT, milestone=target.tour_index, reason="current milestone unsafe")
    return PolicyAction(RETURN_TO_LAST_SAFE, reason="no unvisited safe milestone")
