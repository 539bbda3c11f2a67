"""Deterministic time-stepped mission executor and survey metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decision import (ADJUST_SPEED, CONTINUE, DIVERT, GLOBAL_REPLAN, LOCAL_DODGE, RETURN_HOME,
                       RETURN_TO_LAST_SAFE, PolicyAction, PolicyConfig, ThreatAssessment, assess, decide)
from .environment import DynamicObstacle, Geofence, WorldState
from .errors import MilestoneUnreachable, PlanningError, ScenarioError, SimulationError
from .geo_transform import LocalFrame
from .global_planner import UNSAFE, UNVISITED, VISITED, Milestone, PlannerConfig, order_milestones, plan_tour
from .guidance import CALM, PathFollower, UavConstraints, UavState, Wind, step_vehicle
from .local_planner import AvoidanceConfig, PathNode, Trajectory, buffer_radius, dubins_3d, smooth_path, smooth_segment
from .local_planner.evasion import evasive_maneuvers
from .local_planner.smoothing import clearance_profile, sample_times

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "psi", "theta", "v")


@dataclass(frozen=True)
class InterceptSpec:
    """Moving obstacle placed on the vehicle's current path when it appears.

    At ``spawn_time`` it appears at the first point of the remaining path
    that is ``distance`` metres from the vehicle in a straight line, and
    flies straight at the vehicle's position of that instant.
    """
    spawn_time: float
    distance: float = 105.0
    speed: float = 15.0
    radius: float = 30.0
    travel: float = 1500.0
    name: str = "intruder"


@dataclass
class Scenario:
    world: WorldState
    start: np.ndarray
    start_heading: float = 0.0
    constraints: UavConstraints = field(default_factory=UavConstraints)
    wind: Wind = CALM
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    avoidance: AvoidanceConfig = field(default_factory=lambda: AvoidanceConfig(guidance_margin=10.0))
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    dt: float = 0.1
    decision_every: int = 10
    fov: float = math.radians(60.0)
    rng_seed: int = 0
    visit_radius: float = 60.0
    intercepts: tuple[InterceptSpec, ...] = ()
    frame: LocalFrame | None = None
    name: str = "scenario"
    raster: float = 5.0

    def validate(self) -> None:
        if not 0.0 < self.dt <= 0.5:
            raise ScenarioError("dt must lie in (0, 0.5]")
        if self.decision_every < 1:
            raise ScenarioError("decision_every must be >= 1")
        start = np.asarray(self.start, dtype=float)
        if start.shape != (3,) or not self.world.geofence.contains(start[None, :])[0]:
            raise ScenarioError("initial position must lie inside the geofence")
        if not 0.0 < self.fov < math.pi:
            raise ScenarioError("fov must lie in (0, pi)")


@dataclass
class MetricsReport:
    surveyed_fraction: float
    path_length: float
    min_separation: float
    min_separation_time: float
    mission_time: float
    completed: bool
    termination: str
    planned_length: float
    milestones_visited: int
    milestones_unsafe: int
    milestones_total: int
    visit_log: list[tuple[float, int, str]] = field(default_factory=list)
    decision_log: list[tuple[float, str, str, str]] = field(default_factory=list)

    def as_row(self) -> dict:
        return {
            "surveyed_fraction": self.surveyed_fraction, "path_length": self.path_length,
            "min_separation": self.min_separation, "min_separation_time": self.min_separation_time,
            "mission_time": self.mission_time, "completed": int(self.completed), "termination": self.termination,
            "planned_length": self.planned_length, "milestones_visited": self.milestones_visited,
            "milestones_unsafe": self.milestones_unsafe, "milestones_total": self.milestones_total,
        }


@dataclass
class SimulationResult:
    report: MetricsReport
    rows: np.ndarray                 # (N, 7) in TRAJECTORY_COLUMNS order
    separation: np.ndarray           # (N,) min surface distance to obstacles known at each t
    planned: Trajectory              # first smoothed tour
    milestones: list[Milestone]
    world: WorldState                # includes obstacles spawned by intercepts


# ---- metrics ---------------------------------------------------------------

def surveyed_area(points, fov: float, fence: Geofence, cell: float = 5.0) -> float:
    """Fraction of the in-fence ground raster seen by a downward camera along ``points``.

    A cell counts when its center lies within z * tan(fov / 2) of the ground
    projection of any sample (z is height above ground).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0, y0, x1, y1 = fence.bounds
    xs = np.arange(x0 + cell / 2.0, x1, cell)
    ys = np.arange(y0 + cell / 2.0, y1, cell)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    inside = fence.contains_xy(gx, gy)
    total = int(inside.sum())
    if total == 0 or len(pts) == 0:
        return 0.0
    covered = np.zeros_like(inside)
    k = math.tan(fov / 2.0)
    last = None
    for p in pts:
        r = max(0.0, float(p[2])) * k
        if last is not None and abs(r - last[2]) < cell / 4.0 and math.hypot(p[0] - last[0], p[1] - last[1]) < cell / 4.0:
            continue
        last = (p[0], p[1], r)
        i0 = max(0, int(math.floor((p[0] - r - xs[0]) / cell)))
        i1 = min(len(xs), int(math.ceil((p[0] + r - xs[0]) / cell)) + 1)
        j0 = max(0, int(math.floor((p[1] - r - ys[0]) / cell)))
        j1 = min(len(ys), int(math.ceil((p[1] + r - ys[0]) / cell)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        dx = xs[i0:i1, None] - p[0]
        dy = ys[None, j0:j1] - p[1]
        covered[i0:i1, j0:j1] |= dx * dx + dy * dy <= r * r
    return float((covered & inside).sum() / total)


def separation_series(rows: np.ndarray, world: WorldState) -> np.ndarray:
    """Per-sample min over spawned obstacles of the distance to the obstacle surface."""
    t = rows[:, 0]
    pts = rows[:, 1:4]
    out = np.full(len(rows), np.inf)
    for o in world.static_obstacles:
        live = t >= o.spawn_time
        if live.any():
            out[live] = np.minimum(out[live], o.clearance(pts[live]))
    for o in world.dynamic_obstacles:
        live = t >= o.spawn_time
        if live.any():
            d = np.linalg.norm(pts[live] - o.positions(t[live]), axis=1) - o.radius
            out[live] = np.minimum(out[live], d)
    return out


# ---- mission ---------------------------------------------------------------

class _Mission:
    def __init__(self, sc: Scenario):
        sc.validate()
        self.sc = sc
        self.cons = sc.constraints
        self.world = WorldState(sc.world.geofence, list(sc.world.static_obstacles), list(sc.world.dynamic_obstacles))
        self.planner = replace(sc.planner, rng_seed=sc.rng_seed,
                               node_clearance=max(sc.planner.node_clearance,
                                                  sc.avoidance.d_buff + sc.avoidance.guidance_margin))
        self.policy = replace(sc.policy, v_cruise=self.cons.v_cruise)
        self.home = np.asarray(sc.start, dtype=float)
        self.t = 0.0
        self.state = UavState(self.home.copy(), sc.start_heading, 0.0, self.cons.v_cruise)
        self.rows = [self._row()]
        self.decisions: list[tuple[float, str, str, str]] = []
        self.visits: list[tuple[float, int, str]] = []
        self.retries: dict[int, int] = {}
        self.phase = "tour"
        self.pending_intercepts = sorted(sc.intercepts, key=lambda s: s.spawn_time)
        self.known_count = len(self.world.known_obstacles(0.0))
        self.grid = None

    # -- helpers
    def _row(self):
        s = self.state
        return (self.t, *map(float, s.position), float(s.psi), float(s.theta), float(s.v))

    def _r_buff(self, obst) -> float:
        # threats are judged against the same margin the planners keep
        return buffer_radius(obst.radius, self.cons, self.sc.avoidance) + self.sc.avoidance.guidance_margin

    def _states(self) -> str:
        code = {UNVISITED: "u", VISITED: "v", UNSAFE: "x"}
        return " ".join(f"{m.tour_index}:{code[m.status]}" for m in sorted(self.milestones, key=lambda m: m.tour_index))

    def _log(self, action: PolicyAction):
        if action.kind == RETURN_HOME and self.phase == "home" and self.decisions and self.decisions[-1][1] == RETURN_HOME:
            return
        if action.kind != CONTINUE:
            self.decisions.append((round(self.t, 6), action.kind, action.reason, self._states()))

    def _follow(self, traj: Trajectory):
        self.traj = traj
        self.follower = PathFollower(traj.points, self.cons)

    def _pose_node(self) -> PathNode:
        p = self.state.position
        return PathNode(float(p[0]), float(p[1]), float(p[2]), float(self.state.psi), float(self.state.v), 0.0)

    def _smooth(self, nodes: list[PathNode]) -> Trajectory:
        return smooth_path(nodes, self.world, self.t, self.cons, self.sc.avoidance, self.grid)

    # -- planning
    def plan_initial(self):
        gp = plan_tour(self.world, self.planner, self.home, self.cons, 0.0, start_heading=self.sc.start_heading)
        self.grid = gp.grid
        self.milestones = gp.milestones
        self._follow(self._smooth(gp.nodes))
        self.planned = self.traj
        home_leg = float(np.linalg.norm(gp.milestones[-1].position - self.home)) if gp.milestones else 0.0
        self.timeout = 3.0 * (self.traj.length + home_leg) / self.cons.v_cruise
        return gp

    def _route(self, targets: list[Milestone]) -> Trajectory:
        """Fresh plan from the current pose through ``targets`` in order."""
        try:
            gp = plan_tour(self.world, self.planner, self.state.position, self.cons, self.t, milestones=targets,
                           start_heading=self.state.psi)
        except MilestoneUnreachable:
            raise
        except PlanningError:
            if not self.world.known_dynamic(self.t):
                raise
            # a nearby mover can block the vehicle's own cell; route around the
            # static map and leave the mover to local repair
            gp = plan_tour(self._static_world(), self.planner, self.state.position, self.cons, self.t,
                           milestones=targets, start_heading=self.state.psi)
        self.grid = gp.grid
        nodes = gp.nodes
        nodes[0] = self._pose_node()
        try:
            return self._smooth(nodes)
        except PlanningError:
            if not self.world.known_dynamic(self.t):
                raise
            return smooth_path(nodes, self._static_world(), self.t, self.cons, self.sc.avoidance, self.grid)

    def _static_world(self) -> WorldState:
        return WorldState(self.world.geofence, self.world.static_obstacles, [])

    def _pending(self) -> list[Milestone]:
        return sorted([m for m in self.milestones if m.status == UNVISITED], key=lambda m: m.tour_index)

    def _threat_free(self, traj: Trajectory) -> bool:
        return not assess(self.world, self.t, traj.points, self.state.v, self._r_buff, self.policy)

    def _clear(self, traj: Trajectory, required: float) -> bool:
        """Predicted clearance over the look-ahead horizon and horizontal fence containment."""
        times = sample_times(traj, self.t, self.state.v)
        window = times <= self.t + self.policy.horizon
        pts = traj.points[window]
        if not np.all(self.world.geofence.contains_xy(pts[:, 0], pts[:, 1])):
            return False
        obstacles = self.world.known_obstacles(self.t)
        if not obstacles:
            return True
        return bool(np.all(clearance_profile(pts, obstacles, times[window]) >= required))

    def _local_repair(self, threat: ThreatAssessment) -> Trajectory | None:
        """Detour from the current pose back onto the path past the threat.

        The tangent dodge comes first; hard-turn manoeuvres are the fallback
        when the threat is too close for it. Candidates must keep the full
        clearance margin if any can, otherwise half of it, otherwise d_buff.
        """
        pts, psi = self.traj.points, self.traj.psi
        i0 = self.follower.index
        end = threat.segment[1]
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts[end:], axis=0), axis=1))])
        ahead = max(2.0 * threat.r_buff, 2.0 * self.cons.r_min)
        k = end + int(np.searchsorted(s, ahead))
        k = min(max(k, i0 + 1), len(pts) - 1)
        b = PathNode(*map(float, pts[k]), float(psi[k]), float(self.state.v), 0.0)
        tail = Trajectory(pts[k:], psi[k:], self.traj.theta[k:])
        pose = self._pose_node()
        cands = []
        try:
            cands.append(smooth_segment(pose, b, self.world, self.t, self.cons, self.sc.avoidance, self.grid))
        except (PlanningError, ValueError):
            pass
        cands.extend(evasive_maneuvers(pose, b, self.cons))
        joined = []
        for seg in cands:
            new = Trajectory.concat([seg, tail])
            new.meta["dodge_points"] = seg.meta.get("dodge_points", [])
            joined.append(new)
        d_buff, margin = self.sc.avoidance.d_buff, self.sc.avoidance.guidance_margin
        for required in (d_buff + margin, d_buff + margin / 2.0, d_buff):
            for new in joined:
                if self._clear(new, required):
                    return new
        return None

    def _guard(self):
        """After a reroute, repair the new path at once if it already runs into a threat."""
        threats = assess(self.world, self.t, self.traj.points, self.state.v, self._r_buff, self.policy)
        if threats and not threats[0].speed_resolvable:
            repair = self._local_repair(threats[0])
            if repair is not None:
                self._log(PolicyAction(LOCAL_DODGE, reason=f"dodge {threats[0].obstacle} on new route"))
                self._follow(repair)

    # -- events
    def _spawn(self, spec: InterceptSpec):
        pts = self.traj.points[self.follower.index:]
        # first path point at least ``distance`` away in a straight line
        far = np.linalg.norm(pts - self.state.position, axis=1)
        hits = np.flatnonzero(far >= spec.distance)
        j = int(hits[0]) if hits.size else int(np.argmax(far))
        p0 = pts[j].copy()
        toward = self.state.position - p0
        n = float(np.linalg.norm(toward))
        u = toward / n if n > 1e-9 else np.array([0.0, -1.0, 0.0])
        self.world.dynamic_obstacles.append(
            DynamicObstacle((tuple(p0), tuple(p0 + u * spec.travel)), spec.speed, spec.radius, spec.spawn_time, spec.name))

    def _decision_tick(self):
        threats = assess(self.world, self.t, self.traj.points[self.follower.index:], self.state.v, self._r_buff,
                         self.policy, self.follower.index)
        repair = None
        if threats:
            th = threats[0]
            if not (th.speed_resolvable and th.time_to_intercept >= self.policy.tti_speed):
                repair = self._local_repair(th)
                threats[0] = replace(th, dodge_feasible=repair is not None)
        current = next(iter(self._pending()), None)
        retries = self.retries.get(current.tour_index, 0) if current else 0
        action = decide(threats, self.state, self.milestones, self.policy, None, retries)
        if action.kind == ADJUST_SPEED and action.delta_v > 0 and assess(
                self.world, self.t, self.traj.points[self.follower.index:], self.policy.v_max, self._r_buff,
                self.policy):
            # restoring speed would bring the threat back: hold the slower speed
            action = PolicyAction(CONTINUE, reason="hold reduced speed")
        if action.kind == GLOBAL_REPLAN:
            key = current.tour_index if current else -1
            self.retries[key] = self.retries.get(key, 0) + 1
            new = None
            try:
                targets = self._pending() if self.phase == "tour" else [Milestone(self.home, -1)]
                new = self._route(targets) if targets else None
            except PlanningError:
                new = None
            ok = new is not None and self._threat_free(new)
            action = decide(threats, self.state, self.milestones, self.policy, ok, retries)
            self._log(action)
            if action.kind == GLOBAL_REPLAN:
                self._follow(new)
                return
            self._apply(action, None)
            return
        self._log(action)
        self._apply(action, repair)

    def _apply(self, action: PolicyAction, repair: Trajectory | None):
        kind = action.kind
        if kind == ADJUST_SPEED:
            v = min(self.policy.v_max, max(self.policy.v_min, self.state.v + action.delta_v))
            self.state = replace(self.state, v=v)
        elif kind == LOCAL_DODGE and repair is not None:
            self._follow(repair)
        elif kind in (DIVERT, RETURN_TO_LAST_SAFE):
            cur = next(iter(self._pending()), None)
            if cur is not None:
                cur.status = UNSAFE
                self.visits.append((round(self.t, 6), cur.tour_index, UNSAFE))
            if kind == DIVERT:
                first = next(m for m in self.milestones if m.tour_index == action.milestone)
                rest = [m for m in self._pending() if m is not first]
                order = order_milestones([m.position for m in rest], first.position) if rest else []
                self._reroute([first] + [rest[i] for i in order])
            else:
                safe = [m for m in self.milestones if m.status == VISITED]
                target = safe[-1].position if safe else self.home
                self._reroute([Milestone(np.asarray(target, dtype=float), -2)])
        elif kind == RETURN_HOME and self.phase == "tour":
            self.phase = "home"
            self._reroute([Milestone(self.home, -1)])

    def _reroute(self, targets: list[Milestone]):
        """Route through ``targets``; milestones that cannot be reached are marked unsafe."""
        while targets:
            try:
                self._follow(self._route(targets))
                self._guard()
                return
            except PlanningError as exc:
                bad = getattr(exc, "milestone", None)
                hit = [m for m in targets if m.tour_index == bad and m.tour_index >= 0]
                if not hit:
                    break
                hit[0].status = UNSAFE
                self.visits.append((round(self.t, 6), hit[0].tour_index, UNSAFE))
                targets = [m for m in targets if m is not hit[0]]
        # last resort: straight Dubins leg home
        goal = PathNode(*map(float, self.home), float(self.state.psi), float(self.state.v), 0.0)
        self.phase = "home"
        self._follow(dubins_3d(self._pose_node(), goal, self.cons))
        self._guard()

    # -- main loop
    def run(self) -> str:
        self.plan_initial()
        try:
            return self._fly()
        except PlanningError as exc:
            raise SimulationError(f"t={self.t:.1f} s: {exc}") from exc

    def _fly(self) -> str:
        sc = self.sc
        step = 0
        while True:
            t_next = self.t + sc.dt
            while self.pending_intercepts and self.pending_intercepts[0].spawn_time <= t_next + 1e-9:
                self._spawn(self.pending_intercepts.pop(0))
            a_cmd, climb_cmd, _ = self.follower.command(self.state, sc.wind, sc.dt)
            self.state = step_vehicle(self.state, a_cmd, climb_cmd, sc.wind, sc.dt, self.cons)
            step += 1
            self.t = step * sc.dt
            self.rows.append(self._row())
            pos = self.state.position
            for m in self.milestones:
                if m.status == UNVISITED and np.linalg.norm(pos - m.position) <= sc.visit_radius:
                    m.status = VISITED
                    self.visits.append((round(self.t, 6), m.tour_index, VISITED))
            if self.phase == "home" and np.linalg.norm(pos[:2] - self.home[:2]) <= sc.visit_radius:
                return "home"
            if self.t >= self.timeout:
                return "timeout"
            known = len(self.world.known_obstacles(self.t))
            event = known != self.known_count
            self.known_count = known
            if event or step % sc.decision_every == 0:
                self._decision_tick()
            if self.follower.done(pos, sc.visit_radius) and self.phase == "tour" and self._pending():
                # tour path ended with milestones missed: route to them again
                self._reroute(self._pending())
            elif self.follower.done(pos, sc.visit_radius) and self.phase == "tour":
                self._log(PolicyAction(RETURN_HOME, reason="tour complete"))
                self._apply(PolicyAction(RETURN_HOME, reason="tour complete"), None)


def plan_mission(scenario: Scenario):
    """Initial global tour and its smoothed trajectory, exactly as ``run`` starts with."""
    mission = _Mission(scenario)
    gp = mission.plan_initial()
    return gp, mission.planned


def run(scenario: Scenario) -> SimulationResult:
    """Plan, fly and score one mission; identical inputs give identical outputs."""
    mission = _Mission(scenario)
    termination = mission.run()
    rows = np.array(mission.rows, dtype=float)
    sep = separation_series(rows, mission.world)
    i = int(np.argmin(sep)) if np.isfinite(sep).any() else 0
    ms = mission.milestones
    report = MetricsReport(
        surveyed_fraction=surveyed_area(rows[:, 1:4], scenario.fov, scenario.world.geofence, scenario.raster),
        path_length=float(np.linalg.norm(np.diff(rows[:, 1:4], axis=0), axis=1).sum()),
        min_separation=float(sep[i]) if np.isfinite(sep).any() else math.inf,
        min_separation_time=float(rows[i, 0]) if np.isfinite(sep).any() else math.nan,
        mission_time=float(rows[-1, 0]),
        completed=termination == "home",
        termination=termination,
        planned_length=float(mission.planned.length),
        milestones_visited=sum(m.status == VISITED for m in ms),
        milestones_unsafe=sum(m.status == UNSAFE for m in ms),
        milestones_total=len(ms),
        visit_log=mission.visits,
        decision_log=mission.decisions,
    )
    return SimulationResult(report, rows, sep, mission.planned, ms, mission.world)


SWEEPABLE = {"delta": "delta", "k_milestones": "k_milestones"}


def sweep_experiment(base: Scenario, param: str, values, seeds=None) -> list[dict]:
    """One row per value of ``param`` (delta or k_milestones), in the given order.

    With ``seeds`` each value is run once per seed and the metrics are averaged;
    ``completed`` is then the fraction of completed runs.
    """
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose from {sorted(SWEEPABLE)}")
    seeds = [base.rng_seed] if seeds is None else [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must not be empty")
    out = []
    for v in values:
        v = int(v) if param == "k_milestones" else float(v)
        reps = []
        for seed in seeds:
            sc = replace(base, rng_seed=seed, planner=replace(base.planner, **{SWEEPABLE[param]: v}))
            reps.append(run(sc).report)
        out.append({"param": param, "value": v, "seeds": len(seeds),
                    "surveyed_fraction": float(np.mean([r.surveyed_fraction for r in reps])),
                    "path_length": float(np.mean([r.path_length for r in reps])),
                    "min_separation": float(np.mean([r.min_separation for r in reps])),
                    "completed": float(np.mean([float(r.completed) for r in reps]))})
    return out
