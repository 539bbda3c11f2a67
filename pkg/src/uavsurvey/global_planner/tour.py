"""End-to-end global path: grid, samples, milestones, roadmap, ordered A* legs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..environment import OccupancyGrid, WorldState, build_grid, obstacle_clearance
from ..errors import MilestoneUnreachable, PlanningError
from ..guidance import UavConstraints, bearing
from ..local_planner.dubins import PathNode
from ..local_planner.smoothing import _with_headings, simplify_path
from .milestones import Milestone, estimate_milestone_count, kmedoids, order_milestones, sample_safe_cells
from .roadmap import Roadmap, build_prm
from .search import astar


@dataclass(frozen=True)
class PlannerConfig:
    delta: float = 0.5
    k_milestones: int | str = "auto"
    k_knn: int = 40
    kmedoids_iters: int = 100
    kmedoids_restarts: int = 4
    revisit_k: float = 1000.0
    rng_seed: int = 0
    samples_per_milestone: int = 40
    sample_count: int | None = None
    node_clearance: float = 0.0  # samples closer than this to a known obstacle surface are skipped
    cruise_alt: float = 180.0
    fov: float = math.radians(60.0)
    simplify: bool = True

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.k_knn < 1 or self.kmedoids_iters < 1 or self.samples_per_milestone < 1:
            raise ValueError("counts must be positive")
        if self.k_milestones != "auto" and (not isinstance(self.k_milestones, int) or self.k_milestones < 1):
            raise ValueError("k_milestones must be 'auto' or a positive integer")

    def milestone_count(self, fence_area: float) -> int:
        if self.k_milestones == "auto":
            return estimate_milestone_count(fence_area, self.cruise_alt, self.fov)
        return int(self.k_milestones)


@dataclass
class GlobalPath:
    nodes: list[PathNode]
    milestone_nodes: list[int]          # index into ``nodes`` of each milestone, tour order
    milestones: list[Milestone]         # tour order
    grid: OccupancyGrid
    roadmap: Roadmap
    visit_count: dict[int, int] = field(default_factory=dict)

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes])

    @property
    def length(self) -> float:
        p = self.positions
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0


def _allowed(world: WorldState, t: float, grid: OccupancyGrid, clearance: float):
    if clearance <= 0:
        return None
    obstacles = world.known_obstacles(t)
    if not obstacles:
        return None
    return obstacle_clearance(obstacles, grid.centers(), t) >= clearance


def _route(roadmap: Roadmap, source: np.ndarray, milestones: list[Milestone], constraints: UavConstraints,
           revisit_k: float, start_heading: float | None):
    src = roadmap.connect(source)
    visits: dict[int, int] = {}
    chain = [src]
    marks = []
    direction = None if start_heading is None else np.array([math.sin(start_heading), math.cos(start_heading)])
    for m in milestones:
        try:
            res = astar(roadmap, chain[-1], m.node, constraints, revisit_k, visits, direction)
        except MilestoneUnreachable as exc:
            raise MilestoneUnreachable(m.tour_index, f"milestone {m.tour_index} unreachable: {exc}") from None
        for u in res.path:
            visits[u] = visits.get(u, 0) + 1
        chain.extend(res.path[1:])
        marks.append(len(chain) - 1)
        if len(chain) >= 2:
            direction = roadmap.position(chain[-1])[:2] - roadmap.position(chain[-2])[:2]
    return chain, marks, visits


def plan_tour(world: WorldState, config: PlannerConfig, source, constraints: UavConstraints, t: float = 0.0,
              milestones: list[Milestone] | None = None, start_heading: float | None = None) -> GlobalPath:
    """Global path from ``source`` through every milestone.

    Without ``milestones`` they are extracted by K-medoids over safe samples
    and ordered greedily from ``source``; otherwise the given ones are used
    in the given order (replanning). Headings follow the direction of travel.
    """
    source = np.asarray(source, dtype=float)
    grid = build_grid(world, t, constraints.r_min)
    allowed = _allowed(world, t, grid, config.node_clearance)
    if milestones is None:
        k = config.milestone_count(world.geofence.area)
        count = config.sample_count or config.samples_per_milestone * k
        samples = sample_safe_cells(grid, config.delta, count, config.rng_seed, allowed)
        if k > len(samples):
            raise PlanningError(f"{k} milestones requested but only {len(samples)} safe samples")
        roadmap = build_prm(samples, config.k_knn, grid, config.delta, constraints)
        km = kmedoids([s.position for s in samples], k, config.kmedoids_iters, config.rng_seed,
                      config.kmedoids_restarts)
        pos = np.array([samples[i].position for i in km.medoids])
        order = order_milestones(pos, source)
        milestones = [Milestone(pos[i].copy(), rank, node=int(km.medoids[i])) for rank, i in enumerate(order)]
    else:
        count = config.sample_count or config.samples_per_milestone * max(1, len(milestones))
        samples = sample_safe_cells(grid, config.delta, count, config.rng_seed, allowed)
        roadmap = build_prm(samples, config.k_knn, grid, config.delta, constraints)
        fresh = []
        for m in milestones:
            if grid.risk_at(np.asarray(m.position)[None, :])[0] >= config.delta:
                raise MilestoneUnreachable(m.tour_index, f"milestone {m.tour_index} lies in unsafe space")
            try:
                node = roadmap.connect(m.position)
            except PlanningError:
                raise MilestoneUnreachable(m.tour_index) from None
            fresh.append(Milestone(np.asarray(m.position, dtype=float), m.tour_index, m.status, node))
        milestones = fresh

    chain, marks, visits = _route(roadmap, source, milestones, constraints, config.revisit_k, start_heading)
    pts = np.array([roadmap.position(u) for u in chain])
    keep_idx = list(range(len(chain)))
    if config.simplify and len(chain) > 2:
        keep_idx = simplify_path(pts, grid, config.delta, constraints, set(marks))
    pos_of = {old: new for new, old in enumerate(keep_idx)}
    marks = [pos_of[m] for m in marks]
    pts = pts[keep_idx]
    risks = [min(1.0, max(0.0, float(roadmap.risk(chain[i])))) for i in keep_idx]
    if len(pts) == 1:
        psi = start_heading or 0.0
        nodes = [PathNode(*map(float, pts[0]), psi, constraints.v_cruise, risks[0])]
    else:
        first = start_heading if start_heading is not None else bearing(*(pts[1][:2] - pts[0][:2]))
        last = bearing(*(pts[-1][:2] - pts[-2][:2]))
        nodes = _with_headings(list(pts), first, last, constraints.v_cruise, risks)
    return GlobalPath(nodes, marks, milestones, grid, roadmap, visits)
