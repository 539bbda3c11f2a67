"""A* over roadmaps and raw occupancy grids with risk and revisitation surcharges."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from ..environment import OccupancyGrid
from ..errors import MilestoneUnreachable
from ..guidance import UavConstraints


class SearchGraph(Protocol):
    def neighbors(self, u: int) -> Iterable[int]: ...
    def position(self, u: int) -> np.ndarray: ...
    def risk(self, u: int) -> float: ...
    def min_edge_run(self) -> float: ...


@dataclass
class SearchResult:
    path: list[int]
    cost: float
    expansions: int


def revisit_penalty(visits: int, k: float) -> float:
    """k * e^(V-1), charged only on nodes already visited at least once."""
    return k * math.exp(visits - 1) if visits >= 1 else 0.0


def turn_feasible(u_dir, p, q, r_min: float) -> bool:
    """Horizontal run of p->q must be at least the chord needed to turn from ``u_dir``."""
    w = np.asarray(q, dtype=float)[:2] - np.asarray(p, dtype=float)[:2]
    run = float(np.linalg.norm(w))
    un = 0.0 if u_dir is None else float(np.linalg.norm(u_dir))
    if un < 1e-12:
        return True
    if run < 1e-12:
        return False
    cos_t = max(-1.0, min(1.0, float(np.dot(u_dir, w)) / (un * run)))
    theta = math.acos(cos_t)
    return run >= 2.0 * r_min * math.sin(theta / 2.0) - 1e-9


def climb_feasible(p, q, constraints: UavConstraints) -> bool:
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    ang = math.atan2(d[2], float(np.linalg.norm(d[:2])))
    lim = constraints.climb_angle_limit() if ang >= 0 else constraints.descent_angle_limit()
    return abs(ang) <= lim + 1e-12


def astar(graph: SearchGraph, start: int, goal: int, constraints: UavConstraints | None = None,
          revisit_k: float = 1000.0, visit_count: dict[int, int] | None = None,
          start_direction=None) -> SearchResult:
    """Cheapest start->goal walk.

    Cost of a move u->v is |u v| + risk(v) + revisit_penalty(V(v)); the
    guidance term is the straight-line distance to the goal, admissible
    because surcharges are non-negative. With ``constraints`` every move
    must respect the climb limit and, given the arrival direction, the
    discrete turn test; states are (node, predecessor) wherever a node has
    an out-edge short enough for the turn test to bite, plain nodes elsewhere.
    """
    visits = visit_count if visit_count is not None else {}
    goal_pos = graph.position(goal)
    if start == goal:
        return SearchResult([start], 0.0, 0)

    r_min = constraints.r_min if constraints is not None else 0.0
    turn_free = constraints is None or graph.min_edge_run() >= 2.0 * r_min - 1e-9
    short_cache: dict[int, bool] = {}

    def needs_pred(v: int) -> bool:
        # the arrival direction only matters at nodes with an out-edge shorter than the turn chord
        if turn_free:
            return False
        if v not in short_cache:
            pv = graph.position(v)[:2]
            nb = [w for w, _ in _edges(graph, v)]
            runs = np.linalg.norm(np.array([graph.position(w)[:2] for w in nb]) - pv, axis=1) if nb else []
            short_cache[v] = bool(np.any(np.asarray(runs) < 2.0 * r_min - 1e-9))
        return short_cache[v]

    check_climb = not getattr(graph, "climb_checked", False)
    h = lambda u: float(np.linalg.norm(graph.position(u) - goal_pos))
    tie = itertools.count()
    s0 = (start, -1)
    g = {s0: 0.0}
    parent: dict = {s0: None}
    heap = [(h(start), next(tie), s0)]
    closed = set()
    expansions = 0
    while heap:
        _, _, state = heapq.heappop(heap)
        if state in closed:
            continue
        closed.add(state)
        u, pred = state
        if u == goal:
            path = []
            while state is not None:
                path.append(state[0])
                state = parent[state]
            return SearchResult(path[::-1], g[(u, pred)], expansions)
        expansions += 1
        pu = graph.position(u)
        check_turn = not turn_free and needs_pred(u)
        if check_turn:
            if pred >= 0:
                arrive = pu[:2] - graph.position(pred)[:2]
            elif start_direction is not None:
                arrive = np.asarray(start_direction, dtype=float)[:2]
            else:
                arrive = None
        for v, length in _edges(graph, u):
            if constraints is not None:
                pv = graph.position(v)
                if check_climb and not climb_feasible(pu, pv, constraints):
                    continue
                if check_turn and not turn_feasible(arrive, pu, pv, r_min):
                    continue
            nxt = (v, u if needs_pred(v) else -1)
            if nxt in closed:
                continue
            cost = g[state] + length + graph.risk(v) + revisit_penalty(visits.get(v, 0), revisit_k)
            if cost < g.get(nxt, math.inf):
                g[nxt] = cost
                parent[nxt] = state
                heapq.heappush(heap, (cost + h(v), next(tie), nxt))
    raise MilestoneUnreachable(goal, f"node {goal} unreachable from node {start}")


def _edges(graph, u):
    if hasattr(graph, "edges"):
        return graph.edges(u)
    pu = graph.position(u)
    return [(v, float(np.linalg.norm(graph.position(v) - pu))) for v in graph.neighbors(u)]


class AdjacencyGraph:
    """Explicit graph from positions, risks and adjacency lists."""

    def __init__(self, positions, risks, adjacency):
        self.positions = np.asarray(positions, dtype=float)
        self.risks = np.asarray(risks, dtype=float)
        self.adjacency = [list(a) for a in adjacency]

    def neighbors(self, u):
        return self.adjacency[u]

    def edges(self, u):
        nb = self.adjacency[u]
        if not nb:
            return []
        d = np.linalg.norm(self.positions[nb] - self.positions[u], axis=1)
        return list(zip(nb, d.tolist()))

    def position(self, u):
        return self.positions[u]

    def risk(self, u):
        return float(self.risks[u])

    def min_edge_run(self) -> float:
        runs = [np.linalg.norm(self.positions[u, :2] - self.positions[v, :2])
                for u, nb in enumerate(self.adjacency) for v in nb]
        return float(min(runs)) if runs else math.inf


class GridGraph:
    """Implicit 26-connected graph over grid cells whose risk is below ``delta``."""

    _OFFSETS = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]

    def __init__(self, grid: OccupancyGrid, delta: float):
        self.grid = grid
        self.delta = delta
        self.dims = grid.dims
        self._risk = grid.risk.ravel()
        self._centers = grid.centers()

    def cell(self, point) -> int:
        i = self.grid.index_of(point)[0]
        if np.any(i < 0) or np.any(i >= np.array(self.dims)):
            raise ValueError("point outside grid")
        return int(np.ravel_multi_index(tuple(i), self.dims))

    def neighbors(self, u):
        nx, ny, nz = self.dims
        i, rem = divmod(u, ny * nz)
        j, k = divmod(rem, nz)
        out = []
        for di, dj, dk in self._OFFSETS:
            a, b, c = i + di, j + dj, k + dk
            if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                v = (a * ny + b) * nz + c
                if self._risk[v] < self.delta:
                    out.append(v)
        return out

    def position(self, u):
        return self._centers[u]

    def risk(self, u):
        return float(self._risk[u])

    def min_edge_run(self) -> float:
        # pure vertical moves have zero horizontal run
        return 0.0
