"""Probabilistic roadmap over safe samples with mutual-KNN edges."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from ..environment import OccupancyGrid
from ..errors import PlanningError
from ..guidance import UavConstraints
from ..local_planner.smoothing import segment_is_safe
from .milestones import SafeSample
from .search import AdjacencyGraph


class Roadmap(AdjacencyGraph):
    """Roadmap graph; ``connect`` adds transient nodes such as the current pose."""

    def __init__(self, positions, risks, adjacency, grid: OccupancyGrid, delta: float,
                 constraints: UavConstraints | None, k_knn: int):
        super().__init__(positions, risks, adjacency)
        self.grid = grid
        self.delta = delta
        self.constraints = constraints
        self.k_knn = k_knn
        self._min_run = None
        # every edge passed the climb check when it was added
        self.climb_checked = constraints is not None

    def __len__(self) -> int:
        return len(self.positions)

    def min_edge_run(self) -> float:
        if self._min_run is None:
            self._min_run = super().min_edge_run()
        return self._min_run

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def nearest(self, point) -> int:
        return int(np.argmin(np.linalg.norm(self.positions - np.asarray(point, dtype=float), axis=1)))

    def connect(self, point, risk: float | None = None) -> int:
        """Add ``point`` as a node linked to up to ``k_knn`` nearest visible nodes.

        The point's own cell may be risky (e.g. the vehicle's current pose),
        so the first half cell of each link is not checked.
        """
        p = np.asarray(point, dtype=float)
        order = np.argsort(np.linalg.norm(self.positions - p, axis=1), kind="stable")
        links = []
        for j in order:
            if len(links) >= self.k_knn:
                break
            if np.allclose(self.positions[j], p):
                return int(j)
            if segment_is_safe(p, self.positions[j], self.grid, self.delta, self.constraints, skip_start=True):
                links.append(int(j))
        if not links:
            raise PlanningError(f"point {np.round(p, 1).tolist()} cannot be linked to the roadmap")
        u = len(self.positions)
        self.positions = np.vstack([self.positions, p])
        r = float(self.grid.risk_at(p[None, :])[0]) if risk is None else risk
        self.risks = np.append(self.risks, min(1.0, r))
        self.adjacency.append(links)
        for j in links:
            self.adjacency[j].append(u)
        self._min_run = None
        return u


def _metric_scale(constraints: UavConstraints | None) -> np.ndarray:
    """Stretch z by cot(climb limit) so that near neighbours are also climbable ones."""
    if constraints is None:
        return np.ones(3)
    return np.array([1.0, 1.0, 1.0 / math.tan(constraints.climb_angle_limit())])


def build_prm(samples: list[SafeSample], k_knn: int, grid: OccupancyGrid, delta: float,
              constraints: UavConstraints | None) -> Roadmap:
    """Link each sample to those of its ``k_knn`` nearest neighbours that also list it.

    Neighbours are ranked in a metric with altitude stretched by the inverse
    climb slope, otherwise the climb check would reject most vertical links.
    Edges must stay below risk ``delta`` along the straight segment and
    (with ``constraints``) within the climb limit. Keeping only mutual
    neighbours makes the graph symmetric with at most ``k_knn`` edges per node.
    """
    if not samples:
        raise PlanningError("no samples to build a roadmap from")
    if k_knn < 1:
        raise ValueError("k_knn must be >= 1")
    pos = np.array([s.position for s in samples], dtype=float)
    risks = np.array([s.risk for s in samples], dtype=float)
    n = len(pos)
    k = min(k_knn, n - 1)
    adjacency: list[list[int]] = [[] for _ in range(n)]
    if k >= 1:
        scaled = pos * _metric_scale(constraints)
        _, idx = cKDTree(scaled).query(scaled, k=min(n, 4 * k + 1))
        knn = []
        for i, row in enumerate(idx):
            row = row[(row != i) & (row < n)]
            if constraints is not None:
                d = pos[row] - pos[i]
                ang = np.arctan2(d[:, 2], np.linalg.norm(d[:, :2], axis=1))
                lim = np.where(ang >= 0, constraints.climb_angle_limit(), constraints.descent_angle_limit())
                row = row[np.abs(ang) <= lim + 1e-12]
            knn.append(set(row[:k].tolist()))
        for i in range(n):
            for j in sorted(knn[i]):
                if j > i and i in knn[j] and segment_is_safe(pos[i], pos[j], grid, delta, constraints):
                    adjacency[i].append(j)
                    adjacency[j].append(i)
    for a in adjacency:
        a.sort()
    return Roadmap(pos, risks, adjacency, grid, delta, constraints, k_knn)
