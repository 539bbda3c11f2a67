"""Safe-space sampling, K-medoids milestones and greedy tour ordering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..environment import OccupancyGrid
from ..errors import NoFreeSpace

UNVISITED, VISITED, UNSAFE = "unvisited", "visited", "unsafe"


@dataclass(frozen=True)
class SafeSample:
    position: np.ndarray
    risk: float


@dataclass
class Milestone:
    position: np.ndarray
    tour_index: int
    status: str = UNVISITED
    node: int | None = None  # roadmap node id, when known


@dataclass
class KMedoidsResult:
    medoids: np.ndarray       # indices into the input points
    assignment: np.ndarray    # cluster id (position in ``medoids``) per point
    cost: float
    history: list[float] = field(default_factory=list)


def estimate_milestone_count(fence_area: float, cruise_alt: float, fov: float) -> int:
    """Fence area divided by the camera footprint disc at the cruise altitude."""
    if fence_area <= 0 or cruise_alt <= 0 or not 0 < fov < math.pi:
        raise ValueError("area, altitude must be positive and 0 < fov < pi")
    footprint = math.pi * cruise_alt ** 2 * math.tan(fov / 2.0) ** 2
    return max(1, int(round(fence_area / footprint)))


def sample_safe_cells(grid: OccupancyGrid, delta: float, count: int, seed: int,
                      allowed: np.ndarray | None = None) -> list[SafeSample]:
    """Seeded uniform subset of cell centers whose risk is below ``delta``.

    ``allowed`` optionally masks cells (flat C order) out of the draw.
    """
    risk = grid.risk.ravel()
    ok = risk < delta
    if allowed is not None:
        ok &= np.asarray(allowed, dtype=bool).ravel()
    eligible = np.flatnonzero(ok)
    if eligible.size == 0:
        raise NoFreeSpace(f"no free space under threshold delta={delta}")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(eligible, size=min(count, eligible.size), replace=False))
    centers = grid.center_of(pick)
    return [SafeSample(c, float(risk[i])) for c, i in zip(centers, pick)]


def _cost(d: np.ndarray, medoids) -> float:
    return float(d[:, medoids].min(axis=1).sum())


def _kmedoids_once(d: np.ndarray, k: int, max_iters: int, rng) -> KMedoidsResult:
    n = len(d)
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    history = [_cost(d, medoids)]
    for _ in range(max_iters):
        # alternation: assign, then move each medoid to its cluster's best member
        assign = np.argmin(d[:, medoids], axis=1)
        new = medoids.copy()
        for j in range(k):
            members = np.flatnonzero(assign == j)
            if members.size:
                new[j] = members[np.argmin(d[np.ix_(members, members)].sum(axis=0))]
        new_cost = _cost(d, new)
        if new_cost < history[-1] - 1e-12:
            medoids = new
            history.append(new_cost)
            continue
        # swap phase: best single medoid/non-medoid exchange
        best, best_cost = None, history[-1]
        others = np.setdiff1d(np.arange(n), medoids)
        if others.size == 0:
            break
        for j in range(k):
            rest = np.delete(medoids, j)
            base = d[:, rest].min(axis=1) if rest.size else np.full(n, np.inf)
            costs = np.minimum(base[:, None], d[:, others]).sum(axis=0)
            i = int(np.argmin(costs))
            if costs[i] < best_cost - 1e-12:
                best, best_cost = (j, others[i]), float(costs[i])
        if best is None:
            break
        medoids = medoids.copy()
        medoids[best[0]] = best[1]
        history.append(best_cost)
    assign = np.argmin(d[:, medoids], axis=1)
    return KMedoidsResult(medoids, assign, history[-1], history)


def kmedoids(points, k: int, max_iters: int = 100, seed: int = 0, restarts: int = 4) -> KMedoidsResult:
    """Partition around medoids minimising the summed point-to-medoid distance.

    Each restart alternates assignment and medoid update, then tries single
    swaps once alternation stalls; the objective never increases within a
    run. The best of ``restarts`` seeded runs is returned with its history.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if not 1 <= k <= n:
        raise ValueError(f"K={k} must be between 1 and the sample count {n}")
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        res = _kmedoids_once(d, k, max_iters, rng)
        if best is None or res.cost < best.cost - 1e-12:
            best = res
    return best


def order_milestones(positions, source) -> list[int]:
    """Greedy nearest-unvisited chain from ``source``; ties go to the lower index."""
    pts = np.asarray(positions, dtype=float)
    cur = np.asarray(source, dtype=float)
    left = list(range(len(pts)))
    order = []
    while left:
        dist = np.linalg.norm(pts[left] - cur, axis=1)
        i = left[int(np.argmin(dist))]
        order.append(i)
        left.remove(i)
        cur = pts[i]
    return order
