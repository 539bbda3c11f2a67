"""World model and the 3D collision-risk occupancy grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ScenarioError


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    def on_segment(a, b, c):
        return min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12 and min(a[1], b[1]) - 1e-12 <= c[
            1
        ] <= max(a[1], b[1]) + 1e-12

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_segment(p1, p2, q1):
        return True
    if o2 == 0 and on_segment(p1, p2, q2):
        return True
    if o3 == 0 and on_segment(q1, q2, p1):
        return True
    if o4 == 0 and on_segment(q1, q2, p2):
        return True
    return False


def points_in_polygon(x, y, boundary: np.ndarray) -> np.ndarray:
    """Even-odd ray casting, vectorised over the query points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    n = len(boundary)
    for i in range(n):
        x1, y1 = boundary[i]
        x2, y2 = boundary[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < x_at)
    return inside


@dataclass(frozen=True)
class Geofence:
    boundary: tuple[tuple[float, float], ...]
    alt_min: float
    alt_max: float

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.boundary)
        object.__setattr__(self, "boundary", pts)
        if len(pts) < 3:
            raise ScenarioError(f"geofence boundary needs at least 3 vertices, got {len(pts)}")
        if not self.alt_min < self.alt_max:
            raise ScenarioError("geofence alt_min must be below alt_max")
        if self.area <= 1e-9:
            raise ScenarioError("geofence has zero area")
        n = len(pts)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                    raise ScenarioError("geofence boundary is self-intersecting")

    @property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.boundary, dtype=float)

    @property
    def area(self) -> float:
        v = np.asarray(self.boundary, dtype=float)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    def contains_xy(self, x, y) -> np.ndarray:
        return points_in_polygon(x, y, self.vertices)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return self.contains_xy(p[:, 0], p[:, 1]) & (p[:, 2] >= self.alt_min) & (p[:, 2] <= self.alt_max)

    def distance_to_boundary(self, x, y) -> np.ndarray:
        """Horizontal distance from each point to the nearest fence edge."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = self.vertices
        best = np.full(np.broadcast(x, y).shape, np.inf)
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            ab = b - a
            t = np.clip(((x - a[0]) * ab[0] + (y - a[1]) * ab[1]) / float(ab @ ab), 0.0, 1.0)
            best = np.minimum(best, np.hypot(x - (a[0] + t * ab[0]), y - (a[1] + t * ab[1])))
        return best


@dataclass(frozen=True)
class StaticObstacle:
    """Solid ground-standing cylinder."""

    center: tuple[float, float]
    radius: float
    height: float
    spawn_time: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ScenarioError(f"static obstacle {self.name!r}: radius and height must be positive")

    def clearance(self, points, t: float | None = None) -> np.ndarray:
        """Distance from each point to the cylinder surface (negative inside).

        Below the top the horizontal distance to the axis is used; above it,
        the distance to the nearest point of the top disc.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        rho = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
        above = p[:, 2] - self.height
        side = rho - self.radius
        over = np.where(side > 0.0, np.hypot(np.maximum(side, 0.0), above), above)
        return np.where(above <= 0.0, side, over)

    def overlaps_boxes(self, lo: np.ndarray, hi: np.ndarray, t: float | None = None) -> np.ndarray:
        cx = np.clip(self.center[0], lo[:, 0], hi[:, 0])
        cy = np.clip(self.center[1], lo[:, 1], hi[:, 1])
        near = np.hypot(cx - self.center[0], cy - self.center[1]) <= self.radius
        return near & (lo[:, 2] <= self.height) & (hi[:, 2] >= 0.0)


@dataclass(frozen=True)
class DynamicObstacle:
    """Solid sphere moving along a polyline at constant speed."""

    waypoints: tuple[tuple[float, float, float], ...]
    speed: float
    radius: float
    spawn_time: float = 0.0
    name: str = ""
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        wps = tuple(tuple(float(c) for c in w) for w in self.waypoints)
        object.__setattr__(self, "waypoints", wps)
        if self.radius <= 0:
            raise ScenarioError(f"dynamic obstacle {self.name!r}: radius must be positive")
        if self.speed <= 0:
            raise ScenarioError(f"dynamic obstacle {self.name!r}: speed must be positive")
        if len(wps) < 1:
            raise ScenarioError(f"dynamic obstacle {self.name!r}: needs at least one waypoint")
        w = np.asarray(wps, dtype=float)
        seg = np.linalg.norm(np.diff(w, axis=0), axis=1) if len(w) > 1 else np.zeros(0)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def initial_center(self) -> np.ndarray:
        return np.asarray(self.waypoints[0], dtype=float)

    @property
    def path_length(self) -> float:
        return float(self._cum[-1])

    def position(self, t: float) -> np.ndarray:
        if t < self.spawn_time - 1e-12:
            raise ValueError(f"obstacle {self.name!r} not spawned until t={self.spawn_time}")
        w = np.asarray(self.waypoints, dtype=float)
        s = max(0.0, (t - self.spawn_time) * self.speed)
        if len(w) == 1 or s >= self._cum[-1]:
            return w[-1].copy()
        i = int(np.searchsorted(self._cum, s, side="right")) - 1
        i = min(i, len(w) - 2)
        frac = (s - self._cum[i]) / (self._cum[i + 1] - self._cum[i])
        return w[i] + frac * (w[i + 1] - w[i])

    def positions(self, times) -> np.ndarray:
        return np.array([self.position(max(float(t), self.spawn_time)) for t in np.atleast_1d(times)])

    def velocity(self, t: float) -> np.ndarray:
        w = np.asarray(self.waypoints, dtype=float)
        s = max(0.0, (t - self.spawn_time) * self.speed)
        if len(w) == 1 or s >= self._cum[-1]:
            return np.zeros(3)
        i = min(int(np.searchsorted(self._cum, s, side="right")) - 1, len(w) - 2)
        d = w[i + 1] - w[i]
        return self.speed * d / np.linalg.norm(d)

    def clearance(self, points, t: float) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(p - self.position(t), axis=1) - self.radius

    def overlaps_boxes(self, lo: np.ndarray, hi: np.ndarray, t: float) -> np.ndarray:
        c = self.position(t)
        nearest = np.clip(c, lo, hi)
        return np.linalg.norm(nearest - c, axis=1) <= self.radius


Obstacle = Union[StaticObstacle, DynamicObstacle]


@dataclass
class WorldState:
    geofence: Geofence
    static_obstacles: list[StaticObstacle] = field(default_factory=list)
    dynamic_obstacles: list[DynamicObstacle] = field(default_factory=list)
    clock: float = 0.0

    def known_static(self, t: float | None = None) -> list[StaticObstacle]:
        t = self.clock if t is None else t
        return [o for o in self.static_obstacles if o.spawn_time <= t]

    def known_dynamic(self, t: float | None = None) -> list[DynamicObstacle]:
        t = self.clock if t is None else t
        return [o for o in self.dynamic_obstacles if o.spawn_time <= t]

    def known_obstacles(self, t: float | None = None) -> list[Obstacle]:
        return [*self.known_static(t), *self.known_dynamic(t)]


def obstacle_position(d: DynamicObstacle, t: float) -> np.ndarray:
    return d.position(t)


def obstacle_clearance(obstacles: Sequence[Obstacle], points, t: float) -> np.ndarray:
    """Minimum surface clearance over ``obstacles`` for each point; +inf if none."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(len(p), np.inf)
    for o in obstacles:
        best = np.minimum(best, o.clearance(p, t))
    return best


def global_score(
    cell_centers,
    obstacles: Sequence[Obstacle],
    t: float = 0.0,
    geofence: Geofence | None = None,
    half_size: float = 0.0,
) -> np.ndarray:
    """Obstacle-field score per cell, clamped to [0, 1].

    A cell scores 1 when its box (``half_size`` around the center) overlaps an
    obstacle or its center lies outside the fence; otherwise the mean inverse
    surface clearance over all ``obstacles``.
    """
    c = np.atleast_2d(np.asarray(cell_centers, dtype=float))
    score = np.zeros(len(c))
    hit = np.zeros(len(c), dtype=bool)
    if geofence is not None:
        hit |= ~geofence.contains(c)
    if obstacles:
        lo, hi = c - half_size, c + half_size
        inv = np.zeros(len(c))
        for o in obstacles:
            gap = o.clearance(c, t)
            hit |= gap <= 0.0
            hit |= o.overlaps_boxes(lo, hi, t)
            with np.errstate(divide="ignore"):
                inv += np.where(gap > 0.0, 1.0 / np.maximum(gap, 1e-300), 0.0)
        score = np.clip(inv / len(obstacles), 0.0, 1.0)
    return np.where(hit, 1.0, score)


def local_score(global_scores: np.ndarray) -> np.ndarray:
    """3x3x3 neighbourhood mean; neighbours outside the grid count as 1."""
    padded = np.pad(global_scores, 1, mode="constant", constant_values=1.0)
    nx, ny, nz = global_scores.shape
    total = np.zeros_like(global_scores, dtype=float)
    for dx in range(3):
        for dy in range(3):
            for dz in range(3):
                total += padded[dx : dx + nx, dy : dy + ny, dz : dz + nz]
    return total / 27.0


def collision_risk(s_global, s_local):
    return np.maximum(s_global, s_local)


def grid_dims(extent: Sequence[float], resolution: float) -> tuple[int, ...]:
    return tuple(max(1, math.ceil(e / resolution - 1e-9)) for e in extent)


@dataclass
class OccupancyGrid:
    origin: np.ndarray
    resolution: float
    global_scores: np.ndarray
    risk: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.risk.shape)

    @property
    def size(self) -> int:
        return int(self.risk.size)

    def centers(self) -> np.ndarray:
        """(Nx*Ny*Nz, 3) cell centers in C order (x slowest)."""
        nx, ny, nz = self.dims
        ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
        return self.origin + (idx + 0.5) * self.resolution

    def center_of(self, flat_index) -> np.ndarray:
        idx = np.stack(np.unravel_index(np.asarray(flat_index), self.dims), axis=-1)
        return self.origin + (idx + 0.5) * self.resolution

    def index_of(self, points) -> np.ndarray:
        """Integer (i, j, k) per point; may lie outside the grid."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((p - self.origin) / self.resolution).astype(int)

    def risk_at(self, points) -> np.ndarray:
        idx = self.index_of(points)
        dims = np.array(self.dims)
        inside = np.all((idx >= 0) & (idx < dims), axis=1)
        out = np.ones(len(idx))
        if inside.any():
            i = idx[inside]
            out[inside] = self.risk[i[:, 0], i[:, 1], i[:, 2]]
        return out


def build_grid(world: WorldState, t: float, r_min: float) -> OccupancyGrid:
    """Risk grid over the fence bounding box at resolution 2*r_min.

    Dynamic obstacles contribute at their position at time ``t``.
    """
    fence = world.geofence
    if fence.area <= 0:
        raise ScenarioError("geofence has zero area")
    res = 2.0 * r_min
    x0, y0, x1, y1 = fence.bounds
    dims = grid_dims((x1 - x0, y1 - y0, fence.alt_max - fence.alt_min), res)
    origin = np.array([x0, y0, fence.alt_min])
    shell = OccupancyGrid(origin, res, np.zeros(dims), np.zeros(dims))
    centers = shell.centers()
    g = global_score(centers, world.known_obstacles(t), t, fence, half_size=res / 2.0).reshape(dims)
    shell.global_scores = g
    shell.risk = collision_risk(g, local_score(g))
    return shell
