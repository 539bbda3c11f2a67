"""Tangential dodge points around pop-up static cylinders and moving spheres.

All geometry is in the local ENU frame. A dodge point sits on the circle of
radius ``R_buff`` (obstacle radius, raised to ``r_min`` when smaller, plus
the safety clearance) around the obstacle center, at the point where a line
from the vehicle touches that circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..environment import DynamicObstacle, Geofence, OccupancyGrid, StaticObstacle
from ..errors import DodgeInfeasible, DynamicDodgeFailed, NoExternalTangent
from ..guidance import UavConstraints, bearing, wrap_angle
from .dubins import PathNode


@dataclass(frozen=True)
class AvoidanceConfig:
    d_buff: float = 3.0
    max_dodge_points: int = 6
    sample_step: float = 2.0
    time_step: float = 0.1
    # extra clearance on top of d_buff used when generating and verifying
    # dodges, to absorb guidance tracking error; 0 keeps points exactly on
    # the R_buff circle
    guidance_margin: float = 0.0
    max_yaw_change: float = math.radians(90.0)

    def __post_init__(self):
        if self.d_buff <= 0:
            raise ValueError("d_buff must be positive")
        if self.max_dodge_points < 1:
            raise ValueError("max_dodge_points must be at least 1")
        if self.guidance_margin < 0:
            raise ValueError("guidance_margin must be non-negative")


@dataclass(frozen=True)
class DodgePoint:
    position: tuple[float, float, float]
    plane: str
    sequence_index: int = 0
    center: tuple[float, ...] = ()
    r_buff: float = 0.0

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass
class DodgeResult:
    points: list[DodgePoint]
    plane: str
    angle_change: float
    candidates: dict = field(default_factory=dict)


def buffer_radius(r_obst: float, constraints: UavConstraints, cfg: AvoidanceConfig) -> float:
    """R_buff with small obstacles inflated to the turn radius first."""
    return max(r_obst, constraints.r_min) + cfg.d_buff


def tangent_slopes(p, center, r_buff: float) -> tuple[float, float]:
    """Slopes dy/dx of the two lines through ``p`` tangent to the circle.

    Returns ``math.inf`` for a vertical tangent (when |x_p - x_c| = r_buff).
    """
    x = float(p[0]) - float(center[0])
    y = float(p[1]) - float(center[1])
    l2 = x * x + y * y
    r2 = r_buff * r_buff
    if l2 <= r2 * (1.0 + 1e-12):
        raise NoExternalTangent(f"point at distance {math.sqrt(l2):.6g} is not outside radius {r_buff:.6g}")
    s = math.sqrt(l2 - r2)
    den = x * x - r2
    if abs(den) <= 1e-12 * l2:
        # one tangent is vertical; the quadratic in m degenerates to linear
        return math.inf, (y * y - r2) / (2.0 * x * y)
    return (x * y + r_buff * s) / den, (x * y - r_buff * s) / den


def tangent_points(p, center, r_buff: float) -> list[np.ndarray]:
    """Touching points of the two tangents from ``p``: feet of the perpendiculars from the center."""
    p = np.asarray(p, dtype=float)[:2]
    c = np.asarray(center, dtype=float)[:2]
    out = []
    for m in tangent_slopes(p, c, r_buff):
        u = np.array([0.0, 1.0]) if math.isinf(m) else np.array([1.0, m]) / math.hypot(1.0, m)
        out.append(p + float((c - p) @ u) * u)
    return out


def segment_hits_circle(a, b, center, radius: float) -> bool:
    """Horizontal segment a-b passes strictly within ``radius`` of ``center``."""
    a = np.asarray(a, dtype=float)[:2]
    b = np.asarray(b, dtype=float)[:2]
    c = np.asarray(center, dtype=float)[:2]
    ab = b - a
    den = float(ab @ ab)
    u = 0.0 if den == 0 else min(1.0, max(0.0, float((c - a) @ ab) / den))
    return float(np.linalg.norm(a + u * ab - c)) < radius


def _risk(grid: OccupancyGrid | None, point) -> float:
    if grid is None:
        return 0.0
    return float(grid.risk_at(np.atleast_2d(point))[0])


def _pick(cands: list[tuple[float, float, object]]):
    """Smallest |angle change|; near-ties go to the lower risk."""
    cands = sorted(cands, key=lambda c: (round(abs(c[0]), 9), c[1]))
    return cands[0]


def yaw_candidates(start, target, center, r_buff: float, constraints: UavConstraints, cfg: AvoidanceConfig,
                   z: float, fence: Geofence | None = None, grid: OccupancyGrid | None = None):
    """Feasible yaw-plane dodge candidates as (delta_psi, risk, DodgePoint)."""
    start = np.asarray(start, dtype=float)
    psi0 = bearing(target[0] - start[0], target[1] - start[1])
    try:
        pts = tangent_points(start, center, r_buff)
    except NoExternalTangent:
        return []
    out = []
    for t in pts:
        chord = float(np.linalg.norm(t - start[:2]))
        if chord < 1e-9:
            continue
        dpsi = wrap_angle(bearing(t[0] - start[0], t[1] - start[1]) - psi0)
        if abs(dpsi) > cfg.max_yaw_change:
            continue
        if chord < 2.0 * constraints.r_min * math.sin(abs(dpsi) / 2.0):
            continue
        if fence is not None and not bool(fence.contains_xy(t[0], t[1])):
            continue
        pos = (float(t[0]), float(t[1]), float(z))
        dp = DodgePoint(pos, "yaw", 0, tuple(float(v) for v in np.asarray(center)[:2]), r_buff)
        out.append((dpsi, _risk(grid, pos), dp))
    return out


def static_dodge(uav: PathNode, target: PathNode, obst: StaticObstacle, constraints: UavConstraints,
                 cfg: AvoidanceConfig = AvoidanceConfig(), fence: Geofence | None = None,
                 grid: OccupancyGrid | None = None) -> DodgeResult:
    """Choose the yaw or pitch detour needing the smaller angle change.

    The yaw candidate is the tangent point from the vehicle on the R_buff
    circle; the pitch candidate climbs to ``h_obst + d_buff`` at R_buff
    before the obstacle along track and holds that height to R_buff past
    it. Raises DodgeInfeasible when neither fits the vehicle limits.
    """
    a = uav.position
    b = target.position
    r_buff = buffer_radius(obst.radius, constraints, cfg) + cfg.guidance_margin
    c = np.asarray(obst.center, dtype=float)
    if not segment_hits_circle(a, b, c, r_buff) or min(a[2], b[2]) > obst.height + cfg.d_buff + cfg.guidance_margin:
        raise ValueError("segment does not intercept the inflated obstacle")

    cands = {}
    yaw = yaw_candidates(a, b, c, r_buff, constraints, cfg, a[2], fence, grid)
    if yaw:
        cands["yaw"] = _pick(yaw)

    horiz = b[:2] - a[:2]
    run = float(np.linalg.norm(horiz))
    if run > 1e-9:
        u = horiz / run
        along = float((c - a[:2]) @ u)
        near_s = along - r_buff
        far_s = along + r_buff
        z_top = obst.height + cfg.d_buff + cfg.guidance_margin
        theta0 = math.atan2(b[2] - a[2], run)
        if near_s > 1e-6:
            theta1 = math.atan2(z_top - a[2], near_s)
            ok = theta1 <= constraints.climb_angle_limit(uav.v)
            if fence is not None:
                ok = ok and z_top <= fence.alt_max
            if ok:
                near = a[:2] + near_s * u
                far = a[:2] + far_s * u
                pts = [
                    DodgePoint((float(near[0]), float(near[1]), z_top), "pitch", 0, (float(c[0]), float(c[1])), r_buff),
                    DodgePoint((float(far[0]), float(far[1]), z_top), "pitch", 1, (float(c[0]), float(c[1])), r_buff),
                ]
                cands["pitch"] = (theta1 - theta0, _risk(grid, pts[0].position), pts)

    if not cands:
        raise DodgeInfeasible(f"no feasible yaw or pitch dodge around obstacle {obst.name!r}")
    plane = min(cands, key=lambda k: (round(abs(cands[k][0]), 9), cands[k][1]))
    angle, _, chosen = cands[plane]
    pts = chosen if isinstance(chosen, list) else [chosen]
    return DodgeResult(pts, plane, float(angle), {k: v[0] for k, v in cands.items()})


def swept_violation(start, end, t0: float, speed: float, obst: DynamicObstacle, radius: float,
                    time_step: float = 0.1):
    """First time the straight transit start->end comes within ``radius`` of the moving center.

    The vehicle flies at constant ``speed``; returns None when the transit clears.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(end - start))
    duration = length / speed
    n = max(1, int(math.ceil(duration / time_step)))
    ts = np.linspace(0.0, duration, n + 1)
    frac = ts / duration if duration > 0 else np.zeros_like(ts)
    pos = start + frac[:, None] * (end - start)
    centers = obst.positions(t0 + ts)
    d = np.linalg.norm(pos - centers, axis=1)
    bad = np.nonzero(d < radius)[0]
    if bad.size == 0:
        return None
    return float(t0 + ts[bad[0]])


def _plane_frame(plane: str, start, target):
    """In-plane axes (3D unit vectors) of the yaw plane or of the vertical plane towards the target."""
    if plane == "yaw":
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    horiz = np.asarray(target, dtype=float)[:2] - np.asarray(start, dtype=float)[:2]
    run = float(np.linalg.norm(horiz))
    if run < 1e-9:
        return None
    u = np.array([horiz[0] / run, horiz[1] / run, 0.0])
    return u, np.array([0.0, 0.0, 1.0])


def _cone_edges(prev, center, v_obs, v: float, r_buff: float, e1, e2):
    """Headings (3D unit vectors in the plane) whose relative motion grazes the sphere.

    In the obstacle frame the vehicle moves along ``v_uav - v_obs``; the
    closed-form tangent from ``prev`` to the circle gives the grazing
    relative direction, which is converted back to an airspeed-``v``
    heading. Yields (heading, time to tangency, relative tangent point).
    """
    p2 = np.array([prev @ e1, prev @ e2])
    c2 = np.array([center @ e1, center @ e2])
    vo = np.array([v_obs @ e1, v_obs @ e2])
    try:
        pts = tangent_points(p2, c2, r_buff)
    except NoExternalTangent:
        return []
    out = []
    for t in pts:
        d = t - p2
        dist = float(np.linalg.norm(d))
        if dist < 1e-9:
            continue
        e = d / dist
        b = float(vo @ e)
        disc = b * b - float(vo @ vo) + v * v
        if disc < 0:
            continue
        lam = -b + math.sqrt(disc)
        if lam <= 1e-9:
            continue
        vu = vo + lam * e
        heading = vu[0] * e1 + vu[1] * e2
        out.append((heading / v, dist / lam, t))
    return out


def _dynamic_sequence(plane, start, target, t0, v, obst, r_buff, constraints, cfg, fence, horizon):
    pts: list[DodgePoint] = []
    prev = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    t_prev = t0
    first_angle = None
    for k in range(cfg.max_dodge_points):
        frame = _plane_frame(plane, prev, target)
        if frame is None:
            return None, None
        e1, e2 = frame
        center = obst.position(t_prev)
        v_obs = obst.velocity(t_prev)
        to_target = target - prev
        best = None
        for heading, t_tan, _ in _cone_edges(prev, center, v_obs, v, r_buff, e1, e2):
            if plane == "yaw":
                angle = wrap_angle(bearing(heading[0], heading[1]) - bearing(to_target[0], to_target[1]))
                if abs(angle) > cfg.max_yaw_change:
                    continue
            else:
                gamma = math.atan2(heading[2], math.hypot(heading[0], heading[1]))
                if gamma > constraints.climb_angle_limit(v) or -gamma > constraints.descent_angle_limit(v):
                    continue
                angle = gamma - math.atan2(to_target[2], float(np.linalg.norm(to_target[:2])))
            if best is None or abs(angle) < abs(best[0]):
                best = (angle, heading, t_tan)
        if best is None:
            return None, None
        angle, heading, t_tan = best
        # fly the grazing heading at least to tangency, further if the
        # straight leg to the target is still swept from there
        t_leg = t_tan
        while True:
            point = prev + v * t_leg * heading
            if swept_violation(point, target, t_prev + t_leg, v, obst, r_buff, cfg.time_step) is None:
                break
            if t_leg - t_tan >= horizon:
                break
            t_leg += cfg.time_step
        if fence is not None and not bool(fence.contains(point[None, :])[0]):
            return None, None
        if swept_violation(prev, point, t_prev, v, obst, r_buff - 1e-6, cfg.time_step) is not None:
            return None, None
        if first_angle is None:
            first_angle = angle
        used = obst.position(t_prev + t_leg)
        pts.append(DodgePoint(tuple(float(q) for q in point), plane, k, tuple(float(q) for q in used), r_buff))
        prev = point
        t_prev += t_leg
        if swept_violation(prev, target, t_prev, v, obst, r_buff, cfg.time_step) is None:
            return pts, first_angle
    return None, None


def dynamic_dodge(position, target, obst: DynamicObstacle, t0: float, constraints: UavConstraints,
                  cfg: AvoidanceConfig = AvoidanceConfig(), speed: float | None = None,
                  fence: Geofence | None = None) -> DodgeResult:
    """Sequence of dodge points steering clear of a moving sphere.

    Point k is generated from point k-1 with the closed-form tangent to the
    R_buff circle around the obstacle center at the departure time from
    k-1, taken in the obstacle's frame of motion so that the vehicle
    reaches the tangency exactly when the obstacle does. The point is the
    tangency itself, or further along the same grazing heading if the leg
    to the target is still swept from there. The sequence stops once the
    straight leg to the target clears. Yaw and pitch sequences are both
    tried; the one needing the smaller first angle change wins.
    """
    v = constraints.v_cruise if speed is None else speed
    r_buff = buffer_radius(obst.radius, constraints, cfg) + cfg.guidance_margin
    start = np.asarray(position, dtype=float)
    tgt = np.asarray(target, dtype=float)
    results = {}
    horizon = float(np.linalg.norm(tgt - start)) / v
    for plane in ("yaw", "pitch"):
        pts, angle = _dynamic_sequence(plane, start, tgt, t0, v, obst, r_buff, constraints, cfg, fence, horizon)
        if pts:
            results[plane] = (angle, pts)
    if not results:
        raise DynamicDodgeFailed(
            f"no clearing dodge sequence around {obst.name!r} within {cfg.max_dodge_points} points"
        )
    plane = min(results, key=lambda k: abs(results[k][0]))
    angle, pts = results[plane]
    return DodgeResult(pts, plane, float(angle), {k: r[0] for k, r in results.items()})
