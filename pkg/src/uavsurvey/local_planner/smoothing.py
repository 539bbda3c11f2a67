"""Dubins smoothing of node chains with dodge points folded in."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..environment import DynamicObstacle, OccupancyGrid, StaticObstacle, WorldState
from ..errors import DodgeInfeasible, NoExternalTangent, PlanningError
from ..guidance import UavConstraints, bearing, wrap_angle
from .dodge import AvoidanceConfig, DodgePoint, buffer_radius, dynamic_dodge, segment_hits_circle, static_dodge, tangent_points
from .dubins import PathNode, Trajectory, dubins_3d

MARGIN_STEPS = (0.0, 5.0, 10.0, 20.0)


def sample_times(traj: Trajectory, t0: float, speed: float) -> np.ndarray:
    if len(traj) < 2:
        return np.full(len(traj), t0)
    ds = np.linalg.norm(np.diff(traj.points, axis=0), axis=1)
    return t0 + np.concatenate([[0.0], np.cumsum(ds)]) / speed


def clearance_profile(points: np.ndarray, obstacles, times) -> np.ndarray:
    """(n_obstacles, n_points) surface clearance, dynamic ones at the given times."""
    out = np.empty((len(obstacles), len(points)))
    for i, o in enumerate(obstacles):
        if isinstance(o, DynamicObstacle):
            out[i] = np.linalg.norm(points - o.positions(times), axis=1) - o.radius
        else:
            out[i] = o.clearance(points)
    return out


def first_violation(traj: Trajectory, obstacles, t0: float, speed: float, required: float):
    """Index of the first obstacle whose clearance drops below ``required``, else None."""
    if not obstacles or len(traj) == 0:
        return None
    prof = clearance_profile(traj.points, obstacles, sample_times(traj, t0, speed))
    bad = prof < required
    if not bad.any():
        return None
    first_sample = np.where(bad.any(axis=0))[0][0]
    return int(np.argmin(prof[:, first_sample]))


def _with_headings(points: list[np.ndarray], psi_start: float, psi_end: float, v: float,
                   risks: list[float]) -> list[PathNode]:
    """Nodes through ``points``; interior headings bisect the chords in and out."""
    nodes = []
    n = len(points)
    for i, p in enumerate(points):
        if i == 0:
            psi = psi_start
        elif i == n - 1:
            psi = psi_end
        else:
            a = bearing(*(points[i][:2] - points[i - 1][:2]))
            b = bearing(*(points[i + 1][:2] - points[i][:2]))
            psi = wrap_angle(a + 0.5 * wrap_angle(b - a))
        nodes.append(PathNode(float(p[0]), float(p[1]), float(p[2]), float(psi), v, float(risks[i])))
    return nodes


def _piecewise(nodes: list[PathNode], constraints: UavConstraints, step: float) -> Trajectory:
    return Trajectory.concat([dubins_3d(a, b, constraints, step) for a, b in zip(nodes[:-1], nodes[1:])])


def _yaw_variants(a: PathNode, b: PathNode, obst: StaticObstacle, r_gen: float):
    """Detour point sets around a cylinder: one tangent point, or both tangents plus arc points."""
    c = np.asarray(obst.center, dtype=float)
    pa, pb = a.position, b.position
    try:
        ta = tangent_points(pa, c, r_gen)
        tb = tangent_points(pb, c, r_gen)
    except NoExternalTangent:
        return []
    chord = pb[:2] - pa[:2]

    def side(q):
        return np.sign(chord[0] * (q[1] - pa[1]) - chord[1] * (q[0] - pa[0]))

    out = []
    for s in (1.0, -1.0):
        first = [t for t in ta if side(t) == s]
        last = [t for t in tb if side(t) == s]
        if not first or not last:
            continue
        t1, t2 = first[0], last[0]
        z = lambda f: pa[2] + f * (pb[2] - pa[2])
        out.append([np.array([t1[0], t1[1], z(0.5)])])
        a1 = math.atan2(t1[1] - c[1], t1[0] - c[0])
        a2 = math.atan2(t2[1] - c[1], t2[0] - c[0])
        gap = wrap_angle(a2 - a1)
        n = max(1, int(math.ceil(abs(gap) / math.radians(40.0))))
        rho = r_gen / math.cos(abs(gap) / (2 * n))
        pts = [np.array([t1[0], t1[1], z(0.4)])]
        for k in range(1, n):
            ang = a1 + gap * k / n
            pts.append(np.array([c[0] + rho * math.cos(ang), c[1] + rho * math.sin(ang), z(0.4 + 0.2 * k / n)]))
        pts.append(np.array([t2[0], t2[1], z(0.6)]))
        out.append(pts)
    # near tie: prefer the shorter detour first
    out.sort(key=lambda pts: sum(np.linalg.norm(np.diff(np.vstack([pa, *pts, pb]), axis=0), axis=1)))
    return out


def _nudge(a: PathNode, b: PathNode, obst: StaticObstacle, r_gen: float):
    """Single point pushing the chord's closest approach out to ``r_gen``."""
    c = np.asarray(obst.center, dtype=float)
    pa, pb = a.position, b.position
    ab = pb[:2] - pa[:2]
    den = float(ab @ ab)
    if den < 1e-12:
        return []
    u = min(1.0, max(0.0, float((c - pa[:2]) @ ab) / den))
    foot = pa[:2] + u * ab
    off = foot - c
    norm = float(np.linalg.norm(off))
    if norm < 1e-9:
        off = np.array([-ab[1], ab[0]])
        norm = float(np.linalg.norm(off))
    q = c + off / norm * r_gen
    return [[np.array([q[0], q[1], pa[2] + u * (pb[2] - pa[2])])]]


def smooth_segment(a: PathNode, b: PathNode, world: WorldState, t: float, constraints: UavConstraints,
                   cfg: AvoidanceConfig = AvoidanceConfig(), grid: OccupancyGrid | None = None,
                   step: float = 2.0, _depth: int = 0, t_known: float | None = None) -> Trajectory:
    """Dubins motion a->b, rerouted through dodge points if it passes too close to a known obstacle.

    The result keeps a surface clearance of at least ``d_buff + guidance_margin``
    from every obstacle known at ``t`` (dynamic ones at their predicted
    positions, assuming the vehicle flies at ``a.v``). Inserted points are in
    ``meta["dodge_points"]``. ``t_known`` (default ``t``) is the time whose
    obstacle knowledge is used; ``t`` is when the vehicle starts the segment.
    """
    obstacles = world.known_obstacles(t if t_known is None else t_known)
    required = cfg.d_buff + cfg.guidance_margin
    traj = dubins_3d(a, b, constraints, step)
    traj.meta["dodge_points"] = []
    hit = first_violation(traj, obstacles, t, a.v, required)
    if hit is None:
        return traj
    if _depth > 3:
        raise DodgeInfeasible("nested dodges did not converge")
    obst = obstacles[hit]

    attempts: list[list[DodgePoint]] = []
    if isinstance(obst, DynamicObstacle):
        attempts.append(dynamic_dodge(a.position, b.position, obst, t, constraints, cfg, a.v, world.geofence).points)
    else:
        center = tuple(float(v) for v in obst.center)
        for extra in MARGIN_STEPS:
            c2 = replace(cfg, guidance_margin=cfg.guidance_margin + extra)
            r_gen = buffer_radius(obst.radius, constraints, c2) + c2.guidance_margin
            try:
                attempts.append(static_dodge(a, b, obst, constraints, c2, world.geofence, grid).points)
            except (DodgeInfeasible, ValueError):
                pass
            if segment_hits_circle(a.position, b.position, obst.center, r_gen):
                variants = _yaw_variants(a, b, obst, r_gen)
            else:
                variants = _nudge(a, b, obst, r_gen)
            for pts in variants:
                attempts.append([DodgePoint(tuple(map(float, p)), "yaw", i, center, r_gen) for i, p in enumerate(pts)])

    fence = world.geofence
    last_error: Exception | None = None
    for dodge in attempts:
        dodge = [d for d in dodge if min(np.linalg.norm(d.xyz[:2] - a.position[:2]), np.linalg.norm(d.xyz[:2] - b.position[:2])) > 1e-6]
        pts = [d.xyz for d in dodge]
        if not pts or not np.all(fence.contains(np.vstack(pts))):
            continue
        chain = [a.position, *pts, b.position]
        risks = [a.risk] + [float(grid.risk_at(p[None, :])[0]) if grid is not None else 0.0 for p in pts] + [b.risk]
        risks = [min(1.0, max(0.0, r)) for r in risks]
        nodes = _with_headings(chain, a.psi, b.psi, a.v, risks)
        try:
            cand = _piecewise(nodes, constraints, step)
        except PlanningError as exc:
            last_error = exc
            continue
        if first_violation(cand, [obst], t, a.v, required) is not None:
            continue
        if first_violation(cand, obstacles, t, a.v, required) is None:
            cand.meta["dodge_points"] = dodge
            return cand
        # another obstacle is in the way of the detour: dodge leg by leg
        try:
            legs = []
            t_leg = t
            for n0, n1 in zip(nodes[:-1], nodes[1:]):
                leg = smooth_segment(n0, n1, world, t_leg, constraints, cfg, grid, step, _depth + 1,
                                     t if t_known is None else t_known)
                t_leg += leg.length / a.v
                legs.append(leg)
        except PlanningError as exc:
            last_error = exc
            continue
        out = Trajectory.concat(legs)
        out.meta["dodge_points"] = list(dodge)
        for leg in legs:
            out.meta["dodge_points"].extend(leg.meta.get("dodge_points", []))
        if first_violation(out, obstacles, t, a.v, required) is None:
            return out
    raise DodgeInfeasible(
        f"no detour around obstacle {getattr(obst, 'name', '')!r} keeps {required:.1f} m clearance"
        + (f" ({last_error})" if last_error else "")
    )


def smooth_path(nodes: list[PathNode], world: WorldState, t: float, constraints: UavConstraints,
                cfg: AvoidanceConfig = AvoidanceConfig(), grid: OccupancyGrid | None = None,
                step: float = 2.0) -> Trajectory:
    """Smooth every consecutive node pair; ``meta['node_index']`` maps nodes to sample indices."""
    if len(nodes) == 1:
        n = nodes[0]
        return Trajectory(n.position[None, :], np.array([n.psi]), np.zeros(1), {"node_index": [0], "dodge_points": []})
    parts = []
    t_seg = t
    for a, b in zip(nodes[:-1], nodes[1:]):
        seg = smooth_segment(a, b, world, t_seg, constraints, cfg, grid, step, t_known=t)
        t_seg += seg.length / a.v
        parts.append(seg)
    out = Trajectory.concat(parts)
    index = [0]
    for p in parts:
        index.append(index[-1] + len(p) - 1)
    out.meta = {"node_index": index, "dodge_points": [d for p in parts for d in p.meta.get("dodge_points", [])]}
    return out


def segment_is_safe(p, q, grid: OccupancyGrid, delta: float, constraints: UavConstraints | None,
                    skip_start: bool = False) -> bool:
    """Straight p->q stays below risk ``delta`` (checked every half cell) and within the climb limit.

    ``skip_start`` ignores the first half cell, for leaving a pose that is itself in a risky cell.
    ``constraints=None`` disables the climb check.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    run = float(np.linalg.norm(d[:2]))
    if constraints is not None and abs(math.atan2(d[2], run)) > constraints.climb_angle_limit() + 1e-12:
        return False
    n = max(1, int(math.ceil(float(np.linalg.norm(d)) / (grid.resolution / 2.0))))
    pts = p + np.linspace(0.0, 1.0, n + 1)[:, None] * d
    if skip_start:
        pts = pts[1:]
    return bool(np.all(grid.risk_at(pts) < delta))


def simplify_path(points: np.ndarray, grid: OccupancyGrid, delta: float, constraints: UavConstraints,
                  keep: set[int] | None = None) -> list[int]:
    """Greedy line-of-sight shortcutting; indices in ``keep`` are never dropped."""
    keep = keep or set()
    n = len(points)
    out = [0]
    i = 0
    while i < n - 1:
        limit = next((k for k in range(i + 1, n) if k in keep), n - 1)
        j = limit
        while j > i + 1 and not segment_is_safe(points[i], points[j], grid, delta, constraints):
            j -= 1
        out.append(j)
        i = j
    return out
