"""Fallback evasive manoeuvres: hard turn, straight run, Dubins rejoin."""

from __future__ import annotations

import math

import numpy as np

from ..errors import PlanningError
from ..guidance import UavConstraints, wrap_angle
from .dodge import DodgePoint
from .dubins import PathNode, Trajectory, dubins_3d

TURNS_DEG = (20, 35, 50, 65, 80, 100, 120, 150, 180)
RUN_SECONDS = (1.0, 2.0, 3.0, 5.0)


def turn_arc(pose: PathNode, dpsi: float, r: float, step: float) -> Trajectory:
    """Constant-radius turn by ``dpsi`` (positive = clockwise/right) at constant altitude."""
    psi0 = pose.psi
    sign = 1.0 if dpsi >= 0 else -1.0
    n = max(1, int(math.ceil(abs(dpsi) * r / step)))
    phi = np.linspace(0.0, dpsi, n + 1)
    # right-hand normal of a bearing psi is (cos psi, -sin psi)
    cx = pose.x + sign * r * math.cos(psi0)
    cy = pose.y - sign * r * math.sin(psi0)
    x = cx - sign * r * np.cos(psi0 + phi)
    y = cy + sign * r * np.sin(psi0 + phi)
    pts = np.column_stack([x, y, np.full(n + 1, pose.z)])
    return Trajectory(pts, wrap_angle(psi0 + phi), np.zeros(n + 1))


def straight(p, psi: float, length: float, step: float) -> Trajectory:
    n = max(1, int(math.ceil(length / step)))
    s = np.linspace(0.0, length, n + 1)
    p = np.asarray(p, dtype=float)
    pts = p + s[:, None] * np.array([math.sin(psi), math.cos(psi), 0.0])
    return Trajectory(pts, np.full(n + 1, psi), np.zeros(n + 1))


def evasive_maneuvers(pose: PathNode, rejoin: PathNode, constraints: UavConstraints, step: float = 2.0,
                      turns_deg=TURNS_DEG, run_seconds=RUN_SECONDS):
    """Candidate (trajectory, dodge points) pairs, least aggressive first.

    Each candidate turns at the minimum radius by a fixed angle to either
    side, runs straight for a few seconds and rejoins ``rejoin`` with a
    Dubins path; the end of the straight run is the dodge point. The caller
    checks the candidates against predicted obstacle positions.
    """
    v = pose.v
    out = []
    for deg in turns_deg:
        for run in run_seconds:
            for sign in (1.0, -1.0):
                dpsi = sign * math.radians(deg)
                arc = turn_arc(pose, dpsi, constraints.r_min, step)
                end = arc.points[-1]
                psi = float(arc.psi[-1])
                leg = straight(end, psi, run * v, step)
                d = leg.points[-1]
                node = PathNode(float(d[0]), float(d[1]), float(d[2]), psi, v, 0.0)
                try:
                    back = dubins_3d(node, rejoin, constraints, step)
                except PlanningError:
                    continue
                traj = Trajectory.concat([arc, leg, back])
                traj.meta["dodge_points"] = [DodgePoint(tuple(map(float, d)), "yaw", 0)]
                out.append(traj)
    return out
