"""Dubins shortest paths in the horizontal plane and their 3D lift.

Internally the word solver works in the mathematical frame (angle measured
counter-clockwise from east); the public API takes bearings (clockwise from
north) like the rest of the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ClimbInfeasible
from ..guidance import UavConstraints, wrap_angle

TWO_PI = 2.0 * math.pi
WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")


def _mod2pi(a: float) -> float:
    r = math.fmod(a, TWO_PI)
    return r + TWO_PI if r < 0 else r


def bearing_to_math(psi: float) -> float:
    return math.pi / 2.0 - psi


def math_to_bearing(alpha):
    return wrap_angle(math.pi / 2.0 - np.asarray(alpha))


@dataclass(frozen=True)
class PathNode:
    x: float
    y: float
    z: float
    psi: float
    v: float = 30.0
    risk: float = 0.0

    def __post_init__(self):
        if self.v <= 0:
            raise ValueError("PathNode speed must be positive")
        if not 0.0 <= self.risk <= 1.0:
            raise ValueError("PathNode risk must lie in [0, 1]")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def _word_params(word: str, a: float, b: float, d: float):
    """Normalised (t, p, q) for one word, or None if the word does not exist."""
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    cab = math.cos(a - b)
    if word == "LSL":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        if p2 < 0:
            return None
        tmp = math.atan2(cb - ca, d + sa - sb)
        return _mod2pi(-a + tmp), math.sqrt(p2), _mod2pi(b - tmp)
    if word == "RSR":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        if p2 < 0:
            return None
        tmp = math.atan2(ca - cb, d - sa + sb)
        return _mod2pi(a - tmp), math.sqrt(p2), _mod2pi(-b + tmp)
    if word == "LSR":
        p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        if p2 < 0:
            return None
        p = math.sqrt(p2)
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        return _mod2pi(-a + tmp), p, _mod2pi(-_mod2pi(b) + tmp)
    if word == "RSL":
        p2 = -2 + d * d + 2 * cab - 2 * d * (sa + sb)
        if p2 < 0:
            return None
        p = math.sqrt(p2)
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        return _mod2pi(a - tmp), p, _mod2pi(b - tmp)
    if word == "RLR":
        tmp = (6.0 - d * d + 2 * cab + 2 * d * (sa - sb)) / 8.0
        if abs(tmp) > 1:
            return None
        p = _mod2pi(TWO_PI - math.acos(tmp))
        t = _mod2pi(a - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
        return t, p, _mod2pi(a - b - t + p)
    if word == "LRL":
        tmp = (6.0 - d * d + 2 * cab + 2 * d * (sb - sa)) / 8.0
        if abs(tmp) > 1:
            return None
        p = _mod2pi(TWO_PI - math.acos(tmp))
        t = _mod2pi(-a - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
        return t, p, _mod2pi(_mod2pi(b) - a - t + p)
    raise ValueError(word)


def advance_pose(x: float, y: float, alpha: float, kind: str, length: float, radius: float):
    """Move a math-frame pose along one segment of type L, R or S."""
    if kind == "S":
        return x + length * math.cos(alpha), y + length * math.sin(alpha), alpha
    turn = length / radius
    if kind == "L":
        a2 = alpha + turn
        return x + radius * (math.sin(a2) - math.sin(alpha)), y - radius * (math.cos(a2) - math.cos(alpha)), a2
    a2 = alpha - turn
    return x - radius * (math.sin(a2) - math.sin(alpha)), y + radius * (math.cos(a2) - math.cos(alpha)), a2


@dataclass(frozen=True)
class DubinsWord:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    word: str
    lengths: tuple[float, float, float]
    radius: float
    plane: str = "horizontal"

    @property
    def length(self) -> float:
        return float(sum(self.lengths))

    @property
    def segments(self) -> list[tuple[str, float]]:
        return list(zip(self.word, self.lengths))

    def _segment_starts(self):
        poses = []
        x, y, alpha = self.start[0], self.start[1], bearing_to_math(self.start[2])
        for kind, seg_len in self.segments:
            poses.append((x, y, alpha))
            x, y, alpha = advance_pose(x, y, alpha, kind, seg_len, self.radius)
        return poses

    def sample(self, step: float) -> np.ndarray:
        """(N, 4) rows of x, y, bearing, arc length; first and last rows are the end poses."""
        total = self.length
        n = max(1, int(math.ceil(total / step - 1e-9)))
        s_vals = np.linspace(0.0, total, n + 1)
        ends = np.cumsum(self.lengths)
        starts = self._segment_starts()
        out = np.empty((len(s_vals), 4))
        for k, s in enumerate(s_vals):
            i = min(int(np.searchsorted(ends, s, side="left")), 2)
            seg_s0 = ends[i] - self.lengths[i]
            x, y, alpha = starts[i]
            px, py, pa = advance_pose(x, y, alpha, self.word[i], s - seg_s0, self.radius)
            out[k] = (px, py, float(math_to_bearing(pa)), s)
        out[-1, :3] = self.end
        return out

    def curvature_profile(self) -> list[float]:
        return [0.0 if kind == "S" else 1.0 / self.radius for kind, length in self.segments if length > 0]


def dubins_candidates(start, end, radius: float) -> dict[str, float]:
    """Length of every word that exists for the pose pair (CCC only below 4R separation)."""
    x0, y0, psi0 = start
    x1, y1, psi1 = end
    dx, dy = x1 - x0, y1 - y0
    dist = math.hypot(dx, dy)
    d = dist / radius
    theta = _mod2pi(math.atan2(dy, dx))
    a = _mod2pi(bearing_to_math(psi0) - theta)
    b = _mod2pi(bearing_to_math(psi1) - theta)
    out = {}
    for w in WORDS:
        if w in ("RLR", "LRL") and dist >= 4.0 * radius:
            continue
        prm = _word_params(w, a, b, d)
        if prm is not None:
            out[w] = radius * sum(prm)
    return out


def dubins_2d(start, end, radius: float) -> DubinsWord:
    """Shortest bounded-curvature path between poses (x, y, bearing)."""
    if radius <= 0:
        raise ValueError("turn radius must be positive")
    start = tuple(float(v) for v in start)
    end = tuple(float(v) for v in end)
    x0, y0, psi0 = start
    x1, y1, psi1 = end
    dx, dy = x1 - x0, y1 - y0
    dist = math.hypot(dx, dy)
    if dist < 1e-9 and abs(wrap_angle(psi1 - psi0)) < 1e-9:
        return DubinsWord(start, end, "LSL", (0.0, 0.0, 0.0), radius)
    d = dist / radius
    theta = _mod2pi(math.atan2(dy, dx))
    a = _mod2pi(bearing_to_math(psi0) - theta)
    b = _mod2pi(bearing_to_math(psi1) - theta)
    best = None
    for w in WORDS:
        if w in ("RLR", "LRL") and dist >= 4.0 * radius:
            continue
        prm = _word_params(w, a, b, d)
        if prm is None:
            continue
        total = sum(prm)
        if best is None or total < best[0] - 1e-12:
            best = (total, w, prm)
    _, word, (t, p, q) = best
    return DubinsWord(start, end, word, (t * radius, p * radius, q * radius), radius)


@dataclass
class Trajectory:
    """Sampled 3D motion: positions, bearing and flight-path angle per sample."""

    points: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    @staticmethod
    def concat(parts: list["Trajectory"]) -> "Trajectory":
        parts = [p for p in parts if len(p)]
        if not parts:
            return Trajectory(np.zeros((0, 3)), np.zeros(0), np.zeros(0))
        pts, psi, th = [parts[0].points], [parts[0].psi], [parts[0].theta]
        for p in parts[1:]:
            skip = 1 if np.linalg.norm(p.points[0] - pts[-1][-1]) < 1e-9 else 0
            pts.append(p.points[skip:])
            psi.append(p.psi[skip:])
            th.append(p.theta[skip:])
        return Trajectory(np.concatenate(pts), np.concatenate(psi), np.concatenate(th))


def _loiter_word(start, radius: float, turns: int, direction: str) -> DubinsWord:
    """Full circles on the spot used to gain horizontal distance for a steep climb."""
    length = turns * TWO_PI * radius
    return DubinsWord(tuple(start), tuple(start), direction + "S" + direction, (length, 0.0, 0.0), radius)


def dubins_3d(a: PathNode, b: PathNode, constraints: UavConstraints, step: float = 2.0,
              max_loiter_turns: int = 3) -> Trajectory:
    """Horizontal Dubins word with a constant-gradient altitude profile.

    If the altitude change is too steep for the horizontal length, whole
    loiter circles are prepended until the gradient fits the climb limit.
    """
    r = constraints.r_min
    word = dubins_2d((a.x, a.y, a.psi), (b.x, b.y, b.psi), r)
    dz = b.z - a.z
    limit = constraints.climb_angle_limit(a.v) if dz >= 0 else constraints.descent_angle_limit(a.v)
    words = [word]
    horizontal = word.length
    turns = 0
    while abs(dz) > horizontal * math.tan(limit) + 1e-9:
        turns += 1
        if turns > max_loiter_turns:
            need = math.degrees(math.atan2(abs(dz), word.length))
            raise ClimbInfeasible(
                f"altitude change {dz:.1f} m needs {need:.1f} deg over {word.length:.1f} m; "
                f"limit {math.degrees(limit):.1f} deg"
            )
        horizontal = word.length + turns * TWO_PI * r
    if turns:
        direction = word.word[0] if word.word[0] in "LR" else "L"
        words = [_loiter_word((a.x, a.y, a.psi), r, turns, direction), word]
    samples = []
    offset = 0.0
    for w in words:
        s = w.sample(step)
        s[:, 3] += offset
        offset += w.length
        samples.append(s if not samples else s[1:])
    xy = np.concatenate(samples)
    total = offset
    frac = xy[:, 3] / total if total > 0 else np.zeros(len(xy))
    z = a.z + dz * frac
    gamma = math.atan2(dz, total) if total > 0 else 0.0
    pts = np.column_stack([xy[:, 0], xy[:, 1], z])
    return Trajectory(pts, xy[:, 2].copy(), np.full(len(pts), gamma), {"word": word.word, "loiter_turns": turns})
