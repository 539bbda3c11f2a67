"""L1 lateral guidance and a point-mass coordinated-turn vehicle model.

Headings are bearings: radians clockwise from north, so a horizontal unit
direction is ``(sin psi, cos psi)`` in the local East-North frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class UavConstraints:
    r_min: float = 22.0
    climb_rate_max: float = 8.0
    v_cruise: float = 30.0
    climb_angle_max: float = math.radians(30.0)
    roll_max: float = math.radians(65.0)
    pitch_max: float = math.radians(25.0)
    pitch_min: float = math.radians(-20.0)
    l1_period: float = 15.0
    l1_damping: float = 0.75
    l1_xtrack_i: float = 0.2
    l1_dist: float | None = None

    def __post_init__(self):
        for name in ("r_min", "climb_rate_max", "v_cruise", "climb_angle_max", "roll_max", "pitch_max",
                     "l1_period", "l1_damping"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pitch_min >= 0:
            raise ValueError("pitch_min must be negative")

    def l1_distance(self, v: float | None = None) -> float:
        if self.l1_dist is not None:
            return self.l1_dist
        v = self.v_cruise if v is None else v
        return self.l1_damping * self.l1_period * v / math.pi

    def climb_angle_limit(self, v: float | None = None) -> float:
        """Steepest sustainable climb: angle limit, pitch limit and climb-rate limit at speed v."""
        v = self.v_cruise if v is None else v
        rate_angle = math.asin(min(1.0, self.climb_rate_max / v))
        return min(self.climb_angle_max, self.pitch_max, rate_angle)

    def descent_angle_limit(self, v: float | None = None) -> float:
        v = self.v_cruise if v is None else v
        rate_angle = math.asin(min(1.0, self.climb_rate_max / v))
        return min(self.climb_angle_max, -self.pitch_min, rate_angle)

    def max_turn_rate(self, v: float | None = None) -> float:
        v = self.v_cruise if v is None else v
        return v / self.r_min

    def with_overrides(self, **kw) -> "UavConstraints":
        return replace(self, **kw)


@dataclass(frozen=True)
class Wind:
    """Constant wind; ``bearing`` is the direction the air moves toward."""

    speed: float = 0.0
    bearing: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("wind speed must be non-negative")

    def vector(self) -> np.ndarray:
        return self.speed * np.array([math.sin(self.bearing), math.cos(self.bearing), 0.0])


CALM = Wind()


@dataclass(frozen=True)
class UavState:
    position: np.ndarray
    psi: float
    theta: float = 0.0
    v: float = 30.0

    def air_velocity(self) -> np.ndarray:
        h = self.v * math.cos(self.theta)
        return np.array([h * math.sin(self.psi), h * math.cos(self.psi), self.v * math.sin(self.theta)])

    def ground_velocity(self, wind: Wind = CALM) -> np.ndarray:
        return self.air_velocity() + wind.vector()


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = (np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def bearing(dx: float, dy: float) -> float:
    return math.atan2(dx, dy)


def closest_point_on_path(position, path: np.ndarray, start: int = 0, stop: int | None = None):
    """Horizontal projection of ``position`` on polyline segments [start, stop).

    Returns (segment index, fraction along segment, horizontal distance).
    """
    p = np.asarray(position, dtype=float)[:2]
    n = len(path)
    if n == 1:
        return 0, 0.0, float(np.linalg.norm(path[0, :2] - p))
    stop = n - 1 if stop is None else min(stop, n - 1)
    start = min(max(start, 0), n - 2)
    stop = max(stop, start + 1)
    a = path[start:stop, :2]
    b = path[start + 1 : stop + 1, :2]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    u = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    u = np.clip(u, 0.0, 1.0)
    foot = a + u[:, None] * ab
    d = np.linalg.norm(foot - p, axis=1)
    # earliest of (numerically) tied segments, so repeated laps are not skipped
    k = int(np.argmax(d <= d.min() + 1e-6))
    return start + k, float(u[k]), float(d[k])


def _interp(path: np.ndarray, i: int, u: float) -> np.ndarray:
    if i >= len(path) - 1:
        return path[-1].copy()
    return path[i] + u * (path[i + 1] - path[i])


def l1_reference_point(state: UavState, trajectory, l1_dist: float, start_index: int = 0,
                       window: int | None = None):
    """Point on ``trajectory`` ahead of the vehicle at horizontal distance ``l1_dist``.

    The search starts from the closest-point projection (looked up in
    ``[start_index, start_index + window)``) and walks forward. When the
    vehicle is farther than ``l1_dist`` from the path, the closest point is
    returned. Returns ``(point, projection_segment_index)``.
    """
    path = np.asarray(trajectory, dtype=float)
    if len(path) == 1:
        return path[0].copy(), 0
    stop = None if window is None else start_index + window
    i, u, dist = closest_point_on_path(state.position, path, start_index, stop)
    if dist >= l1_dist:
        return _interp(path, i, u), i
    p = np.asarray(state.position, dtype=float)[:2]
    # an L1 crossing lies within a quarter turn of arc (a half circle of
    # diameter L1); past that, later laps of the path must not be picked up
    reach = 0.5 * math.pi * l1_dist + dist
    best, best_d = _interp(path, i, u), dist
    run0 = 0.0
    seg0 = i
    chunk = 256
    while seg0 < len(path) - 1 and run0 <= reach:
        a = path[seg0:seg0 + chunk, :2]
        b = path[seg0 + 1:seg0 + chunk + 1, :2]
        a = a[:len(b)]
        d = b - a
        f = a - p
        qa = np.einsum("ij,ij->i", d, d)
        lo = np.zeros(len(d))
        if seg0 == i:
            lo[0] = u
        seglen = np.sqrt(qa)
        # run length flown before each segment; segments past the reach are skipped
        before = run0 + np.concatenate([[0.0], np.cumsum(seglen * (1.0 - lo))[:-1]])
        live = before <= reach
        qb = 2.0 * np.einsum("ij,ij->i", f, d)
        qc = np.einsum("ij,ij->i", f, f) - l1_dist**2
        disc = qb * qb - 4.0 * qa * qc
        with np.errstate(invalid="ignore", divide="ignore"):
            root = (-qb + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * np.where(qa > 0, qa, 1.0))
        ok = live & (qa > 0) & (disc >= 0) & (root >= lo - 1e-12) & (root <= 1.0)
        if ok.any():
            k = int(np.argmax(ok))
            return _interp(path, seg0 + k, max(float(root[k]), float(lo[k]))), i
        n_live = int(live.sum())
        if n_live:
            ends = np.linalg.norm(b[:n_live] - p, axis=1)
            k = int(np.argmax(ends))
            if ends[k] > best_d:
                best, best_d = path[seg0 + k + 1].copy(), float(ends[k])
        if n_live < len(d):
            run0 = reach + 1.0
            seg0 += n_live
            break
        run0 = float(before[-1] + seglen[-1] * (1.0 - lo[-1]))
        seg0 += len(d)
    if seg0 >= len(path) - 1:
        return path[-1].copy(), i
    # tight curve with no point L1 away: aim at the farthest point in reach
    return best, i


def l1_accel_cmd(state: UavState, ref_point, constraints: UavConstraints, wind: Wind = CALM,
                 tau_trim: float = 0.0) -> float:
    """Lateral acceleration a = 2 V^2 sin(tau) / L1, positive for a right turn.

    V is the ground speed and L1 the horizontal distance to the reference
    point; the magnitude is clamped to v^2 / r_min.
    """
    vg = state.ground_velocity(wind)[:2]
    los = np.asarray(ref_point, dtype=float)[:2] - np.asarray(state.position, dtype=float)[:2]
    l1 = float(np.linalg.norm(los))
    speed = float(np.linalg.norm(vg))
    if l1 < 1e-9 or speed < 1e-9:
        return 0.0
    cross = vg[0] * los[1] - vg[1] * los[0]
    tau = -math.atan2(cross, float(vg @ los)) + tau_trim
    tau = max(-math.pi / 2, min(math.pi / 2, tau))
    a = 2.0 * speed**2 * math.sin(tau) / l1
    a_max = state.v**2 / constraints.r_min
    return max(-a_max, min(a_max, a))


def step_vehicle(state: UavState, a_cmd: float, climb_cmd: float, wind: Wind, dt: float,
                 constraints: UavConstraints) -> UavState:
    """Forward-Euler coordinated turn with bounded turn and climb rates."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = state.v
    r_max = constraints.max_turn_rate(v)
    psi_dot = max(-r_max, min(r_max, a_cmd / v))
    up = min(constraints.climb_rate_max, v * math.sin(constraints.climb_angle_limit(v)))
    down = min(constraints.climb_rate_max, v * math.sin(constraints.descent_angle_limit(v)))
    zdot = max(-down, min(up, climb_cmd))
    theta = math.asin(zdot / v)
    moved = replace(state, theta=theta)
    pos = np.asarray(state.position, dtype=float) + moved.ground_velocity(wind) * dt
    return UavState(pos, wrap_angle(state.psi + psi_dot * dt), theta, v)


class PathFollower:
    """Stateful L1 tracker over a sampled trajectory.

    Keeps a forward-only progress index so self-crossing tours do not make
    the reference point jump between laps.
    """

    def __init__(self, trajectory, constraints: UavConstraints, l1_dist: float | None = None,
                 use_integrator: bool = False, altitude_gain: float = 0.5):
        self.path = np.asarray(trajectory, dtype=float)
        if self.path.ndim != 2 or len(self.path) == 0:
            raise ValueError("trajectory must be a non-empty (N, 3) array")
        self.constraints = constraints
        self.l1_dist = l1_dist
        self.use_integrator = use_integrator
        self.altitude_gain = altitude_gain
        self.index = 0
        self._xtrack_integral = 0.0
        step = np.linalg.norm(np.diff(self.path[:, :2], axis=0), axis=1) if len(self.path) > 1 else np.ones(1)
        mean_step = float(np.mean(step)) if step.size and np.mean(step) > 0 else 1.0
        self._window = max(8, int(1.2 * constraints.l1_distance() / mean_step))

    def cross_track(self, position) -> tuple[float, int, float]:
        i, u, d = closest_point_on_path(position, self.path, self.index, self.index + self._window)
        return d, i, u

    def remaining_length(self) -> float:
        tail = self.path[self.index:]
        return float(np.sum(np.linalg.norm(np.diff(tail, axis=0), axis=1))) if len(tail) > 1 else 0.0

    def done(self, position, tolerance: float) -> bool:
        near_end = np.linalg.norm(np.asarray(position)[:2] - self.path[-1, :2]) <= tolerance
        return bool(near_end and self.index >= len(self.path) - 1 - self._window)

    def command(self, state: UavState, wind: Wind = CALM, dt: float = 0.1):
        l1 = self.l1_dist if self.l1_dist is not None else self.constraints.l1_distance(state.v)
        ref, seg = l1_reference_point(state, self.path, l1, self.index, self._window)
        self.index = max(self.index, seg)
        trim = 0.0
        if self.use_integrator:
            d, i, u = self.cross_track(state.position)
            a = self.path[i, :2]
            b = self.path[min(i + 1, len(self.path) - 1), :2]
            side = np.sign((b[0] - a[0]) * (state.position[1] - a[1]) - (b[1] - a[1]) * (state.position[0] - a[0]))
            # positive side = left of path -> needs a right turn
            self._xtrack_integral += side * d * dt
            trim = self.constraints.l1_xtrack_i * math.radians(1.0) * self._xtrack_integral
            trim = max(-math.radians(10), min(math.radians(10), trim))
        a_cmd = l1_accel_cmd(state, ref, self.constraints, wind, trim)
        i, u, _ = closest_point_on_path(state.position, self.path, self.index, self.index + self._window)
        here = _interp(self.path, i, u)
        ahead = _interp(self.path, min(i + 1, len(self.path) - 1), u)
        run = float(np.linalg.norm(ahead[:2] - here[:2]))
        slope = (ahead[2] - here[2]) / run if run > 1e-9 else 0.0
        climb_cmd = self.altitude_gain * (here[2] - state.position[2]) + slope * state.v
        return a_cmd, climb_cmd, ref
