"""Plot-ready output files: CSV tables, GeoJSON and a top-down SVG.

Every writer uses fixed column order and fixed number formatting and writes
no timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .environment import Geofence, WorldState
from .geo_transform import LocalFrame

MANIFEST = ".uavsurvey-artifacts"


def fmt(x, digits: int = 6) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        s = f"{x:.{digits}f}"
        return "0." + "0" * digits if s == "-0." + "0" * digits else s
    return str(x)


def write_csv(path: Path, header, rows, digits: int = 6) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v, digits) for v in row])


class OutputDir:
    """Output directory rewritten cleanly on every run.

    Files written by an earlier run (listed in a manifest) are removed
    first; files the tool did not write are left alone.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        manifest = self.path / MANIFEST
        if manifest.is_file():
            for name in manifest.read_text(encoding="utf-8").split():
                old = self.path / name
                if old.is_file() and old.parent == self.path:
                    old.unlink()
        self.written: list[str] = []

    def file(self, name: str) -> Path:
        self.written.append(name)
        return self.path / name

    def close(self) -> None:
        (self.path / MANIFEST).write_text("".join(f"{n}\n" for n in sorted(set(self.written))), encoding="utf-8")


# ---- geodetic helpers ------------------------------------------------------

def to_lon_lat_alt(frame: LocalFrame, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lat, lon, alt = frame.to_geodetic_array(pts)
    return np.column_stack([np.atleast_1d(lon), np.atleast_1d(lat), np.atleast_1d(alt)])


def _coords(lla: np.ndarray) -> list[list[float]]:
    return [[round(float(a), 9), round(float(b), 9), round(float(c), 3)] for a, b, c in lla]


def fence_ring(frame: LocalFrame, fence: Geofence) -> list[list[float]]:
    """Closed, counter-clockwise exterior ring in (lon, lat)."""
    v = fence.vertices
    lla = to_lon_lat_alt(frame, np.column_stack([v, np.zeros(len(v))]))
    ring = [[round(float(a), 9), round(float(b), 9)] for a, b, _ in lla]
    area2 = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(ring, ring[1:] + ring[:1]))
    if area2 < 0:
        ring.reverse()
    return ring + [ring[0]]


def feature(geometry: dict, **props) -> dict:
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in props.items()}
    return {"type": "Feature", "geometry": geometry, "properties": clean}


def line(frame: LocalFrame, points) -> dict:
    return {"type": "LineString", "coordinates": _coords(to_lon_lat_alt(frame, points))}


def point(frame: LocalFrame, p) -> dict:
    return {"type": "Point", "coordinates": _coords(to_lon_lat_alt(frame, p))[0]}


def write_geojson(path: Path, features: list[dict]) -> None:
    doc = {"type": "FeatureCollection", "features": features}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def base_features(frame: LocalFrame, world: WorldState) -> list[dict]:
    out = [feature({"type": "Polygon", "coordinates": [fence_ring(frame, world.geofence)]}, kind="geofence",
                   alt_min=float(world.geofence.alt_min), alt_max=float(world.geofence.alt_max))]
    for o in world.static_obstacles:
        out.append(feature(point(frame, [o.center[0], o.center[1], 0.0]), kind="static_obstacle", name=o.name,
                           radius_m=float(o.radius), height_m=float(o.height), spawn_time_s=float(o.spawn_time)))
    for o in world.dynamic_obstacles:
        out.append(feature(point(frame, o.initial_center), kind="dynamic_obstacle", name=o.name,
                           radius_m=float(o.radius), speed_mps=float(o.speed), spawn_time_s=float(o.spawn_time)))
    return out


# ---- SVG -------------------------------------------------------------------

def write_svg(path: Path, world: WorldState, planned: np.ndarray | None = None, flown: np.ndarray | None = None,
              milestones: np.ndarray | None = None, start=None, t_end: float = 0.0, title: str = "",
              size: int = 800) -> None:
    """Top-down plot: fence, obstacles (spawn times noted), planned and flown paths."""
    x0, y0, x1, y1 = world.geofence.bounds
    pad = 0.05 * max(x1 - x0, y1 - y0)
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    scale = size / max(x1 - x0, y1 - y0)
    w, h = (x1 - x0) * scale, (y1 - y0) * scale

    def sx(x):
        return f"{(x - x0) * scale:.2f}"

    def sy(y):
        return f"{(y1 - y) * scale:.2f}"

    def poly(pts):
        return " ".join(f"{sx(p[0])},{sy(p[1])}" for p in pts)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h + 24:.0f}" '
             f'viewBox="0 0 {w:.2f} {h + 24:.2f}">',
             f'<rect x="0" y="0" width="{w:.2f}" height="{h + 24:.2f}" fill="white"/>',
             f'<polygon points="{poly(world.geofence.vertices)}" fill="#f4f8f4" stroke="#2e7d32" stroke-width="2"/>']
    for o in world.static_obstacles:
        label = escape(o.name or "obstacle") + (f" (t={o.spawn_time:g} s)" if o.spawn_time > 0 else "")
        colour = "#ef6c00" if o.spawn_time > 0 else "#c62828"
        parts.append(f'<circle cx="{sx(o.center[0])}" cy="{sy(o.center[1])}" r="{o.radius * scale:.2f}" '
                     f'fill="{colour}" fill-opacity="0.35" stroke="{colour}"/>')
        parts.append(f'<text x="{sx(o.center[0] + o.radius)}" y="{sy(o.center[1] + o.radius)}" '
                     f'font-size="11" font-family="sans-serif">{label}</text>')
    for o in world.dynamic_obstacles:
        t1 = max(t_end, o.spawn_time)
        track = o.positions(np.linspace(o.spawn_time, t1, 50))
        c0 = o.initial_center
        parts.append(f'<polyline points="{poly(track)}" fill="none" stroke="#6a1b9a" stroke-dasharray="2,3"/>')
        parts.append(f'<circle cx="{sx(c0[0])}" cy="{sy(c0[1])}" r="{o.radius * scale:.2f}" fill="#6a1b9a" '
                     f'fill-opacity="0.25" stroke="#6a1b9a"/>')
        parts.append(f'<text x="{sx(c0[0] + o.radius)}" y="{sy(c0[1] + o.radius)}" font-size="11" '
                     f'font-family="sans-serif">{escape(o.name or "mover")} (t={o.spawn_time:g} s)</text>')
    if planned is not None and len(planned) > 1:
        parts.append(f'<polyline points="{poly(planned)}" fill="none" stroke="#757575" stroke-width="1.5" '
                     f'stroke-dasharray="6,4"/>')
    if flown is not None and len(flown) > 1:
        parts.append(f'<polyline points="{poly(flown)}" fill="none" stroke="#1565c0" stroke-width="2"/>')
    if milestones is not None:
        for i, m in enumerate(milestones):
            parts.append(f'<rect x="{float(sx(m[0])) - 4:.2f}" y="{float(sy(m[1])) - 4:.2f}" width="8" height="8" '
                         f'fill="#fbc02d" stroke="black"/>')
            parts.append(f'<text x="{float(sx(m[0])) + 6:.2f}" y="{float(sy(m[1])) - 6:.2f}" font-size="10" '
                         f'font-family="sans-serif">{i}</text>')
    if start is not None:
        parts.append(f'<circle cx="{sx(start[0])}" cy="{sy(start[1])}" r="5" fill="black"/>')
    legend = "fence (green), obstacles (red; orange = pop-up; purple = moving), planned (dashed), flown (blue)"
    parts.append(f'<text x="6" y="{h + 16:.2f}" font-size="11" font-family="sans-serif">'
                 f'{escape(title)}{" - " if title else ""}{legend}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
