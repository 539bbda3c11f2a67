"""WGS84 geodetic <-> ECEF conversion and a local East-North-Up frame.

Latitude is called ``lat`` everywhere (the forward formulas only produce a
valid ECEF point when the angle inside ``N()`` is the latitude). The inverse
uses Bowring's closed-form single step, no iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Wgs84Constants:
    a: float = 6378137.0
    f: float = 1.0 / 298.257223563

    @property
    def e2(self) -> float:
        return self.f * (2.0 - self.f)

    @property
    def b(self) -> float:
        return self.a * math.sqrt(1.0 - self.e2)

    @property
    def ep2(self) -> float:
        return (self.a**2 - self.b**2) / self.b**2


WGS84 = Wgs84Constants()


@dataclass(frozen=True)
class GeodeticCoord:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside (-180, 180]")


@dataclass(frozen=True)
class EcefCoord:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class LocalEnuCoord:
    east: float
    north: float
    up: float

    def as_array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up])


def prime_vertical_radius(lat_rad, c: Wgs84Constants = WGS84):
    return c.a / np.sqrt(1.0 - c.e2 * np.sin(lat_rad) ** 2)


def geodetic_to_ecef_array(lat, lon, alt, c: Wgs84Constants = WGS84):
    """Vectorised forward transform; angles in degrees."""
    lat_r = np.radians(lat)
    lon_r = np.radians(lon)
    n = prime_vertical_radius(lat_r, c)
    x = (n + alt) * np.cos(lat_r) * np.cos(lon_r)
    y = (n + alt) * np.cos(lat_r) * np.sin(lon_r)
    z = (n * (1.0 - c.e2) + alt) * np.sin(lat_r)
    return x, y, z


def ecef_to_geodetic_array(x, y, z, c: Wgs84Constants = WGS84):
    """Vectorised Bowring inverse; returns (lat, lon, alt) with angles in degrees.

    On the polar axis (p == 0) longitude is defined as 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    p = np.hypot(x, y)
    lon = np.where(p > 0.0, np.arctan2(y, x), 0.0)
    omega = np.arctan2(z * c.a, p * c.b)
    lat = np.arctan2(
        z + c.ep2 * c.b * np.sin(omega) ** 3,
        p - c.e2 * c.a * np.cos(omega) ** 3,
    )
    n = prime_vertical_radius(lat, c)
    cos_lat = np.cos(lat)
    sin_lat = np.sin(lat)
    # h = p/cos(lat) - N loses precision near the poles; switch to the
    # equivalent z-based form there.
    with np.errstate(divide="ignore", invalid="ignore"):
        h_equatorial = p / cos_lat - n
        h_polar = z / sin_lat - n * (1.0 - c.e2)
    alt = np.where(np.abs(cos_lat) > np.abs(sin_lat), h_equatorial, h_polar)
    return np.degrees(lat), np.degrees(lon), alt


def geodetic_to_ecef(g: GeodeticCoord, c: Wgs84Constants = WGS84) -> EcefCoord:
    x, y, z = geodetic_to_ecef_array(g.lat, g.lon, g.alt, c)
    return EcefCoord(float(x), float(y), float(z))


def ecef_to_geodetic(e: EcefCoord, c: Wgs84Constants = WGS84) -> GeodeticCoord:
    lat, lon, alt = ecef_to_geodetic_array(e.x, e.y, e.z, c)
    lon = float(lon)
    if lon <= -180.0:
        lon += 360.0
    return GeodeticCoord(float(lat), lon, float(alt))


def _enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows are the east, north and up unit vectors expressed in ECEF."""
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array(
        [
            [-so, co, 0.0],
            [-sl * co, -sl * so, cl],
            [cl * co, cl * so, sl],
        ]
    )


class LocalFrame:
    """East-North-Up tangent frame anchored at a fixed geodetic point.

    The anchor cannot be changed after construction, so every local
    coordinate produced by one frame refers to the same origin.
    """

    def __init__(self, anchor: GeodeticCoord, constants: Wgs84Constants = WGS84):
        self._anchor = anchor
        self._c = constants
        self._origin = np.array(geodetic_to_ecef_array(anchor.lat, anchor.lon, anchor.alt, constants))
        self._rot = _enu_rotation(anchor.lat, anchor.lon)

    @property
    def anchor(self) -> GeodeticCoord:
        return self._anchor

    def to_local_array(self, lat, lon, alt) -> np.ndarray:
        """(N,) arrays of degrees/meters -> (N, 3) ENU meters."""
        xyz = np.stack(geodetic_to_ecef_array(lat, lon, alt, self._c), axis=-1)
        return (xyz - self._origin) @ self._rot.T

    def to_geodetic_array(self, enu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        enu = np.asarray(enu, dtype=float)
        xyz = enu @ self._rot + self._origin
        return ecef_to_geodetic_array(xyz[..., 0], xyz[..., 1], xyz[..., 2], self._c)

    def to_local(self, g: GeodeticCoord) -> LocalEnuCoord:
        e, n, u = self.to_local_array(g.lat, g.lon, g.alt)
        return LocalEnuCoord(float(e), float(n), float(u))

    def to_geodetic(self, p: LocalEnuCoord) -> GeodeticCoord:
        lat, lon, alt = self.to_geodetic_array(p.as_array())
        return GeodeticCoord(float(lat), float(lon), float(alt))


def geodetic_to_local(g: GeodeticCoord, anchor: GeodeticCoord) -> LocalEnuCoord:
    return LocalFrame(anchor).to_local(g)


def local_to_geodetic(p: LocalEnuCoord, anchor: GeodeticCoord) -> GeodeticCoord:
    return LocalFrame(anchor).to_geodetic(p)
