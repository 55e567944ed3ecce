"""Geodetic <-> local East-North-Up conversion on a WGS-84 tangent plane.

The projection scales longitude/latitude offsets by the prime-vertical and
meridian radii of curvature at the origin latitude. It is exact as an
inverse pair and accurate to well under a millimetre over the ~100 m
extents the vehicle scenarios cover.
"""

import math
from dataclasses import dataclass

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

MAX_TANGENT_RANGE = 50_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        for name in ("lat", "lon", "alt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"GeoPoint.{name} must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside (-180, 180]")


@dataclass(frozen=True)
class EnuPoint:
    east: float
    north: float
    up: float = 0.0

    def __post_init__(self):
        for name in ("east", "north", "up"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"EnuPoint.{name} must be finite")


def _radii(lat_deg):
    """Meridian (north) and prime-vertical (east) radii of curvature."""
    s = math.sin(math.radians(lat_deg))
    w = math.sqrt(1.0 - WGS84_E2 * s * s)
    meridian = WGS84_A * (1.0 - WGS84_E2) / w**3
    prime_vertical = WGS84_A / w
    return meridian, prime_vertical


def _wrap_lon(dlon):
    return (dlon + 180.0) % 360.0 - 180.0


def _check_range(east, north):
    d = math.hypot(east, north)
    if d > MAX_TANGENT_RANGE:
        raise ValueError(f"outside tangent-plane validity: {d:.1f} m from origin (limit {MAX_TANGENT_RANGE:.0f} m)")


def lla_to_enu(p, origin):
    m, n = _radii(origin.lat)
    north = math.radians(p.lat - origin.lat) * m
    east = math.radians(_wrap_lon(p.lon - origin.lon)) * n * math.cos(math.radians(origin.lat))
    _check_range(east, north)
    return EnuPoint(east, north, p.alt - origin.alt)


def enu_to_lla(e, origin):
    _check_range(e.east, e.north)
    m, n = _radii(origin.lat)
    coslat = math.cos(math.radians(origin.lat))
    if coslat < 1e-12:
        raise ValueError("tangent-plane projection undefined at the poles")
    lat = origin.lat + math.degrees(e.north / m)
    lon = _wrap_lon(origin.lon + math.degrees(e.east / (n * coslat)))
    if lon == -180.0:
        lon = 180.0
    return GeoPoint(lat, lon, origin.alt + e.up)
