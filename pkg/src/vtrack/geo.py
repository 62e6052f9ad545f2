"""Coordinates, degree-minute conversion, spherical distance and tracks."""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, replace
from typing import Iterator, List, Optional, Tuple

from .errors import FormatError, RangeError

EARTH_RADIUS_M = 6_371_000.0
KNOTS_PER_MPS = 1.943844

_DM = re.compile(r"^(\d{1,3})(\d{2}(?:\.\d+)?)$")


@dataclass(frozen=True)
class GeoFix:
    """One decoded GPS solution."""

    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0
    time_utc: float = 0.0
    fix_quality: int = 1
    num_sats: int = 0
    speed_mps: Optional[float] = None
    course_deg: Optional[float] = None

    def __post_init__(self):
        check_lat_lon(self.lat_deg, self.lon_deg)
        if self.speed_mps is not None and self.speed_mps < 0:
            raise RangeError("speed must be non-negative")
        if self.course_deg is not None and not 0 <= self.course_deg < 360:
            raise RangeError("course must be in [0, 360)")


def check_lat_lon(lat: float, lon: float):
    if not -90.0 <= lat <= 90.0:
        raise RangeError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise RangeError(f"longitude {lon} outside [-180, 180]")


def dm_to_deg(dm: str, hemi: str) -> float:
    """``ddmm.mmmm`` / ``dddmm.mmmm`` plus hemisphere to signed degrees."""
    m = _DM.match(dm or "")
    if m is None:
        raise FormatError(f"malformed degree-minute text {dm!r}")
    if hemi not in ("N", "S", "E", "W"):
        raise FormatError(f"bad hemisphere {hemi!r}")
    degrees = int(m.group(1))
    minutes = float(m.group(2))
    if minutes >= 60:
        raise RangeError(f"minutes {minutes} must be < 60")
    value = degrees + minutes / 60.0
    if value > (90 if hemi in "NS" else 180):
        raise RangeError(f"{dm} {hemi} is out of range")
    return -value if hemi in "SW" else value


def deg_to_dm(deg: float, axis: str) -> Tuple[str, str]:
    """Inverse of :func:`dm_to_deg`, minutes rounded to 4 decimals."""
    if axis == "lat":
        limit, width, hemis = 90, 2, "NS"
    elif axis == "lon":
        limit, width, hemis = 180, 3, "EW"
    else:
        raise ValueError(f"axis must be 'lat' or 'lon', not {axis!r}")
    if not -limit <= deg <= limit or math.isnan(deg):
        raise RangeError(f"{deg} outside the {axis} range")
    whole = int(abs(deg))
    minutes = round((abs(deg) - whole) * 60.0, 4)
    if minutes >= 60.0:
        whole, minutes = whole + 1, 0.0
    hemi = hemis[1] if deg < 0 and (whole or minutes) else hemis[0]
    return f"{whole:0{width}d}{minutes:07.4f}", hemi


def distance_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of radius 6,371 km."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_m(a, b) -> float:
    return distance_m(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg)


def initial_bearing_deg(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.degrees(math.atan2(y, x)) % 360.0


def interpolate(a: GeoFix, b: GeoFix, f: float) -> GeoFix:
    """Linear blend of position, altitude and time; no antimeridian handling."""
    if not 0.0 <= f <= 1.0:
        raise RangeError(f"fraction {f} outside [0, 1]")
    if f == 0.0:
        return a
    if f == 1.0:
        return b
    g = 1.0 - f
    speed = None
    if a.speed_mps is not None and b.speed_mps is not None:
        speed = a.speed_mps * g + b.speed_mps * f
    return replace(
        a,
        lat_deg=a.lat_deg * g + b.lat_deg * f,
        lon_deg=a.lon_deg * g + b.lon_deg * f,
        alt_m=a.alt_m * g + b.alt_m * f,
        time_utc=a.time_utc * g + b.time_utc * f,
        speed_mps=speed,
    )


def local_xy(lat: float, lon: float, origin: Tuple[float, float]) -> Tuple[float, float]:
    """Equirectangular projection to metres east/north of ``origin``."""
    lat0, lon0 = origin
    x = math.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    y = math.radians(lat - lat0) * EARTH_RADIUS_M
    return x, y


@dataclass(frozen=True)
class TrackPoint:
    time_utc: int
    lat_deg: float
    lon_deg: float
    source_node: int
    seq: int
    flags: int = 0
    arrival_s: Optional[float] = None

    def __post_init__(self):
        check_lat_lon(self.lat_deg, self.lon_deg)

    @property
    def key(self):
        return (self.time_utc, self.seq)


class Track:
    """Points from one source kept sorted by (time, seq)."""

    def __init__(self, points=()):
        self._points: List[TrackPoint] = []
        self._keys: list = []
        for p in points:
            self.add(p)

    def add(self, point: TrackPoint):
        i = bisect.bisect_right(self._keys, point.key)
        self._keys.insert(i, point.key)
        self._points.insert(i, point)

    def __len__(self):
        return len(self._points)

    def __iter__(self) -> Iterator[TrackPoint]:
        return iter(self._points)

    def __getitem__(self, i):
        return self._points[i]

    @property
    def points(self) -> Tuple[TrackPoint, ...]:
        return tuple(self._points)
