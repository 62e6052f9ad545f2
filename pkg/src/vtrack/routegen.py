"""Route simulator: waypoints plus a speed profile become a timed NMEA stream.

Speed anchors are given against path distance. Between two anchors the
vehicle accelerates uniformly from one anchor speed to the next, so
``v**2`` is linear in distance and the motion has a closed form; past the
last anchor the speed stays constant.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import List, Tuple

import numpy as np

from . import nmea
from .errors import FormatError, RangeError, UsageError
from .geo import KNOTS_PER_MPS, GeoFix, deg_to_dm, distance_m, initial_bearing_deg, interpolate

_EPS = 1e-9
DEFAULT_START = datetime(2024, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class RouteSpec:
    waypoints: Tuple[Tuple[float, float], ...]
    speed_profile: Tuple[Tuple[float, float], ...] = ((0.0, 10.0),)
    start_time: datetime = DEFAULT_START
    altitude_m: float = 0.0
    rate_hz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple((float(a), float(b)) for a, b in self.waypoints))
        object.__setattr__(self, "speed_profile", tuple((float(s), float(v)) for s, v in self.speed_profile))
        if len(self.waypoints) < 2:
            raise UsageError("a route needs at least two waypoints")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a == b:
                raise UsageError(f"consecutive waypoints coincide at {a}")
        if not self.speed_profile:
            raise UsageError("speed profile needs at least one anchor")
        dists = [s for s, _ in self.speed_profile]
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise UsageError("speed anchors must have strictly increasing distance")
        if any(v < 0 for _, v in self.speed_profile):
            raise UsageError("speeds must be non-negative")
        if self.rate_hz <= 0:
            raise UsageError("rate must be positive")
        if self.start_time.tzinfo is None:
            object.__setattr__(self, "start_time", self.start_time.replace(tzinfo=timezone.utc))


@dataclass(frozen=True)
class _Piece:
    # uniform acceleration from (s0, v0) over [s0, s1], entered at time t0
    s0: float
    s1: float
    v0: float
    a: float
    t0: float
    t1: float

    def distance(self, t: float) -> float:
        tau = t - self.t0
        return min(self.s1, self.s0 + self.v0 * tau + 0.5 * self.a * tau * tau)

    def speed(self, t: float) -> float:
        return max(0.0, self.v0 + self.a * (t - self.t0))


@dataclass
class ProfileSeries:
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    cumulative_distance_m: np.ndarray
    speed_mps: np.ndarray
    course_deg: np.ndarray

    def __len__(self):
        return len(self.t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "lat", "lon", "dist_m", "speed_mps", "course_deg"))
        for row in zip(self.t, self.lat, self.lon, self.cumulative_distance_m,
                       self.speed_mps, self.course_deg):
            t, lat, lon, d, v, c = (float(x) for x in row)
            w.writerow((f"{t:.3f}", f"{lat:.7f}", f"{lon:.7f}", f"{d:.3f}", f"{v:.3f}", f"{c:.2f}"))
        return buf.getvalue()


class Route:
    """Precomputed geometry and motion for a RouteSpec."""

    def __init__(self, spec: RouteSpec):
        self.spec = spec
        wp = spec.waypoints
        self.seg_len = [distance_m(*a, *b) for a, b in zip(wp, wp[1:])]
        self.cum = [0.0]
        for d in self.seg_len:
            self.cum.append(self.cum[-1] + d)
        self.length_m = self.cum[-1]
        self.bearings = [initial_bearing_deg(*a, *b) for a, b in zip(wp, wp[1:])]
        self.pieces = self._build_pieces()
        self.duration_s = self.pieces[-1].t1
        self._starts = [p.t0 for p in self.pieces]

    def _build_pieces(self) -> List[_Piece]:
        anchors = list(self.spec.speed_profile)
        if anchors[0][0] > 0:
            anchors.insert(0, (0.0, anchors[0][1]))
        if anchors[-1][0] < self.length_m:
            anchors.append((self.length_m, anchors[-1][1]))
        pieces, t = [], 0.0
        for (s0, v0), (s1, v1) in zip(anchors, anchors[1:]):
            if s0 >= self.length_m:
                break
            if v0 + v1 <= 0:
                raise UsageError(f"speed is zero over [{s0}, {s1}] m; the route never ends")
            if s1 > self.length_m:
                # Clip the last piece at the route end, keeping its acceleration.
                a = (v1 * v1 - v0 * v0) / (2 * (s1 - s0))
                v1 = math.sqrt(max(0.0, v0 * v0 + 2 * a * (self.length_m - s0)))
                s1 = self.length_m
                if v0 + v1 <= 0:
                    raise UsageError("speed reaches zero before the route end")
            a = (v1 * v1 - v0 * v0) / (2 * (s1 - s0))
            dt = 2 * (s1 - s0) / (v0 + v1)
            pieces.append(_Piece(s0, s1, v0, a, t, t + dt))
            t += dt
        return pieces

    @property
    def breakpoints_s(self) -> List[float]:
        """Times where the acceleration changes, including start and arrival."""
        return [p.t0 for p in self.pieces] + [self.duration_s]

    def _piece(self, t: float) -> _Piece:
        return self.pieces[max(0, bisect.bisect_right(self._starts, t) - 1)]

    def distance_at(self, t: float) -> float:
        self._check_t(t)
        if t >= self.duration_s:
            return self.length_m
        return self._piece(t).distance(t)

    def speed_at(self, t: float) -> float:
        self._check_t(t)
        return self._piece(min(t, self.duration_s)).speed(min(t, self.duration_s))

    def _check_t(self, t: float):
        if t < 0 or t > self.duration_s + _EPS:
            raise RangeError(f"t={t} outside route duration [0, {self.duration_s}]")

    def eval(self, t: float) -> GeoFix:
        """Position, speed and course ``t`` seconds after the start."""
        s = self.distance_at(t)
        i = min(bisect.bisect_right(self.cum, s) - 1, len(self.seg_len) - 1)
        f = min(1.0, max(0.0, (s - self.cum[i]) / self.seg_len[i]))
        when = self.spec.start_time.timestamp() + t
        wp = self.spec.waypoints
        a = GeoFix(wp[i][0], wp[i][1], self.spec.altitude_m, when, 1, 8)
        b = GeoFix(wp[i + 1][0], wp[i + 1][1], self.spec.altitude_m, when, 1, 8)
        p = interpolate(a, b, f)
        return GeoFix(p.lat_deg, p.lon_deg, self.spec.altitude_m, when, 1, 8,
                      self.speed_at(t), self.bearings[i])

    def sample_times(self) -> np.ndarray:
        """Uniform grid from 0 until the first sample at or past the end."""
        n = int(math.ceil(self.duration_s * self.spec.rate_hz - _EPS))
        return np.arange(n + 1) / self.spec.rate_hz

    def _sample(self, t: float) -> GeoFix:
        # The last grid point may overshoot the arrival; its position is clamped
        # to the route end and it keeps the arrival speed.
        if t <= self.duration_s:
            return self.eval(t)
        return replace(self.eval(self.duration_s), time_utc=self.spec.start_time.timestamp() + t)

    def sentences_at(self, t: float) -> List[str]:
        """The GGA + RMC pair a receiver on this route would emit at ``t``."""
        return fix_sentences(self._sample(t))

    def generate(self) -> List[str]:
        out = []
        for t in self.sample_times():
            out.extend(self.sentences_at(float(t)))
        return out

    def profile(self) -> ProfileSeries:
        ts = self.sample_times()
        fixes = [self._sample(float(t)) for t in ts]
        return ProfileSeries(
            t=ts,
            lat=np.array([f.lat_deg for f in fixes]),
            lon=np.array([f.lon_deg for f in fixes]),
            cumulative_distance_m=np.array([self.distance_at(min(float(t), self.duration_s))
                                            for t in ts]),
            speed_mps=np.array([f.speed_mps for f in fixes]),
            course_deg=np.array([f.course_deg for f in fixes]),
        )


def fix_sentences(fix: GeoFix) -> List[str]:
    when = datetime.fromtimestamp(round(fix.time_utc, 3), tz=timezone.utc)
    secs = when.second + when.microsecond / 1e6
    hhmmss = f"{when.hour:02d}{when.minute:02d}{secs:06.3f}"
    lat, ns = deg_to_dm(fix.lat_deg, "lat")
    lon, ew = deg_to_dm(fix.lon_deg, "lon")
    gga = nmea.GgaData(hhmmss, lat, ns, lon, ew, 1, 8, 1.0,
                       round(fix.alt_m, 1), 0.0, None, None)
    course = None if fix.course_deg is None else round(fix.course_deg, 1) % 360.0
    speed = round((fix.speed_mps or 0.0) * KNOTS_PER_MPS, 1)
    rmc = nmea.RmcData(hhmmss, "A", lat, ns, lon, ew, speed, course,
                       when.strftime("%d%m%y"), None, None, "A")
    return [nmea.format_gga(gga), nmea.format_rmc(rmc)]


def eval_route(route: RouteSpec, t_offset_s: float) -> GeoFix:
    return Route(route).eval(t_offset_s)


def generate(route: RouteSpec) -> List[str]:
    return Route(route).generate()


def profile(route: RouteSpec) -> ProfileSeries:
    return Route(route).profile()


# -- inputs ------------------------------------------------------------------

def import_kml_route(doc: str) -> List[Tuple[float, float]]:
    """(lat, lon) waypoints from the first LineString in a KML document."""
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as exc:
        raise FormatError(f"not a KML document: {exc}") from None
    for el in root.iter():
        if el.tag.rsplit("}", 1)[-1] != "LineString":
            continue
        coords = next((c for c in el if c.tag.rsplit("}", 1)[-1] == "coordinates"), None)
        if coords is None or not (coords.text or "").split():
            raise FormatError("LineString has no coordinates")
        points = []
        for triple in coords.text.split():
            parts = triple.split(",")
            if len(parts) not in (2, 3):
                raise FormatError(f"malformed coordinate tuple {triple!r}")
            try:
                lon, lat = float(parts[0]), float(parts[1])
                if len(parts) == 3:
                    float(parts[2])
            except ValueError:
                raise FormatError(f"malformed coordinate tuple {triple!r}") from None
            points.append((lat, lon))
        return points
    raise FormatError("document has no LineString")


def read_waypoints_csv(text: str) -> List[Tuple[float, float]]:
    """``lat,lon`` per line; blank lines, ``#`` comments and a header are skipped."""
    points = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            lat, lon = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            if not points and n == 1:
                continue
            raise FormatError(f"line {n}: expected 'lat,lon', got {line!r}") from None
        points.append((lat, lon))
    return points


def parse_speed_anchors(text: str) -> Tuple[Tuple[float, float], ...]:
    """``"s:v,s:v,..."`` (metres : metres per second)."""
    anchors = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            s, v = item.split(":")
            anchors.append((float(s), float(v)))
        except ValueError:
            raise FormatError(f"bad speed anchor {item!r}; expected 's:v'") from None
    if not anchors:
        raise FormatError("no speed anchors given")
    return tuple(anchors)


def parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        t = datetime.fromisoformat(text)
    except ValueError:
        raise FormatError(f"bad ISO-8601 time {text!r}") from None
    return t if t.tzinfo else t.replace(tzinfo=timezone.utc)
