import math
from datetime import datetime, timezone

import numpy as np
import pytest

from vtrack import nmea
from vtrack.errors import FormatError, RangeError, UsageError
from vtrack.geo import distance_m, dm_to_deg
from vtrack.routegen import (Route, RouteSpec, eval_route, generate, import_kml_route,
                             parse_speed_anchors, parse_time, profile, read_waypoints_csv)

EAST_1KM = ((0.0, 0.0), (0.0, 1000 / (math.pi / 180 * 6371000)))
SQUARE = ((48.1173, 11.5167), (48.1218, 11.5167), (48.1218, 11.5234), (48.1173, 11.5234),
          (48.1173, 11.5167))


def test_eval_endpoints_and_midpoint():
    spec = RouteSpec(EAST_1KM, ((0, 10),))
    start = eval_route(spec, 0)
    assert (start.lat_deg, start.lon_deg) == EAST_1KM[0]
    mid = eval_route(spec, 50)
    assert mid.lon_deg == pytest.approx(EAST_1KM[1][1] / 2, rel=1e-9)
    assert mid.speed_mps == 10 and mid.course_deg == pytest.approx(90.0)
    end = eval_route(spec, 100)
    assert end.lon_deg == pytest.approx(EAST_1KM[1][1], rel=1e-9)
    with pytest.raises(RangeError):
        eval_route(spec, 100.5)


def test_ramp_from_rest():
    r = Route(RouteSpec(EAST_1KM, ((0, 0), (1000, 20))))
    assert r.duration_s == pytest.approx(100.0)
    assert r.distance_at(100.0) == pytest.approx(1000.0)
    assert r.distance_at(50.0) == pytest.approx(250.0)
    assert r.speed_at(50.0) == pytest.approx(10.0)


def test_generate_line_count_and_speed():
    lines = generate(RouteSpec(EAST_1KM, ((0, 10),)))
    assert len(lines) == 202
    assert sum(l.startswith("$GPGGA") for l in lines) == 101
    rmc = nmea.parse_rmc(nmea.parse(lines[1]))
    assert rmc.speed_knots == 19.4 and rmc.course_deg == 90.0 and rmc.date == "010124"


def test_generated_positions_match_eval():
    spec = RouteSpec(SQUARE, ((0, 0), (50, 5), (1700, 5)))
    r = Route(spec)
    lines = r.generate()
    for k, t in enumerate(r.sample_times()):
        g = nmea.parse_gga(nmea.parse(lines[2 * k]))
        fix = r.eval(min(float(t), r.duration_s))
        assert abs(dm_to_deg(g.lat_dm, g.ns) - fix.lat_deg) <= 0.0001 / 60 / 2 + 1e-12
        assert abs(dm_to_deg(g.lon_dm, g.ew) - fix.lon_deg) <= 0.0001 / 60 / 2 + 1e-12


def test_midnight_rollover():
    start = datetime(2024, 12, 31, 23, 59, 30, tzinfo=timezone.utc)
    lines = generate(RouteSpec(EAST_1KM, ((0, 10),), start))
    first = nmea.parse_rmc(nmea.parse(lines[1]))
    last = nmea.parse_rmc(nmea.parse(lines[-1]))
    assert (first.utc_time, first.date) == ("235930.000", "311224")
    assert (last.utc_time, last.date) == ("000110.000", "010125")


def duration_oracle(length, anchors, steps=200_000):
    """Midpoint-rule travel time, integrating 1/v over distance."""
    s_pts = [s for s, _ in anchors]
    v_pts = [v for _, v in anchors]
    ds = length / steps
    s = (np.arange(steps) + 0.5) * ds
    # v^2 linear between anchors
    v = np.sqrt(np.interp(s, s_pts, np.square(v_pts)))
    return float(np.sum(ds / v))


def test_duration_against_numeric_integration():
    anchors = ((0, 5), (400, 15), (900, 8), (1000, 8))
    r = Route(RouteSpec(EAST_1KM, anchors))
    assert r.length_m == pytest.approx(1000.0, rel=1e-9)
    assert r.duration_s == pytest.approx(duration_oracle(1000.0, anchors), rel=1e-6)


def test_profile_constant_speed():
    p = profile(RouteSpec(SQUARE, ((0, 7.5),)))
    assert np.all(p.speed_mps == 7.5)
    assert np.all(np.diff(p.cumulative_distance_m) <= 7.5 + 1e-9)


def away_from_breakpoints(route, ts, dt):
    bps = np.array(route.breakpoints_s)
    return np.array([np.all((bps <= t - dt) | (bps >= t + dt)) for t in ts])


def test_profile_path_length_and_finite_differences():
    spec = RouteSpec(SQUARE, ((0, 0), (300, 12), (900, 4), (1700, 9)), rate_hz=2.0)
    r = Route(spec)
    p = r.profile()
    wp = spec.waypoints
    polyline = sum(distance_m(*a, *b) for a, b in zip(wp, wp[1:]))
    assert abs(p.cumulative_distance_m[-1] - polyline) <= 1e-3 * polyline
    assert np.all(np.diff(p.t) == pytest.approx(0.5))
    dt = 1 / spec.rate_hz
    fd = (p.cumulative_distance_m[2:] - p.cumulative_distance_m[:-2]) / (2 * dt)
    v = p.speed_mps[1:-1]
    mask = away_from_breakpoints(r, p.t[1:-1], dt)
    assert mask.sum() > 0.8 * len(mask)
    assert np.all(np.abs(fd[mask] - v[mask]) <= 0.02 * v[mask])


def test_last_sample_reaches_route_end():
    r = Route(RouteSpec(EAST_1KM, ((0, 7),)))
    ts = r.sample_times()
    assert ts[-1] == 143 and r.duration_s == pytest.approx(1000 / 7)
    p = r.profile()
    assert p.cumulative_distance_m[-1] == pytest.approx(1000.0)
    assert p.speed_mps[-1] == 7.0 and p.cumulative_distance_m[-2] == pytest.approx(994.0)


def test_profile_csv_shape():
    text = profile(RouteSpec(EAST_1KM, ((0, 10),))).to_csv()
    rows = text.splitlines()
    assert rows[0] == "t,lat,lon,dist_m,speed_mps,course_deg" and len(rows) == 102


def test_spec_validation():
    with pytest.raises(UsageError):
        RouteSpec(((0, 0),))
    with pytest.raises(UsageError):
        RouteSpec(((0, 0), (0, 0), (1, 1)))
    with pytest.raises(UsageError):
        RouteSpec(EAST_1KM, ((0, 5), (0, 6)))
    with pytest.raises(UsageError):
        Route(RouteSpec(EAST_1KM, ((0, 0),)))


def test_input_parsers():
    kml = ('<kml xmlns="http://www.opengis.net/kml/2.2"><Document><Placemark><LineString>'
           '<coordinates>11.5167,48.1173,0 11.5234,48.1218</coordinates>'
           '</LineString></Placemark></Document></kml>')
    assert import_kml_route(kml) == [(48.1173, 11.5167), (48.1218, 11.5234)]
    with pytest.raises(FormatError):
        import_kml_route("<kml/>")
    assert read_waypoints_csv("lat,lon\n1.5,2.5\n# note\n\n3,4\n") == [(1.5, 2.5), (3.0, 4.0)]
    with pytest.raises(FormatError):
        read_waypoints_csv("1,2\nx,y\n")
    assert parse_speed_anchors("0:0, 50:5") == ((0.0, 0.0), (50.0, 5.0))
    with pytest.raises(FormatError):
        parse_speed_anchors("0-5")
    assert parse_time("2024-05-01T10:00:00Z") == datetime(2024, 5, 1, 10, tzinfo=timezone.utc)
