import math
import random

import pytest
from hypothesis import given, strategies as st

from vtrack.errors import FormatError, RangeError
from vtrack.geo import (EARTH_RADIUS_M, GeoFix, Track, TrackPoint, deg_to_dm, dm_to_deg,
                        haversine_m, interpolate)


def fix(lat, lon, **kw):
    return GeoFix(lat, lon, **kw)


def test_dm_to_deg_examples():
    assert dm_to_deg("0000.000", "N") == 0.0
    assert dm_to_deg("4807.038", "N") == pytest.approx(48 + 7.038 / 60, abs=1e-12)
    assert dm_to_deg("4807.038", "N") == pytest.approx(48.1173, abs=1e-12)
    assert dm_to_deg("01131.000", "W") == pytest.approx(-(11 + 31 / 60), abs=1e-12)


def test_dm_to_deg_errors():
    with pytest.raises(RangeError):
        dm_to_deg("4860.000", "N")
    with pytest.raises(FormatError):
        dm_to_deg("48x7.038", "N")
    with pytest.raises(FormatError):
        dm_to_deg("4807.038", "Q")


def test_deg_to_dm_examples():
    assert deg_to_dm(0.0, "lat") == ("0000.0000", "N")
    assert deg_to_dm(48.1173, "lat") == ("4807.0380", "N")
    assert deg_to_dm(-11.5166667, "lon") == ("01131.0000", "W")
    with pytest.raises(RangeError):
        deg_to_dm(91.0, "lat")
    with pytest.raises(RangeError):
        deg_to_dm(-180.5, "lon")


def test_deg_to_dm_carries_rounded_minutes():
    # 59.99999 minutes rounds up into the next whole degree
    assert deg_to_dm(10 + 59.99999 / 60, "lat") == ("1100.0000", "N")


def test_conversion_round_trip_bound():
    rng = random.Random(3)
    for _ in range(10_000):
        axis = rng.choice(("lat", "lon"))
        limit = 90 if axis == "lat" else 180
        x = rng.uniform(-limit, limit)
        dm, hemi = deg_to_dm(x, axis)
        assert abs(dm_to_deg(dm, hemi) - x) <= 0.0001 / 60


def test_haversine_examples():
    a = fix(48.1173, 11.5167)
    assert haversine_m(a, a) == 0.0
    assert haversine_m(fix(0, 0), fix(0, 180)) == pytest.approx(math.pi * EARTH_RADIUS_M, rel=1e-12)
    assert haversine_m(fix(0, 0), fix(0, 180)) == pytest.approx(20_015_086.8, abs=0.1)
    same_meridian = haversine_m(a, fix(48.1273, 11.5167))
    assert same_meridian == pytest.approx(0.01 * math.pi / 180 * EARTH_RADIUS_M, rel=1e-9)
    assert same_meridian == pytest.approx(1111.95, abs=0.01)


coords = st.tuples(st.floats(-90, 90), st.floats(-180, 180)).map(lambda p: fix(*p))


@given(coords, coords)
def test_haversine_symmetric(a, b):
    assert haversine_m(a, b) == pytest.approx(haversine_m(b, a), abs=1e-6)


@given(coords, coords, coords)
def test_haversine_triangle_inequality(a, b, c):
    assert haversine_m(a, c) <= haversine_m(a, b) + haversine_m(b, c) + 1e-6


def test_interpolate_examples():
    a = fix(0, 0, time_utc=100.0)
    b = fix(0, 0.02, time_utc=102.0, alt_m=10.0)
    assert interpolate(a, b, 0.0) == a
    assert interpolate(a, b, 1.0) == b
    mid = interpolate(a, b, 0.5)
    assert (mid.lat_deg, mid.lon_deg, mid.time_utc, mid.alt_m) == (0.0, 0.01, 101.0, 5.0)
    with pytest.raises(RangeError):
        interpolate(a, b, 1.5)


def test_geofix_invariants():
    with pytest.raises(RangeError):
        GeoFix(95.0, 0.0)
    with pytest.raises(RangeError):
        GeoFix(0.0, 0.0, course_deg=360.0)


def test_track_keeps_time_seq_order():
    t = Track()
    for time_utc, seq in [(10, 2), (5, 0), (10, 1), (7, 9)]:
        t.add(TrackPoint(time_utc, 1.0, 2.0, 0xA1, seq))
    assert [(p.time_utc, p.seq) for p in t] == [(5, 0), (7, 9), (10, 1), (10, 2)]
