"""In-vehicle tracking unit: GPS sentences in, sealed position reports out.

The unit loops awaiting a GPS fix, then samples the latest fix at a
fixed period and hands reports to the radio according to its mode:

* ``active``  -- send each report once, drop it if the link fails;
* ``passive`` -- never send, keep everything for :meth:`VehicleUnit.dump`;
* ``hybrid``  -- send, but keep undelivered reports and retry them in
  order on the next dispatch.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import List, Optional

from . import frame, nmea
from .errors import FormatError, RangeError, UsageError, VtrackError
from .geo import GeoFix, dm_to_deg
from .security import LinkKey, seal

MODES = ("active", "passive", "hybrid")
AWAITING_FIX = "awaiting-fix"
TRACKING = "tracking"

FLAG_BUFFERED_LATE = 0x01
FLAG_DIFFERENTIAL = 0x02

REPORT_FORMAT = ">IiiHB"
REPORT_BYTES = struct.calcsize(REPORT_FORMAT)
MAX_LAT_UDEG = 90_000_000
MAX_LON_UDEG = 180_000_000


@dataclass(frozen=True)
class PositionReport:
    unix_time: int
    lat_udeg: int
    lon_udeg: int
    seq: int
    flags: int = 0

    def __post_init__(self):
        if abs(self.lat_udeg) > MAX_LAT_UDEG:
            raise RangeError(f"latitude {self.lat_udeg} udeg out of range")
        if abs(self.lon_udeg) > MAX_LON_UDEG:
            raise RangeError(f"longitude {self.lon_udeg} udeg out of range")
        if not 0 <= self.unix_time <= 0xFFFFFFFF:
            raise RangeError("time must fit in 32 unsigned bits")
        if not 0 <= self.seq <= 0xFFFF:
            raise RangeError("seq must fit in 16 bits")
        if not 0 <= self.flags <= 0xFF:
            raise RangeError("flags must fit in 8 bits")

    @property
    def lat_deg(self) -> float:
        return self.lat_udeg / 1e6

    @property
    def lon_deg(self) -> float:
        return self.lon_udeg / 1e6


def to_udeg(deg: float) -> int:
    """Degrees to microdegrees, rounding halves away from zero."""
    return int(Decimal(repr(float(deg))).scaleb(6).quantize(Decimal(1), ROUND_HALF_UP))


def encode_report(r: PositionReport) -> bytes:
    return struct.pack(REPORT_FORMAT, r.unix_time, r.lat_udeg, r.lon_udeg, r.seq, r.flags)


def decode_report(b: bytes) -> PositionReport:
    if len(b) != REPORT_BYTES:
        raise FormatError(f"position report must be {REPORT_BYTES} bytes, got {len(b)}")
    return PositionReport(*struct.unpack(REPORT_FORMAT, b))


@dataclass(frozen=True)
class VehicleConfig:
    node_id: int
    station_id: int
    key: LinkKey
    mode: str = "active"
    sample_period_s: float = 1.0
    buffer_capacity: int = 1024

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.sample_period_s <= 0:
            raise RangeError("sample period must be positive")
        if self.buffer_capacity < 1:
            raise RangeError("buffer capacity must be at least 1")


@dataclass
class _Pending:
    report: PositionReport
    held: bool = False


@dataclass
class VehicleState:
    last_fix: Optional[GeoFix] = None
    pending: deque = field(default_factory=deque)
    seq_next: int = 0
    counter_next: int = 1
    phase: str = AWAITING_FIX
    last_date: Optional[str] = None
    counters: dict = field(default_factory=lambda: {
        "sentences": 0, "malformed": 0, "no_fix": 0, "samples": 0,
        "sent": 0, "delivered": 0, "dropped": 0, "retried": 0, "evicted": 0,
    })


def _epoch(date: str, hhmmss: str) -> float:
    day = datetime.strptime(date, "%d%m%y").replace(tzinfo=timezone.utc)
    return day.timestamp() + _seconds_of_day(hhmmss)


def _seconds_of_day(hhmmss: str) -> float:
    return int(hhmmss[0:2]) * 3600 + int(hhmmss[2:4]) * 60 + float(hhmmss[4:])


def _anchor_time_of_day(hhmmss: str, now: float) -> float:
    # GGA has no date: take the calendar day that puts the fix nearest ``now``.
    day0 = (now // 86400) * 86400
    tod = _seconds_of_day(hhmmss)
    return min((day0 + d * 86400 + tod for d in (-1, 0, 1)), key=lambda t: abs(t - now))


class VehicleUnit:
    def __init__(self, cfg: VehicleConfig):
        self.cfg = cfg
        self.state = VehicleState()

    @property
    def counters(self):
        return self.state.counters

    # -- GPS side ----------------------------------------------------------

    def on_sentence(self, line, now: float = 0.0) -> VehicleState:
        """Feed one NMEA line. Bad input is counted, never raised."""
        st = self.state
        st.counters["sentences"] += 1
        try:
            data = nmea.decode(line)
            if isinstance(data, nmea.GgaData):
                self._on_gga(data, now)
            elif isinstance(data, nmea.RmcData):
                self._on_rmc(data)
        except (VtrackError, ValueError):
            st.counters["malformed"] += 1
        return st

    def _on_gga(self, g: nmea.GgaData, now: float):
        st = self.state
        if not g.fix_quality:
            st.counters["no_fix"] += 1
            return
        if not g.has_position or g.utc_time is None:
            raise FormatError("GGA reports a fix without a position")
        st.last_fix = GeoFix(
            lat_deg=dm_to_deg(g.lat_dm, g.ns),
            lon_deg=dm_to_deg(g.lon_dm, g.ew),
            alt_m=g.altitude_m or 0.0,
            time_utc=_anchor_time_of_day(g.utc_time, now),
            fix_quality=g.fix_quality,
            num_sats=g.num_sats or 0,
        )
        st.phase = TRACKING

    def _on_rmc(self, r: nmea.RmcData):
        st = self.state
        if r.date is not None:
            st.last_date = r.date
        if not r.valid or st.last_fix is None:
            return
        speed = None if r.speed_knots is None else r.speed_knots / 1.943844
        st.last_fix = replace(st.last_fix, speed_mps=speed, course_deg=r.course_deg)

    # -- reporting ---------------------------------------------------------

    def sample(self, now: float = 0.0) -> Optional[PositionReport]:
        st = self.state
        if st.phase != TRACKING or st.last_fix is None:
            return None
        fix = st.last_fix
        flags = FLAG_DIFFERENTIAL if fix.fix_quality >= 2 else 0
        report = PositionReport(int(fix.time_utc), to_udeg(fix.lat_deg),
                                to_udeg(fix.lon_deg), st.seq_next, flags)
        st.seq_next = (st.seq_next + 1) & 0xFFFF
        st.counters["samples"] += 1
        st.pending.append(_Pending(report))
        while len(st.pending) > self.cfg.buffer_capacity:
            st.pending.popleft()
            st.counters["evicted"] += 1
        return report

    def build_frame(self, report: PositionReport, frame_id: int = 1) -> bytes:
        """Seal a report and wrap it in an encoded TxRequest API frame."""
        st = self.state
        sp = seal(self.cfg.key, self.cfg.node_id, st.counter_next, encode_report(report))
        st.counter_next += 1
        tx = frame.TxRequest(self.cfg.station_id, sp.to_bytes(), frame_id=frame_id)
        return frame.encode(frame.build_tx(tx))

    def dispatch(self, net, now: float) -> list:
        """Hand pending reports to the radio per the tracking mode.

        ``net`` needs a ``transmit(src, dst, data, now)`` method returning
        an object with a ``delivered`` flag (a :class:`PanNetwork` works).
        """
        st = self.state
        mode = self.cfg.mode
        results = []
        if mode == "passive":
            return results
        while st.pending:
            item = st.pending[0]
            report = item.report
            if item.held:
                report = replace(report, flags=report.flags | FLAG_BUFFERED_LATE)
            data = self.build_frame(report)
            res = net.transmit(self.cfg.node_id, self.cfg.station_id, data, now)
            results.append(res)
            st.counters["sent"] += 1
            if item.held:
                st.counters["retried"] += 1
            if res.delivered:
                st.counters["delivered"] += 1
                st.pending.popleft()
                continue
            if mode == "active":
                st.counters["dropped"] += 1
                st.pending.popleft()
                continue
            # Everything still queued now misses its real-time slot.
            for p in st.pending:
                p.held = True
            break
        return results

    def dump(self) -> List[PositionReport]:
        """Hand over and clear every buffered report, oldest first."""
        out = [p.report for p in self.state.pending]
        self.state.pending.clear()
        return out


def epoch_of_rmc(r: nmea.RmcData) -> Optional[float]:
    if r.date is None or r.utc_time is None:
        return None
    return _epoch(r.date, r.utc_time)
