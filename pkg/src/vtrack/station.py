"""Monitoring station: authenticate and decode reports, keep tracks, export.

Exports are KML snapshots and CSV tables; live positions are re-emitted
as GGA/RMC sentence pairs on a local TCP port so a real-time GPS consumer
can follow the vehicles.
"""

from __future__ import annotations

import csv
import io
import logging
import socket
import threading
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional

from . import frame, nmea
from .errors import AuthenticationError, FormatError, RangeError, ReplayError, SizeError
from .geo import KNOTS_PER_MPS, Track, TrackPoint, deg_to_dm, distance_m, initial_bearing_deg
from .pansim import DeliveryResult, PanNetwork
from .security import ReplayState, open_payload
from .vehicle import FLAG_DIFFERENTIAL, PositionReport, decode_report

log = logging.getLogger(__name__)

KML_NS = "http://www.opengis.net/kml/2.2"
CSV_HEADER = ("node", "seq", "unix_time", "lat_deg", "lon_deg", "flags")


def node_name(node_id: int) -> str:
    return f"{node_id:016x}"


class MonitorStation:
    """Single-writer ingestion state; exporters read a consistent snapshot."""

    def __init__(self, key, node_id: int = 0, name: str = "Vehicle tracks", escaped: bool = False):
        self.key = key
        self.node_id = node_id
        self.name = name
        self.tracks: Dict[int, Track] = {}
        self.replay = ReplayState()
        self.counters = Counter(received=0, decoded=0, auth_failed=0, replayed=0,
                                malformed=0, imported=0)
        self.per_source: Dict[int, Counter] = {}
        self.subscribers: List[Callable[[str], None]] = []
        self._serial = frame.StreamDecoder(escaped)
        self._lock = threading.Lock()

    # -- ingestion ---------------------------------------------------------

    def _count(self, src: int, what: str):
        self.counters[what] += 1
        self.per_source.setdefault(src, Counter())[what] += 1

    def ingest(self, rx: frame.RxIndicator, now: Optional[float] = None) -> Optional[TrackPoint]:
        """Open, decode and store one received report.

        Every outcome lands in exactly one counter; nothing here raises.
        """
        src = rx.src64
        self._count(src, "received")
        try:
            plain = open_payload(self.key, src, rx.payload, self.replay)
            report = decode_report(plain)
        except AuthenticationError:
            self._count(src, "auth_failed")
            return None
        except ReplayError:
            self._count(src, "replayed")
            return None
        except (FormatError, RangeError, SizeError):
            self._count(src, "malformed")
            return None
        self._count(src, "decoded")
        point = self._store(src, report, now)
        self.publish(self.nmea_lines(point))
        return point

    def import_log(self, src: int, reports) -> List[TrackPoint]:
        """Add reports transferred by hand from a passive unit's memory."""
        points = []
        for r in reports:
            points.append(self._store(src, r, None))
            self._count(src, "imported")
        return points

    def _store(self, src: int, report: PositionReport, now) -> TrackPoint:
        point = TrackPoint(report.unix_time, report.lat_deg, report.lon_deg,
                           src, report.seq, report.flags, now)
        with self._lock:
            self.tracks.setdefault(src, Track()).add(point)
        return point

    def receive_serial(self, data: bytes, now: Optional[float] = None) -> List[TrackPoint]:
        """Feed raw API-frame bytes from the station's radio."""
        points = []
        for f in self._serial.feed(data):
            if f.frame_type != frame.RX_INDICATOR:
                continue
            try:
                rx = frame.parse_rx(f)
            except (FormatError, SizeError):
                self.counters["malformed"] += 1
                self.counters["received"] += 1
                continue
            p = self.ingest(rx, now)
            if p is not None:
                points.append(p)
        return points

    def receive_delivery(self, d: DeliveryResult) -> Optional[TrackPoint]:
        """What the station radio does with a delivered over-the-air frame."""
        try:
            tx = frame.parse_tx(frame.decode(d.data)[0])
        except Exception:
            self._count(d.src, "received")
            self._count(d.src, "malformed")
            return None
        return self.ingest(frame.RxIndicator(d.src, tx.payload), d.arrival_time_s)

    def conserved(self) -> bool:
        c = self.counters
        return c["received"] == c["decoded"] + c["auth_failed"] + c["replayed"] + c["malformed"]

    # -- exports -----------------------------------------------------------

    def snapshot(self) -> Dict[int, tuple]:
        with self._lock:
            return {src: t.points for src, t in sorted(self.tracks.items())}

    def write_kml(self) -> str:
        ET.register_namespace("", KML_NS)
        q = lambda tag: f"{{{KML_NS}}}{tag}"
        root = ET.Element(q("kml"))
        doc = ET.SubElement(root, q("Document"))
        ET.SubElement(doc, q("name")).text = self.name
        for src, points in self.snapshot().items():
            pm = ET.SubElement(doc, q("Placemark"))
            ET.SubElement(pm, q("name")).text = node_name(src)
            ls = ET.SubElement(pm, q("LineString"))
            ET.SubElement(ls, q("tessellate")).text = "1"
            coords = "\n".join(f"{p.lon_deg:.6f},{p.lat_deg:.6f},0" for p in points)
            ET.SubElement(ls, q("coordinates")).text = coords
        ET.indent(root)
        return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"

    def write_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for src, points in self.snapshot().items():
            for p in points:
                w.writerow((node_name(src), p.seq, p.time_utc, f"{p.lat_deg:.6f}",
                            f"{p.lon_deg:.6f}", p.flags))
        return buf.getvalue()

    # -- live NMEA ---------------------------------------------------------

    def nmea_lines(self, point: TrackPoint) -> List[str]:
        """GGA + RMC pair describing a freshly ingested point."""
        when = datetime.fromtimestamp(point.time_utc, tz=timezone.utc)
        hhmmss = when.strftime("%H%M%S") + ".000"
        lat, ns = deg_to_dm(point.lat_deg, "lat")
        lon, ew = deg_to_dm(point.lon_deg, "lon")
        speed_kn, course = 0.0, None
        track = self.tracks.get(point.source_node)
        prev = _previous(track, point) if track is not None else None
        if prev is not None and point.time_utc > prev.time_utc:
            d = distance_m(prev.lat_deg, prev.lon_deg, point.lat_deg, point.lon_deg)
            speed_kn = round(d / (point.time_utc - prev.time_utc) * KNOTS_PER_MPS, 1)
            if d > 0:
                course = round(initial_bearing_deg(prev.lat_deg, prev.lon_deg,
                                                   point.lat_deg, point.lon_deg), 1) % 360.0
        gga = nmea.GgaData(hhmmss, lat, ns, lon, ew,
                           2 if point.flags & FLAG_DIFFERENTIAL else 1,
                           None, None, 0.0, None)
        rmc = nmea.RmcData(hhmmss, "A", lat, ns, lon, ew, speed_kn, course,
                           when.strftime("%d%m%y"), None, None, "A")
        return [nmea.format_gga(gga), nmea.format_rmc(rmc)]

    def subscribe(self, callback: Callable[[str], None]):
        self.subscribers.append(callback)

    def publish(self, lines: List[str]):
        for cb in list(self.subscribers):
            for line in lines:
                cb(line)


def _previous(track: Track, point: TrackPoint) -> Optional[TrackPoint]:
    prev = None
    for p in track:
        if p is point:
            return prev
        prev = p
    return None


class NmeaBroadcaster:
    """Local TCP port that copies every published line to all clients.

    Lines published while nobody is connected are discarded.
    """

    def __init__(self, port: int = 0, host: str = "127.0.0.1"):
        self._server = socket.create_server((host, port))
        self.port = self._server.getsockname()[1]
        self._clients: List[socket.socket] = []
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._accept, daemon=True)
        self._thread.start()

    def _accept(self):
        while True:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            with self._lock:
                self._clients.append(conn)

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def __call__(self, line: str):
        data = line.encode("ascii")
        with self._lock:
            for c in list(self._clients):
                try:
                    c.sendall(data)
                except OSError:
                    self._clients.remove(c)
                    c.close()

    def close(self):
        self._server.close()
        with self._lock:
            for c in self._clients:
                c.close()
            self._clients.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class LinkReport:
    sent: int
    delivered: int
    reasons: Counter = field(default_factory=Counter)

    @property
    def loss_fraction(self) -> float:
        return 0.0 if not self.sent else 1.0 - self.delivered / self.sent

    @property
    def reason(self) -> Optional[str]:
        if self.delivered or not self.reasons:
            return None
        return self.reasons.most_common(1)[0][0]

    @property
    def stable(self) -> bool:
        return self.sent > 0 and self.delivered == self.sent


def link_check(net: PanNetwork, station: int, peer: int, n_frames: int = 100,
               now: Optional[float] = None, probe_bytes: int = 16,
               spacing_s: float = 0.01) -> LinkReport:
    """Send ``n_frames`` probes from ``peer`` to ``station`` and tally the outcome."""
    t0 = net.clock if now is None else now
    report = LinkReport(0, 0)
    for i in range(n_frames):
        payload = frame.encode(frame.build_tx(frame.TxRequest(station, bytes(probe_bytes), frame_id=i & 0xFF)))
        r = net.transmit(peer, station, payload, t0 + i * spacing_s, enqueue=False)
        report.sent += 1
        if r.delivered:
            report.delivered += 1
        else:
            report.reasons[r.drop_reason] += 1
    return report
