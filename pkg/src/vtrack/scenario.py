"""Scenario files and the end-to-end driver.

A scenario file is a list of sections, each opened by ``[type name]``
(``[pan]``, ``[channel]`` and ``[run]`` take no name) and followed by
``key = value`` lines. ``#`` starts a comment. Example::

    [pan]
    topology = star
    channel = 15
    origin = 48.1173, 11.5167

    [channel]
    max_range_m = 1500
    per_hop_loss_prob = 0

    [run]
    duration_s = 600
    seed = 7
    key = 000102030405060708090a0b0c0d0e0f

    [station base]
    id = 0x0013a20040000001
    x = 0
    y = 0

    [route loop]
    waypoints = 48.1173,11.5167; 48.1200,11.5167; 48.1200,11.5207
    speed = 0:8
    start = 2024-05-01T10:00:00Z

    [vehicle car1]
    id = 0x0013a200400000a1
    route = loop
    mode = hybrid

    [outage tunnel]
    start = 100
    end = 130
    node = car1

Node references (``parent``, ``node``, ``peer``) use section names.
Relative file paths (``waypoints_file``, ``kml``) resolve against the
scenario file's directory.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import routegen
from .errors import VtrackError
from .geo import local_xy
from .pansim import ChannelModel, NodeSim, Outage, PanConfig, PanNetwork
from .routegen import Route, RouteSpec
from .security import LinkKey
from .station import MonitorStation, node_name
from .vehicle import FLAG_BUFFERED_LATE, VehicleConfig, VehicleUnit

_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)(?:\s+([^\]\s]+))?\s*\]$")
SINGLETONS = ("pan", "channel", "run")
NAMED = ("station", "node", "vehicle", "route", "outage")


class ScenarioError(VtrackError):
    """Invalid scenario content; the message names the section, key and line."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.key = key


@dataclass
class Section:
    kind: str
    name: Optional[str]
    line: int
    values: Dict[str, Tuple[str, int]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"[{self.kind}{' ' + self.name if self.name else ''}]"

    def get(self, key, conv=str, default=None, required=False):
        if key not in self.values:
            if required:
                raise ScenarioError(f"{self.label} is missing required key", self.line, key)
            return default
        text, line = self.values[key]
        try:
            return conv(text)
        except (ValueError, OSError, VtrackError) as exc:
            raise ScenarioError(f"{self.label}: bad value {text!r}: {exc}", line, key) from None


def parse_sections(text: str) -> List[Section]:
    sections: List[Section] = []
    current = None
    last_key = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if raw[:1].isspace() and last_key is not None:
            # Indented line continues the previous value.
            value, first = current.values[last_key]
            current.values[last_key] = (f"{value} {line}", first)
            continue
        m = _HEADER.match(line)
        if m:
            kind, name = m.group(1).lower(), m.group(2)
            if kind in SINGLETONS:
                if name:
                    raise ScenarioError(f"[{kind}] takes no name", n)
                if any(s.kind == kind for s in sections):
                    raise ScenarioError(f"duplicate [{kind}] section", n)
            elif kind in NAMED:
                if not name:
                    raise ScenarioError(f"[{kind}] needs a name", n)
                if any(s.name == name for s in sections):
                    raise ScenarioError(f"duplicate section name {name!r}", n)
            else:
                raise ScenarioError(f"unknown section type [{kind}]", n)
            current = Section(kind, name, n)
            sections.append(current)
            last_key = None
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", n)
        key, value = (p.strip() for p in line.split("=", 1))
        if current is None:
            raise ScenarioError("key outside of any section", n, key)
        if key in current.values:
            raise ScenarioError(f"{current.label}: duplicate key", n, key)
        current.values[key] = (value, n)
        last_key = key
    return sections


def _int(text: str) -> int:
    return int(text, 0)


def _pair(text: str) -> Tuple[float, float]:
    a, b = text.split(",")
    return float(a), float(b)


def _waypoints(text: str) -> List[Tuple[float, float]]:
    return [_pair(p) for p in re.split(r"[;\s]+(?=[-+\d.])", text.strip()) if p.strip()]


@dataclass
class VehicleSpec:
    name: str
    cfg: VehicleConfig
    route: str
    role: str = "end-device"
    parent: Optional[str] = None


@dataclass
class Scenario:
    pan: PanConfig
    channel: ChannelModel
    key: LinkKey
    duration_s: float
    origin: Tuple[float, float]
    station: NodeSim
    station_name: str
    nodes: Dict[str, NodeSim]
    routes: Dict[str, RouteSpec]
    vehicles: List[VehicleSpec]
    outages: List[Outage]
    tick_s: float = 1.0

    @property
    def seed(self) -> int:
        return self.pan.seed


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


def parse_scenario(text: str, base_dir: Path = Path(".")) -> Scenario:
    sections = parse_sections(text)
    by_kind: Dict[str, List[Section]] = {}
    for s in sections:
        by_kind.setdefault(s.kind, []).append(s)
    empty = lambda kind: Section(kind, None, 0)
    pan_s = by_kind.get("pan", [empty("pan")])[0]
    chan_s = by_kind.get("channel", [empty("channel")])[0]
    run_s = by_kind.get("run", [None])[0]
    if run_s is None:
        raise ScenarioError("scenario needs a [run] section")

    stations = by_kind.get("station", [])
    if len(stations) != 1:
        line = stations[1].line if len(stations) > 1 else None
        raise ScenarioError(f"scenario needs exactly one [station] section, found {len(stations)}", line)

    seed = run_s.get("seed", _int, 0)
    try:
        pan = PanConfig(
            pan_id=pan_s.get("pan_id", _int, 0x3332),
            channel=pan_s.get("channel", _int, 11),
            topology=pan_s.get("topology", str, "star"),
            data_rate_bps=pan_s.get("data_rate_bps", _int, 250_000),
            seed=seed,
        )
    except VtrackError as exc:
        raise ScenarioError(f"[pan]: {exc}", pan_s.line) from None
    try:
        channel = ChannelModel(
            max_range_m=chan_s.get("max_range_m", float, 1500.0),
            per_hop_loss_prob=chan_s.get("per_hop_loss_prob", float, 0.0),
            prop_delay_s_per_hop=chan_s.get("prop_delay_s_per_hop", float, 0.0),
        )
    except VtrackError as exc:
        raise ScenarioError(f"[channel]: {exc}", chan_s.line) from None
    key = run_s.get("key", LinkKey.from_hex, required=True)
    duration = run_s.get("duration_s", float, required=True)
    if duration <= 0:
        raise ScenarioError("[run]: duration must be positive", run_s.values["duration_s"][1], "duration_s")
    origin = pan_s.get("origin", _pair, None)

    routes: Dict[str, RouteSpec] = {}
    for s in by_kind.get("route", []):
        if "waypoints" in s.values:
            wps = s.get("waypoints", _waypoints)
        elif "waypoints_file" in s.values:
            wps = s.get("waypoints_file", lambda p: routegen.read_waypoints_csv(
                (base_dir / p).read_text(encoding="utf-8")))
        elif "kml" in s.values:
            wps = s.get("kml", lambda p: routegen.import_kml_route(
                (base_dir / p).read_text(encoding="utf-8")))
        else:
            raise ScenarioError(f"{s.label} needs waypoints, waypoints_file or kml", s.line, "waypoints")
        try:
            routes[s.name] = RouteSpec(
                waypoints=wps,
                speed_profile=s.get("speed", routegen.parse_speed_anchors, ((0.0, 10.0),)),
                start_time=s.get("start", routegen.parse_time, routegen.DEFAULT_START),
                altitude_m=s.get("alt", float, 0.0),
                rate_hz=s.get("rate_hz", float, 1.0),
            )
            Route(routes[s.name])
        except VtrackError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{s.label}: {exc}", s.line) from None
    if origin is None:
        if not routes:
            origin = (0.0, 0.0)
        else:
            origin = next(iter(routes.values())).waypoints[0]

    names: Dict[str, int] = {}
    ids = set()

    def node_id(s: Section) -> int:
        nid = s.get("id", _int, required=True)
        if nid in ids:
            raise ScenarioError(f"{s.label}: duplicate node id {nid:#x}", s.values["id"][1], "id")
        ids.add(nid)
        names[s.name] = nid
        return nid

    def ref(s: Section, key: str) -> Optional[int]:
        name = s.get(key)
        if name is None:
            return None
        if name not in names:
            raise ScenarioError(f"{s.label}: unknown node {name!r}", s.values[key][1], key)
        return names[name]

    st = stations[0]
    station = NodeSim(node_id(st), (st.get("x", float, 0.0), st.get("y", float, 0.0)),
                      st.get("role", str, "coordinator"), None)

    nodes: Dict[str, NodeSim] = {}
    for s in by_kind.get("node", []):
        nid = node_id(s)
        try:
            nodes[s.name] = NodeSim(nid, (s.get("x", float, 0.0), s.get("y", float, 0.0)),
                                    s.get("role", str, "router"), ref(s, "parent"))
        except VtrackError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{s.label}: {exc}", s.line) from None

    vehicles: List[VehicleSpec] = []
    for s in by_kind.get("vehicle", []):
        nid = node_id(s)
        rname = s.get("route", required=True)
        if rname not in routes:
            raise ScenarioError(f"{s.label}: undefined route {rname!r}", s.values["route"][1], "route")
        try:
            cfg = VehicleConfig(
                node_id=nid, station_id=station.id, key=key,
                mode=s.get("mode", str, "active"),
                sample_period_s=s.get("period", float, 1.0),
                buffer_capacity=s.get("buffer", _int, 1024),
            )
        except VtrackError as exc:
            raise ScenarioError(f"{s.label}: {exc}", s.line) from None
        parent = s.get("parent")
        if parent is not None and parent not in names:
            raise ScenarioError(f"{s.label}: unknown node {parent!r}", s.values["parent"][1], "parent")
        vehicles.append(VehicleSpec(s.name, cfg, rname, s.get("role", str, "end-device"), parent))

    outages = []
    for s in by_kind.get("outage", []):
        start = s.get("start", float, required=True)
        end = s.get("end", float, required=True)
        if not 0 <= start < end <= duration:
            raise ScenarioError(f"{s.label}: window [{start}, {end}) not within [0, {duration}]",
                                s.values["start"][1], "start")
        loss = s.get("loss", float, 1.0)
        if not 0 <= loss <= 1:
            raise ScenarioError(f"{s.label}: loss must be in [0, 1]", s.values["loss"][1], "loss")
        outages.append(Outage(start, end, loss, ref(s, "node"), ref(s, "peer")))

    periods = [v.cfg.sample_period_s for v in vehicles] or [1.0]
    tick = run_s.get("tick_s", float, min(periods))
    return Scenario(pan, channel, key, duration, origin, station, st.name, nodes,
                    routes, vehicles, outages, tick)


# -- running -------------------------------------------------------------------

@dataclass
class ScenarioResult:
    station: MonitorStation
    network: PanNetwork
    vehicles: Dict[str, VehicleUnit]
    dumps: Dict[str, list]
    nmea_logs: Dict[str, List[str]]
    profiles: Dict[str, routegen.ProfileSeries]
    stats_rows: List[dict]

    def stats_csv(self) -> str:
        buf = io.StringIO()
        cols = list(STATS_COLUMNS)
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(self.stats_rows)
        return buf.getvalue()


STATS_COLUMNS = ("vehicle", "node", "mode", "samples", "sent", "delivered", "dropped",
                 "retried", "evicted", "dumped", "station_points", "late_points",
                 "auth_failed", "replayed")


def _parked_sentences(route: Route, t: float) -> List[str]:
    fix = route.eval(route.duration_s)
    fix = replace(fix, time_utc=route.spec.start_time.timestamp() + t, speed_mps=0.0)
    return routegen.fix_sentences(fix)


def run_scenario(scn: Scenario, out_dir=None, import_passive: bool = True,
                 subscribers=()) -> ScenarioResult:
    """Drive routes -> vehicles -> network -> station for the whole duration.

    With ``out_dir`` set, writes ``station.kml``, ``station.csv``,
    ``stats.csv``, ``profile_<route>.csv`` and ``nmea_<vehicle>.log``.
    ``subscribers`` receive the station's live NMEA lines.
    """
    net = PanNetwork(scn.pan, scn.channel)
    net.add_node(scn.station)
    pending_nodes = list(scn.nodes.values())
    # Parents must exist before children in tree topologies.
    while pending_nodes:
        progressed = False
        for n in list(pending_nodes):
            if n.parent is None or n.parent in net.nodes:
                net.add_node(n)
                pending_nodes.remove(n)
                progressed = True
        if not progressed:
            raise ScenarioError("node parents form a cycle or reference a vehicle")
    names = {scn.station_name: scn.station.id, **{k: n.id for k, n in scn.nodes.items()}}
    for o in scn.outages:
        net.add_outage(o)

    station = MonitorStation(scn.key, scn.station.id)
    for cb in subscribers:
        station.subscribe(cb)
    routes = {name: Route(spec) for name, spec in scn.routes.items()}
    units: Dict[str, VehicleUnit] = {}
    logs: Dict[str, List[str]] = {}
    next_sample: Dict[str, float] = {}
    for v in scn.vehicles:
        parent = names.get(v.parent) if v.parent else None
        if scn.pan.topology == "tree" and parent is None:
            parent = scn.station.id
        net.add_node(NodeSim(v.cfg.node_id, (0.0, 0.0), v.role, parent))
        units[v.name] = VehicleUnit(v.cfg)
        logs[v.name] = []
        next_sample[v.name] = 0.0

    epoch0 = min((r.start_time.timestamp() for r in scn.routes.values()), default=0.0)
    n_ticks = int(math.ceil(scn.duration_s / scn.tick_s - 1e-9))
    for k in range(n_ticks):
        t = k * scn.tick_s
        for d in net.advance_to(t):
            station.receive_delivery(d)
        now_epoch = epoch0 + t
        for v in scn.vehicles:
            route = routes[v.route]
            unit = units[v.name]
            rt = now_epoch - route.spec.start_time.timestamp()
            if rt < 0:
                continue
            if rt <= route.duration_s + 1e-9:
                fix = route.eval(min(rt, route.duration_s))
                lines = routegen.fix_sentences(fix)
            else:
                fix = route.eval(route.duration_s)
                lines = _parked_sentences(route, rt)
            net.set_position(v.cfg.node_id, local_xy(fix.lat_deg, fix.lon_deg, scn.origin))
            for line in lines:
                logs[v.name].append(line)
                unit.on_sentence(line, now_epoch)
            if t + 1e-9 >= next_sample[v.name]:
                unit.sample(now_epoch)
                next_sample[v.name] += v.cfg.sample_period_s
            unit.dispatch(net, t)
    for d in net.advance_to(max(net.clock, n_ticks * scn.tick_s) + 3600.0):
        station.receive_delivery(d)

    dumps = {}
    for v in scn.vehicles:
        if v.cfg.mode == "passive":
            dumps[v.name] = units[v.name].dump()
            if import_passive:
                station.import_log(v.cfg.node_id, dumps[v.name])

    rows = []
    snap = station.snapshot()
    for v in scn.vehicles:
        c = units[v.name].counters
        per = station.per_source.get(v.cfg.node_id, {})
        points = snap.get(v.cfg.node_id, ())
        rows.append({
            "vehicle": v.name, "node": node_name(v.cfg.node_id), "mode": v.cfg.mode,
            "samples": c["samples"], "sent": c["sent"], "delivered": per.get("decoded", 0),
            "dropped": c["dropped"], "retried": c["retried"], "evicted": c["evicted"],
            "dumped": len(dumps.get(v.name, ())), "station_points": len(points),
            "late_points": sum(1 for p in points if p.flags & FLAG_BUFFERED_LATE),
            "auth_failed": per.get("auth_failed", 0), "replayed": per.get("replayed", 0),
        })
    profiles = {name: r.profile() for name, r in routes.items()}
    result = ScenarioResult(station, net, units, dumps, logs, profiles, rows)
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def write_outputs(result: ScenarioResult, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    def put(name, text):
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    put("station.kml", result.station.write_kml())
    put("station.csv", result.station.write_csv())
    put("stats.csv", result.stats_csv())
    for name, prof in result.profiles.items():
        put(f"profile_{name}.csv", prof.to_csv())
    for name, lines in result.nmea_logs.items():
        put(f"nmea_{name}.log", "".join(lines))
