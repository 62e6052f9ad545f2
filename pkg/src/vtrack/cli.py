"""Command-line entry point.

Exit status: 0 on success, 1 for bad data, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import re
import sys
import time
from pathlib import Path
from types import SimpleNamespace

from . import __version__, frame, nmea, routegen
from .errors import VtrackError
from .pansim import ChannelModel, NodeSim, PanConfig, PanNetwork
from .scenario import load_scenario, run_scenario
from .security import LinkKey
from .station import MonitorStation, NmeaBroadcaster, link_check, node_name
from .vehicle import VehicleConfig, VehicleUnit, epoch_of_rmc


class DataError(Exception):
    pass


def _hex_bytes(text: str) -> bytes:
    cleaned = re.sub(r"\s+", "", text)
    if cleaned.lower().startswith("0x"):
        cleaned = cleaned[2:]
    try:
        return bytes.fromhex(cleaned)
    except ValueError:
        raise DataError(f"not hexadecimal: {text!r}") from None


def _node_id(text: str) -> int:
    try:
        value = int(text, 16) if not text.lower().startswith("0x") else int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad node id {text!r}") from None
    if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
        raise argparse.ArgumentTypeError("node id must be 64 bits")
    return value


def _key(text: str) -> LinkKey:
    try:
        return LinkKey.from_hex(text)
    except VtrackError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- nmea ----------------------------------------------------------------------

def cmd_nmea_parse(args) -> int:
    text = " ".join(args.sentence) if args.sentence else _read_text(args.file)
    lines = [l for l in re.split(r"\r?\n|(?=\$)", text) if l.strip()]
    status = 0
    for i, line in enumerate(lines):
        if i:
            print()
        try:
            rows = nmea.describe(line.strip())
        except VtrackError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            status = 1
            continue
        for label, value in rows:
            print(f"{label}: {value}")
    return status


# -- frame ---------------------------------------------------------------------

def cmd_frame_encode(args) -> int:
    try:
        ftype = int(args.type, 0)
    except ValueError:
        raise DataError(f"bad frame type {args.type!r}") from None
    data = _hex_bytes(" ".join(args.data)) if args.data else b""
    print(frame.encode(frame.ApiFrame(ftype, data), args.escaped).hex())
    return 0


def cmd_frame_decode(args) -> int:
    raw = _hex_bytes(" ".join(args.hex) if args.hex else sys.stdin.read())
    status = 0
    pos = 0
    first = True
    while pos < len(raw):
        try:
            f, used = frame.decode(raw[pos:], args.escaped)
        except VtrackError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            status = 1
            used = getattr(exc, "consumed", 0)
            if used == 0:
                break
            pos += used
            continue
        if not first:
            print()
        first = False
        for label, value in frame.describe(f):
            print(f"{label}: {value}")
        pos += used
    return status


# -- routegen ------------------------------------------------------------------

def cmd_routegen(args) -> int:
    if args.kml:
        wps = routegen.import_kml_route(_read_text(args.kml))
    else:
        wps = routegen.read_waypoints_csv(_read_text(args.waypoints))
    spec = routegen.RouteSpec(
        waypoints=wps,
        speed_profile=routegen.parse_speed_anchors(args.speed),
        start_time=routegen.parse_time(args.start) if args.start else routegen.DEFAULT_START,
        altitude_m=args.alt,
        rate_hz=args.rate,
    )
    route = routegen.Route(spec)
    _write(args.out, "".join(route.generate()))
    if args.profile_out:
        _write(args.profile_out, route.profile().to_csv())
    return 0


# -- vehicle -------------------------------------------------------------------

class _SerialSink:
    """Stands in for the radio: records every frame handed to it."""

    def __init__(self):
        self.frames = []

    def transmit(self, src, dst, data, now=None):
        self.frames.append((src, data))
        return SimpleNamespace(delivered=True, drop_reason=None)


def cmd_vehicle(args) -> int:
    cfg = VehicleConfig(args.node_id, args.station_id, args.key, args.mode,
                        args.period, args.buffer)
    unit = VehicleUnit(cfg)
    sink = _SerialSink()
    lines = _read_text(args.gps).splitlines()

    clock = 0.0
    for line in lines:
        try:
            data = nmea.decode(line)
        except VtrackError:
            continue
        if isinstance(data, nmea.RmcData) and epoch_of_rmc(data) is not None:
            clock = epoch_of_rmc(data)
            break

    next_sample = None
    for line in lines:
        try:
            data = nmea.decode(line)
            if isinstance(data, nmea.RmcData) and epoch_of_rmc(data) is not None:
                clock = epoch_of_rmc(data)
        except VtrackError:
            pass
        unit.on_sentence(line, clock)
        fix = unit.state.last_fix
        if fix is None:
            continue
        if next_sample is None or fix.time_utc >= next_sample - 1e-9:
            unit.sample(fix.time_utc)
            unit.dispatch(sink, fix.time_utc)
            next_sample = fix.time_utc + args.period

    out = []
    for src, data in sink.frames:
        if args.as_rx:
            tx = frame.parse_tx(frame.decode(data)[0])
            data = frame.encode(frame.build_rx(frame.RxIndicator(src, tx.payload)), args.escaped)
        elif args.escaped:
            data = frame.encode(frame.decode(data)[0], True)
        out.append(data.hex() + "\n")
    if cfg.mode == "passive":
        out = ["seq,unix_time,lat_deg,lon_deg,flags\n"]
        for r in unit.dump():
            out.append(f"{r.seq},{r.unix_time},{r.lat_deg:.6f},{r.lon_deg:.6f},{r.flags}\n")
    _write(args.out, "".join(out))
    c = unit.counters
    print(f"sentences={c['sentences']} malformed={c['malformed']} samples={c['samples']} "
          f"frames={len(sink.frames)}", file=sys.stderr)
    return 0


# -- station -------------------------------------------------------------------

def cmd_station(args) -> int:
    station = MonitorStation(args.key, escaped=args.escaped)
    broadcaster = None
    if args.nmea_port is not None:
        broadcaster = NmeaBroadcaster(args.nmea_port)
        station.subscribe(broadcaster)
        print(f"NMEA source listening on 127.0.0.1:{broadcaster.port}", file=sys.stderr)
        if args.wait_client:
            deadline = time.monotonic() + args.wait_client
            while broadcaster.client_count == 0 and time.monotonic() < deadline:
                time.sleep(0.05)
    try:
        text = _read_text(args.input)
        for line in text.splitlines():
            if line.strip():
                station.receive_serial(_hex_bytes(line))
        if args.kml:
            _write(args.kml, station.write_kml())
        if args.csv:
            _write(args.csv, station.write_csv())
    finally:
        if broadcaster is not None:
            broadcaster.close()
    c = station.counters
    print(f"received={c['received']} decoded={c['decoded']} auth_failed={c['auth_failed']} "
          f"replayed={c['replayed']} malformed={c['malformed']}", file=sys.stderr)
    return 0


# -- link-check ----------------------------------------------------------------

def cmd_link_check(args) -> int:
    if args.scenario:
        if not Path(args.scenario).is_file():
            raise SystemExit(_usage(args, f"scenario file not found: {args.scenario}"))
        scn = load_scenario(args.scenario)
        net = PanNetwork(scn.pan, scn.channel)
        net.add_node(scn.station)
        for n in scn.nodes.values():
            net.add_node(n)
        peers = {name: n.id for name, n in scn.nodes.items()}
        if args.peer not in peers:
            raise DataError(f"unknown peer {args.peer!r}; known: {', '.join(sorted(peers)) or 'none'}")
        station, peer = scn.station.id, peers[args.peer]
    else:
        net = PanNetwork(PanConfig(topology="star", seed=args.seed),
                         ChannelModel(max_range_m=args.range, per_hop_loss_prob=args.loss))
        station, peer = 0x1, 0x2
        net.add_node(NodeSim(station, (0.0, 0.0), "coordinator"))
        net.add_node(NodeSim(peer, (args.distance, 0.0), "end-device"))
    rep = link_check(net, station, peer, args.n)
    print(f"station={node_name(station)} peer={node_name(peer)}")
    print(f"sent={rep.sent} delivered={rep.delivered} loss_fraction={rep.loss_fraction:.4f}")
    print(f"stable={'yes' if rep.stable else 'no'}" + (f" reason={rep.reason}" if rep.reason else ""))
    return 0


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    result = run_scenario(load_scenario(args.scenario), args.out_dir)
    sys.stdout.write(result.stats_csv())
    return 0


def _usage(args, message: str) -> int:
    args._parser.print_usage(sys.stderr)
    print(f"{args._parser.prog}: error: {message}", file=sys.stderr)
    return 2


def build_parser() -> argparse.ArgumentParser:
    version = f"%(prog)s {__version__}"

    def sub(parent, name, help_text, func):
        p = parent.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--version", action="version", version=version)
        p.set_defaults(func=func, _parser=p)
        return p

    parser = argparse.ArgumentParser(prog="vtrack", description="Secure vehicle tracking toolkit.")
    parser.add_argument("--version", action="version", version=version)
    cmds = parser.add_subparsers(dest="command", required=True)

    p_nmea = cmds.add_parser("nmea", help="NMEA sentence tools")
    p_nmea.add_argument("--version", action="version", version=version)
    nmea_cmds = p_nmea.add_subparsers(dest="action", required=True)
    p = sub(nmea_cmds, "parse", "Dump the labelled fields of NMEA sentences.", cmd_nmea_parse)
    p.add_argument("sentence", nargs="*", help="sentence text (default: read --file)")
    p.add_argument("--file", default="-", help="file of sentences, '-' for stdin")

    p_frame = cmds.add_parser("frame", help="API frame tools")
    p_frame.add_argument("--version", action="version", version=version)
    frame_cmds = p_frame.add_subparsers(dest="action", required=True)
    p = sub(frame_cmds, "encode", "Encode an API frame; prints lowercase hex.", cmd_frame_encode)
    p.add_argument("type", help="frame type, e.g. 0x10")
    p.add_argument("data", nargs="*", help="frame data as hex")
    p.add_argument("--escaped", action="store_true", help="escaped API mode (AP=2)")
    p = sub(frame_cmds, "decode", "Decode hex API frames into a typed dump.", cmd_frame_decode)
    p.add_argument("hex", nargs="*", help="hex bytes, whitespace tolerated (default: stdin)")
    p.add_argument("--escaped", action="store_true", help="escaped API mode (AP=2)")

    p = sub(cmds, "routegen", "Generate an NMEA stream and profile from a route.", cmd_routegen)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--waypoints", help="CSV file of lat,lon lines")
    src.add_argument("--kml", help="KML file; its first LineString is the route")
    p.add_argument("--speed", default="0:10", help="speed anchors 's:v,s:v,...' in m and m/s")
    p.add_argument("--start", help="ISO-8601 UTC start time")
    p.add_argument("--rate", type=float, default=1.0, help="samples per second")
    p.add_argument("--alt", type=float, default=0.0, help="constant altitude in metres")
    p.add_argument("--out", default="-", help="NMEA output file")
    p.add_argument("--profile-out", help="profile CSV output file")

    p = sub(cmds, "vehicle", "Run the vehicle unit over an NMEA log; prints API frames as hex.", cmd_vehicle)
    p.add_argument("--mode", choices=("active", "passive", "hybrid"), default="active")
    p.add_argument("--gps", required=True, help="NMEA log file, '-' for stdin")
    p.add_argument("--node-id", type=_node_id, required=True)
    p.add_argument("--station-id", type=_node_id, required=True)
    p.add_argument("--key", type=_key, required=True, help="32 hex characters")
    p.add_argument("--period", type=float, default=1.0, help="sample period in seconds")
    p.add_argument("--buffer", type=int, default=1024, help="report buffer capacity")
    p.add_argument("--as-rx", action="store_true",
                   help="emit the RxIndicator frames the station radio would produce")
    p.add_argument("--escaped", action="store_true")
    p.add_argument("--out", default="-")

    p = sub(cmds, "station", "Ingest hex API frames; write KML/CSV and serve live NMEA.", cmd_station)
    p.add_argument("--key", type=_key, required=True)
    p.add_argument("--input", default="-", help="hex frames, one or more per line")
    p.add_argument("--kml")
    p.add_argument("--csv")
    p.add_argument("--nmea-port", type=int, help="local TCP port for the NMEA source (0 = any)")
    p.add_argument("--wait-client", type=float, default=0.0,
                   help="seconds to wait for an NMEA client before ingesting")
    p.add_argument("--escaped", action="store_true")

    p = sub(cmds, "link-check", "Probe a link and report delivery statistics.", cmd_link_check)
    p.add_argument("--scenario", help="scenario file; probe from --peer to its station")
    p.add_argument("--peer", help="node section name in the scenario")
    p.add_argument("--distance", type=float, default=100.0, help="peer distance in metres")
    p.add_argument("--loss", type=float, default=0.0, help="per-hop loss probability")
    p.add_argument("--range", type=float, default=1500.0, help="radio range in metres")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=int, default=100, help="number of probe frames")

    p = sub(cmds, "simulate", "Run a scenario end to end.", cmd_simulate)
    p.add_argument("scenario")
    p.add_argument("--out-dir", default="out", help="directory for KML, CSV and stats")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is cmd_simulate and not Path(args.scenario).is_file():
        return _usage(args, f"scenario file not found: {args.scenario}")
    if args.func is cmd_link_check and args.scenario and not args.peer:
        return _usage(args, "--scenario requires --peer")
    try:
        return args.func(args)
    except (DataError, VtrackError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
