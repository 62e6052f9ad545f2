"""NMEA-0183 lexical layer plus GGA / RMC decoding and formatting.

Empty fields are kept as ``None`` rather than zero, so a no-fix GGA
sentence round-trips with its position still absent.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence, Union

from .errors import FormatError, IntegrityError, UsageError

_ADDRESS = re.compile(r"^[A-Z0-9]{5}$")
_HEX2 = re.compile(r"^[0-9A-Fa-f]{2}$")
_TIME = re.compile(r"^\d{6}(\.\d+)?$")
_DATE = re.compile(r"^\d{6}$")
_LAT_DM = re.compile(r"^\d{4}(\.\d+)?$")
_LON_DM = re.compile(r"^\d{5}(\.\d+)?$")
_FORBIDDEN = set("$*,\r\n")

GGA_FIELDS = 14
RMC_FIELDS = (11, 12)


@dataclass(frozen=True)
class RawSentence:
    talker: str
    kind: str
    fields: tuple
    checksum: int


@dataclass(frozen=True)
class GgaData:
    utc_time: Optional[str] = None
    lat_dm: Optional[str] = None
    ns: Optional[str] = None
    lon_dm: Optional[str] = None
    ew: Optional[str] = None
    fix_quality: Optional[int] = None
    num_sats: Optional[int] = None
    hdop: Optional[float] = None
    altitude_m: Optional[float] = None
    geoid_sep_m: Optional[float] = None
    dgps_age_s: Optional[float] = None
    dgps_station: Optional[str] = None

    @property
    def has_position(self) -> bool:
        return None not in (self.lat_dm, self.ns, self.lon_dm, self.ew)


@dataclass(frozen=True)
class RmcData:
    utc_time: Optional[str] = None
    status: str = "V"
    lat_dm: Optional[str] = None
    ns: Optional[str] = None
    lon_dm: Optional[str] = None
    ew: Optional[str] = None
    speed_knots: Optional[float] = None
    course_deg: Optional[float] = None
    date: Optional[str] = None
    mag_var_deg: Optional[float] = None
    mag_ew: Optional[str] = None
    mode: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.status == "A"

    @property
    def has_position(self) -> bool:
        return None not in (self.lat_dm, self.ns, self.lon_dm, self.ew)


def checksum(body: str) -> int:
    """XOR of every character code between ``$`` and ``*``."""
    value = 0
    for ch in body:
        code = ord(ch)
        if code > 0x7F:
            raise FormatError(f"non-ASCII character {ch!r} in sentence body")
        if ch in "$*":
            raise FormatError(f"{ch!r} is not allowed inside a sentence body")
        value ^= code
    return value


def parse(line: Union[str, bytes]) -> RawSentence:
    """Split one sentence into its address and fields, verifying ``*HH``.

    Raises FormatError for lexical problems and IntegrityError when the
    transmitted checksum disagrees with the body.
    """
    if isinstance(line, (bytes, bytearray, memoryview)):
        try:
            line = bytes(line).decode("ascii")
        except UnicodeDecodeError:
            raise FormatError("sentence is not ASCII") from None
    if line.endswith("\r\n"):
        line = line[:-2]
    elif line.endswith("\n"):
        line = line[:-1]
    if not line.startswith("$"):
        raise FormatError("sentence must start with '$'")
    star = line.find("*")
    if star < 0:
        raise FormatError("missing '*HH' checksum")
    body, tail = line[1:star], line[star + 1:]
    if not _HEX2.match(tail):
        raise FormatError(f"bad checksum digits {tail!r}")
    for ch in body:
        if not (0x20 <= ord(ch) <= 0x7E) or ch in "$*":
            raise FormatError(f"illegal character {ch!r} in sentence")
    expected = int(tail, 16)
    actual = checksum(body)
    if actual != expected:
        raise IntegrityError(
            f"checksum mismatch: transmitted {expected:02X}, computed {actual:02X}")
    parts = body.split(",")
    address = parts[0]
    if not _ADDRESS.match(address):
        raise FormatError(f"bad address field {address!r}")
    return RawSentence(address[:2], address[2:], tuple(parts[1:]), expected)


# -- field helpers ---------------------------------------------------------

def _opt(text: str) -> Optional[str]:
    return text if text != "" else None


def _opt_int(text: str, name: str) -> Optional[int]:
    if text == "":
        return None
    if not text.isdigit():
        raise FormatError(f"{name}: {text!r} is not an integer")
    return int(text)


def _opt_float(text: str, name: str) -> Optional[float]:
    if text == "":
        return None
    if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)", text):
        raise FormatError(f"{name}: {text!r} is not a decimal number")
    return float(text)


def _check_pattern(text: Optional[str], pattern, name: str):
    if text is not None and not pattern.match(text):
        raise FormatError(f"{name}: malformed value {text!r}")


def _check_choice(text: Optional[str], choices: str, name: str):
    if text is not None and (len(text) != 1 or text not in choices):
        raise FormatError(f"{name}: expected one of {choices}, got {text!r}")


def _check_minutes(dm: Optional[str], name: str):
    if dm is None:
        return
    whole = dm.split(".")[0]
    if float(whole[-2:] + dm[len(whole):]) >= 60:
        raise FormatError(f"{name}: minutes must be < 60 in {dm!r}")


def _check_position(lat_dm, ns, lon_dm, ew):
    _check_pattern(lat_dm, _LAT_DM, "latitude")
    _check_pattern(lon_dm, _LON_DM, "longitude")
    _check_minutes(lat_dm, "latitude")
    _check_minutes(lon_dm, "longitude")
    _check_choice(ns, "NS", "N/S indicator")
    _check_choice(ew, "EW", "E/W indicator")


def parse_gga(s: RawSentence) -> GgaData:
    if s.kind != "GGA":
        raise UsageError(f"expected a GGA sentence, got {s.kind}")
    f = s.fields
    if len(f) != GGA_FIELDS:
        raise FormatError(f"GGA needs {GGA_FIELDS} fields, got {len(f)}")
    g = GgaData(
        utc_time=_opt(f[0]),
        lat_dm=_opt(f[1]),
        ns=_opt(f[2]),
        lon_dm=_opt(f[3]),
        ew=_opt(f[4]),
        fix_quality=_opt_int(f[5], "fix quality"),
        num_sats=_opt_int(f[6], "satellites"),
        hdop=_opt_float(f[7], "HDOP"),
        altitude_m=_opt_float(f[8], "altitude"),
        geoid_sep_m=_opt_float(f[10], "geoid separation"),
        dgps_age_s=_opt_float(f[12], "DGPS age"),
        dgps_station=_opt(f[13]),
    )
    _validate_gga(g)
    return g


def _validate_gga(g: GgaData):
    _check_pattern(g.utc_time, _TIME, "UTC time")
    _check_position(g.lat_dm, g.ns, g.lon_dm, g.ew)
    if g.fix_quality is not None and not 0 <= g.fix_quality <= 8:
        raise FormatError(f"fix quality {g.fix_quality} outside 0..8")
    if g.num_sats is not None and g.num_sats < 0:
        raise FormatError("satellite count is negative")
    if g.hdop is not None and g.hdop < 0:
        raise FormatError("HDOP is negative")
    if g.dgps_station is not None and any(c in _FORBIDDEN for c in g.dgps_station):
        raise FormatError("DGPS station id contains a reserved character")


def parse_rmc(s: RawSentence) -> RmcData:
    if s.kind != "RMC":
        raise UsageError(f"expected an RMC sentence, got {s.kind}")
    f = s.fields
    if len(f) not in RMC_FIELDS:
        raise FormatError(f"RMC needs 11 or 12 fields, got {len(f)}")
    r = RmcData(
        utc_time=_opt(f[0]),
        status=f[1],
        lat_dm=_opt(f[2]),
        ns=_opt(f[3]),
        lon_dm=_opt(f[4]),
        ew=_opt(f[5]),
        speed_knots=_opt_float(f[6], "speed"),
        course_deg=_opt_float(f[7], "course"),
        date=_opt(f[8]),
        mag_var_deg=_opt_float(f[9], "magnetic variation"),
        mag_ew=_opt(f[10]),
        mode=_opt(f[11]) if len(f) == 12 else None,
    )
    _validate_rmc(r)
    return r


def _validate_rmc(r: RmcData):
    if r.status not in ("A", "V"):
        raise FormatError(f"RMC status must be A or V, got {r.status!r}")
    _check_pattern(r.utc_time, _TIME, "UTC time")
    _check_pattern(r.date, _DATE, "date")
    _check_position(r.lat_dm, r.ns, r.lon_dm, r.ew)
    _check_choice(r.mag_ew, "EW", "magnetic E/W")
    if r.speed_knots is not None and r.speed_knots < 0:
        raise FormatError("speed is negative")
    if r.course_deg is not None and not 0 <= r.course_deg < 360:
        raise FormatError(f"course {r.course_deg} outside [0, 360)")
    if r.mode is not None and (len(r.mode) != 1 or r.mode in _FORBIDDEN):
        raise FormatError(f"bad mode indicator {r.mode!r}")


# -- formatting --------------------------------------------------------------

def _num(value: Optional[float], width: int = 0, places: int = 1) -> str:
    # Fixed-point when that is lossless, otherwise the shortest exact text.
    if value is None:
        return ""
    text = f"{value:0{width}.{places}f}"
    if float(text) == value:
        return text
    return format(Decimal(repr(float(value))), "f")


def _int(value: Optional[int], width: int = 0) -> str:
    return "" if value is None else f"{value:0{width}d}"


def _s(value: Optional[str]) -> str:
    return "" if value is None else value


def sentence(address: str, fields: Sequence[str]) -> str:
    """Assemble ``$address,f1,...*HH`` followed by CRLF."""
    body = ",".join([address, *fields])
    return f"${body}*{checksum(body):02X}\r\n"


def format_gga(g: GgaData, talker: str = "GP") -> str:
    _validate_gga(g)
    fields = [
        _s(g.utc_time), _s(g.lat_dm), _s(g.ns), _s(g.lon_dm), _s(g.ew),
        _int(g.fix_quality), _int(g.num_sats, 2), _num(g.hdop),
        _num(g.altitude_m), "M", _num(g.geoid_sep_m), "M",
        _num(g.dgps_age_s), _s(g.dgps_station),
    ]
    return sentence(talker + "GGA", fields)


def format_rmc(r: RmcData, talker: str = "GP") -> str:
    _validate_rmc(r)
    fields = [
        _s(r.utc_time), r.status, _s(r.lat_dm), _s(r.ns), _s(r.lon_dm),
        _s(r.ew), _num(r.speed_knots, 5), _num(r.course_deg, 5), _s(r.date),
        _num(r.mag_var_deg, 5), _s(r.mag_ew),
    ]
    if r.mode is not None:
        fields.append(r.mode)
    return sentence(talker + "RMC", fields)


def decode(line: Union[str, bytes]):
    """Parse a line and decode it when it is GGA or RMC.

    Other sentence kinds come back as the bare RawSentence.
    """
    raw = parse(line)
    if raw.kind == "GGA":
        return parse_gga(raw)
    if raw.kind == "RMC":
        return parse_rmc(raw)
    return raw


GGA_LABELS = (
    "Time in UTC (HhMmSs)", "Latitude", "Longitude", "Fix quality",
    "Satellites tracked", "HDOP", "Altitude (m)", "Geoid separation (m)",
    "DGPS age (s)", "DGPS station",
)

RMC_LABELS = (
    "Time in UTC (HhMmSs)", "Status (A=OK,V=KO)", "Latitude", "Direction (N/S)",
    "Longitude", "Direction (E/W)", "Velocity in knots", "Heading in degrees",
    "Date UTC (DdMmAa)", "Magnetic degrees", "(E/W)", "Mode", "Checksum",
)


def describe(line: str) -> list:
    """Labelled ``(label, value)`` rows for a sentence, for human display."""
    raw = parse(line)
    f = raw.fields
    if raw.kind == "GGA":
        g = parse_gga(raw)
        values = [
            _s(g.utc_time), f"{_s(g.lat_dm)} {_s(g.ns)}".strip(),
            f"{_s(g.lon_dm)} {_s(g.ew)}".strip(), _int(g.fix_quality),
            _int(g.num_sats), f[7], f[8], f[10], f[12], f[13],
        ]
        rows = list(zip(GGA_LABELS, values))
        rows.append(("Checksum", f"{raw.checksum:02X}"))
        return rows
    if raw.kind == "RMC":
        parse_rmc(raw)
        values = list(f) + ([""] if len(f) == 11 else []) + [f"{raw.checksum:02X}"]
        return list(zip(RMC_LABELS, values))
    rows = [("Sentence", raw.talker + raw.kind)]
    rows += [(f"Field {i + 1}", v) for i, v in enumerate(f)]
    rows.append(("Checksum", f"{raw.checksum:02X}"))
    return rows
