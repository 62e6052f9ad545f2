"""API-mode radio frames: delimiter, length, type, data, sum-complement checksum.

Layout on the serial line::

    7E | len_hi len_lo | frame_type | frame_data ... | checksum

With ``escaped=True`` every 0x7E, 0x7D, 0x11 or 0x13 after the leading
delimiter is sent as 0x7D followed by the byte XOR 0x20.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Tuple

from .errors import (FormatError, IncompleteError, IntegrityError, SizeError,
                     UnknownFrameTypeError, UsageError)

START = 0x7E
ESCAPE = 0x7D
XOR = 0x20
ESCAPED_BYTES = frozenset((0x7E, 0x7D, 0x11, 0x13))

TX_REQUEST = 0x10
RX_INDICATOR = 0x90
KNOWN_TYPES = {TX_REQUEST: "TxRequest", RX_INDICATOR: "RxIndicator"}

MAX_FRAME_DATA = 255
MAX_PAYLOAD = 72
BROADCAST64 = 0xFFFFFFFFFFFFFFFF
UNKNOWN16 = 0xFFFE


@dataclass(frozen=True)
class ApiFrame:
    frame_type: int
    frame_data: bytes = b""

    def __post_init__(self):
        if not 0 <= self.frame_type <= 0xFF:
            raise ValueError("frame_type must fit in one byte")
        object.__setattr__(self, "frame_data", bytes(self.frame_data))


@dataclass(frozen=True)
class TxRequest:
    dest64: int
    payload: bytes = b""
    frame_id: int = 1
    dest16: int = UNKNOWN16
    radius: int = 0
    options: int = 0


@dataclass(frozen=True)
class RxIndicator:
    src64: int
    payload: bytes = b""
    src16: int = UNKNOWN16
    options: int = 0x01


def frame_checksum(data: bytes) -> int:
    return 0xFF - (sum(data) & 0xFF)


def _escape(data: bytes) -> bytes:
    out = bytearray()
    for b in data:
        if b in ESCAPED_BYTES:
            out += bytes((ESCAPE, b ^ XOR))
        else:
            out.append(b)
    return bytes(out)


def encode(f: ApiFrame, escaped: bool = False) -> bytes:
    if len(f.frame_data) > MAX_FRAME_DATA:
        raise SizeError(f"frame data is {len(f.frame_data)} bytes, max {MAX_FRAME_DATA}")
    content = bytes((f.frame_type,)) + f.frame_data
    body = struct.pack(">H", len(content)) + content + bytes((frame_checksum(content),))
    return bytes((START,)) + (_escape(body) if escaped else body)


def _fail(exc, consumed):
    exc.consumed = consumed
    return exc


def decode(b: bytes, escaped: bool = False) -> Tuple[ApiFrame, int]:
    """Decode the first frame in ``b``.

    Returns ``(frame, consumed)``. Every error raised carries a
    ``consumed`` attribute: the number of leading bytes a stream reader
    should discard before trying again (always up to the next delimiter
    candidate, so resynchronisation never skips a real frame start).
    """
    b = bytes(b)
    start = b.find(START)
    if start < 0:
        if not b:
            raise _fail(IncompleteError("no data"), 0)
        raise _fail(FormatError("no start delimiter"), len(b))
    resync = b.find(START, start + 1)
    resync = len(b) if resync < 0 else resync

    # Read unescaped bytes one at a time so the length field may be escaped too.
    pos = start + 1
    out = bytearray()

    def need(n):
        nonlocal pos
        while len(out) < n:
            if pos >= len(b):
                raise _fail(IncompleteError("frame needs more bytes"), start)
            c = b[pos]
            if escaped and c == START:
                raise _fail(FormatError("unexpected delimiter inside frame"), pos)
            if escaped and c == ESCAPE:
                if pos + 1 >= len(b):
                    raise _fail(IncompleteError("dangling escape"), start)
                nxt = b[pos + 1]
                if nxt == START:
                    raise _fail(FormatError("unexpected delimiter inside frame"), pos + 1)
                out.append(nxt ^ XOR)
                pos += 2
            else:
                out.append(c)
                pos += 1

    need(2)
    length = (out[0] << 8) | out[1]
    if length == 0:
        raise _fail(FormatError("zero-length frame"), resync)
    if length > MAX_FRAME_DATA + 1:
        raise _fail(FormatError(f"declared length {length} exceeds {MAX_FRAME_DATA + 1}"), resync)
    need(2 + length + 1)
    content = bytes(out[2:2 + length])
    if frame_checksum(content) != out[2 + length]:
        raise _fail(IntegrityError("frame checksum mismatch"), resync)
    if content[0] not in KNOWN_TYPES:
        raise _fail(UnknownFrameTypeError(content[0], b[start:pos]), pos)
    return ApiFrame(content[0], content[1:]), pos


class StreamDecoder:
    """Incremental decoder for a byte stream; one owner feeds it.

    Bytes that cannot form a frame are skipped and counted, and decoding
    resumes at the next delimiter.
    """

    def __init__(self, escaped: bool = False):
        self.escaped = escaped
        self.buffer = bytearray()
        self.errors = {"format": 0, "integrity": 0, "unknown_type": 0}
        self.skipped_bytes = 0

    def feed(self, data: bytes) -> List[ApiFrame]:
        self.buffer += data
        frames = []
        while self.buffer:
            try:
                frame, used = decode(self.buffer, self.escaped)
            except IncompleteError as exc:
                del self.buffer[:exc.consumed]
                self.skipped_bytes += exc.consumed
                break
            except FormatError as exc:
                self.errors["format"] += 1
                used = max(exc.consumed, 1)
                self.skipped_bytes += used
            except IntegrityError as exc:
                self.errors["integrity"] += 1
                used = exc.consumed
                self.skipped_bytes += used
            except UnknownFrameTypeError as exc:
                self.errors["unknown_type"] += 1
                used = exc.consumed
            else:
                frames.append(frame)
            del self.buffer[:used]
        return frames


def build_tx(t: TxRequest) -> ApiFrame:
    if len(t.payload) > MAX_PAYLOAD:
        raise SizeError(f"payload is {len(t.payload)} bytes, max {MAX_PAYLOAD}")
    data = struct.pack(">BQHBB", t.frame_id, t.dest64, t.dest16, t.radius, t.options)
    return ApiFrame(TX_REQUEST, data + bytes(t.payload))


def parse_tx(f: ApiFrame) -> TxRequest:
    if f.frame_type != TX_REQUEST:
        raise UsageError(f"frame type 0x{f.frame_type:02x} is not a TxRequest")
    if len(f.frame_data) < 13:
        raise FormatError("TxRequest data shorter than 13 bytes")
    frame_id, dest64, dest16, radius, options = struct.unpack_from(">BQHBB", f.frame_data)
    payload = f.frame_data[13:]
    if len(payload) > MAX_PAYLOAD:
        raise SizeError(f"payload is {len(payload)} bytes, max {MAX_PAYLOAD}")
    return TxRequest(dest64, payload, frame_id, dest16, radius, options)


def build_rx(r: RxIndicator) -> ApiFrame:
    if len(r.payload) > MAX_PAYLOAD:
        raise SizeError(f"payload is {len(r.payload)} bytes, max {MAX_PAYLOAD}")
    return ApiFrame(RX_INDICATOR, struct.pack(">QHB", r.src64, r.src16, r.options) + bytes(r.payload))


def parse_rx(f: ApiFrame) -> RxIndicator:
    if f.frame_type != RX_INDICATOR:
        raise UsageError(f"frame type 0x{f.frame_type:02x} is not an RxIndicator")
    if len(f.frame_data) < 11:
        raise FormatError("RxIndicator data shorter than 11 bytes")
    src64, src16, options = struct.unpack_from(">QHB", f.frame_data)
    payload = f.frame_data[11:]
    if len(payload) > MAX_PAYLOAD:
        raise SizeError(f"payload is {len(payload)} bytes, max {MAX_PAYLOAD}")
    return RxIndicator(src64, payload, src16, options)


def describe(f: ApiFrame) -> list:
    """``(label, value)`` rows for a decoded frame."""
    name = KNOWN_TYPES.get(f.frame_type, "unknown")
    rows = [("frame_type", f"0x{f.frame_type:02x} ({name})"),
            ("length", str(len(f.frame_data) + 1))]
    try:
        if f.frame_type == TX_REQUEST:
            t = parse_tx(f)
            rows += [("frame_id", f"0x{t.frame_id:02x}"), ("dest64", f"{t.dest64:016x}"),
                     ("dest16", f"{t.dest16:04x}"), ("radius", str(t.radius)),
                     ("options", f"0x{t.options:02x}"), ("payload", t.payload.hex())]
            return rows
        if f.frame_type == RX_INDICATOR:
            r = parse_rx(f)
            rows += [("src64", f"{r.src64:016x}"), ("src16", f"{r.src16:04x}"),
                     ("options", f"0x{r.options:02x}"), ("payload", r.payload.hex())]
            return rows
    except (FormatError, SizeError):
        pass
    rows.append(("frame_data", f.frame_data.hex()))
    return rows
