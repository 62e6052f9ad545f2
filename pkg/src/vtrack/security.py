"""Authenticated payload encryption with 128-bit keys and replay protection.

Wire layout of a secured payload::

    counter (4, big-endian) | ciphertext (len(plaintext)) | mic (4)

Encryption is AES-128 in counter mode with keystream block ``i`` equal
to ``E(src64 || counter || i)``; the MIC is the first four bytes of an
AES-128 CBC-MAC over ``src64 || counter || len || plaintext`` padded
with zeros to a whole block.
"""

from __future__ import annotations

import hmac
import struct
from dataclasses import dataclass, field
from typing import Dict, Optional

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import AuthenticationError, FormatError, ReplayError, SizeError

BLOCK = 16
KEY_BYTES = 16
MIC_BYTES = 4
COUNTER_BYTES = 4
OVERHEAD = COUNTER_BYTES + MIC_BYTES
MAX_PLAINTEXT = 64
MAX_COUNTER = 0xFFFFFFFF


@dataclass(frozen=True)
class LinkKey:
    key: bytes = field(repr=False)

    def __post_init__(self):
        if not isinstance(self.key, (bytes, bytearray)) or len(self.key) != KEY_BYTES:
            raise SizeError("link key must be exactly 16 bytes (128 bits)")
        object.__setattr__(self, "key", bytes(self.key))

    @classmethod
    def from_hex(cls, text: str) -> "LinkKey":
        text = text.strip()
        if len(text) != 2 * KEY_BYTES:
            raise FormatError("link key must be 32 hex characters")
        try:
            return cls(bytes.fromhex(text))
        except ValueError:
            raise FormatError("link key is not valid hex") from None


@dataclass(frozen=True)
class SecuredPayload:
    counter: int
    ciphertext: bytes
    mic: bytes

    def to_bytes(self) -> bytes:
        return struct.pack(">I", self.counter) + self.ciphertext + self.mic

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecuredPayload":
        data = bytes(data)
        if len(data) < OVERHEAD:
            raise FormatError(f"secured payload needs at least {OVERHEAD} bytes")
        if len(data) > OVERHEAD + MAX_PLAINTEXT:
            raise SizeError("secured payload too long")
        (counter,) = struct.unpack_from(">I", data)
        return cls(counter, data[COUNTER_BYTES:-MIC_BYTES], data[-MIC_BYTES:])


@dataclass
class ReplayState:
    """Highest accepted counter per source plus rejection tallies."""

    last: Dict[int, int] = field(default_factory=dict)
    auth_failures: int = 0
    replays: int = 0

    def is_fresh(self, src: int, counter: int) -> bool:
        prev = self.last.get(src)
        return prev is None or counter > prev


def _key_bytes(key) -> bytes:
    return key.key if isinstance(key, LinkKey) else LinkKey(key).key


def aes128_encrypt_block(key, block: bytes) -> bytes:
    """Raw AES-128 on a single 16-byte block."""
    if len(block) != BLOCK:
        raise SizeError("AES block must be 16 bytes")
    enc = Cipher(algorithms.AES(_key_bytes(key)), modes.ECB()).encryptor()
    return enc.update(block) + enc.finalize()


def _keystream(k: bytes, src: int, counter: int, n: int) -> bytes:
    blocks = -(-n // BLOCK)
    if not blocks:
        return b""
    prefix = struct.pack(">QI", src, counter)
    counters = b"".join(prefix + struct.pack(">I", i) for i in range(blocks))
    enc = Cipher(algorithms.AES(k), modes.ECB()).encryptor()
    return (enc.update(counters) + enc.finalize())[:n]


def _mic(k: bytes, src: int, counter: int, plaintext: bytes) -> bytes:
    msg = struct.pack(">QIB", src, counter, len(plaintext)) + plaintext
    msg += bytes(-len(msg) % BLOCK)
    enc = Cipher(algorithms.AES(k), modes.CBC(bytes(BLOCK))).encryptor()
    out = enc.update(msg) + enc.finalize()
    return out[-BLOCK:][:MIC_BYTES]


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def seal(key, src: int, counter: int, plaintext: bytes) -> SecuredPayload:
    if len(plaintext) > MAX_PLAINTEXT:
        raise SizeError(f"plaintext is {len(plaintext)} bytes, max {MAX_PLAINTEXT}")
    if not 0 <= counter <= MAX_COUNTER:
        raise SizeError("frame counter must fit in 32 bits")
    k = _key_bytes(key)
    plaintext = bytes(plaintext)
    ct = _xor(plaintext, _keystream(k, src, counter, len(plaintext)))
    return SecuredPayload(counter, ct, _mic(k, src, counter, plaintext))


def open_payload(key, src: int, sp, state: Optional[ReplayState] = None) -> bytes:
    """Verify, decrypt and replay-check a secured payload.

    ``sp`` may be a SecuredPayload or its wire bytes. The MIC is checked
    before the counter, so a forged frame is always reported as an
    authentication failure. ``state`` is updated only on success.
    """
    if not isinstance(sp, SecuredPayload):
        sp = SecuredPayload.from_bytes(sp)
    k = _key_bytes(key)
    pt = _xor(sp.ciphertext, _keystream(k, src, sp.counter, len(sp.ciphertext)))
    if not hmac.compare_digest(_mic(k, src, sp.counter, pt), sp.mic):
        if state is not None:
            state.auth_failures += 1
        raise AuthenticationError("message integrity code mismatch")
    if state is not None:
        if not state.is_fresh(src, sp.counter):
            state.replays += 1
            raise ReplayError(
                f"counter {sp.counter} from {src:016x} not above {state.last[src]}")
        state.last[src] = sp.counter
    return pt
