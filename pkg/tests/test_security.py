import struct

import pytest
from hypothesis import given, settings, strategies as st

from aes_reference import encrypt_block as ref_aes
from vtrack import security
from vtrack.errors import AuthenticationError, FormatError, ReplayError, SizeError
from vtrack.security import LinkKey, ReplayState, SecuredPayload, open_payload, seal

KEY = LinkKey(bytes(range(16)))
SRC = 0x0013A200400000A1


def oracle_seal(key, src, counter, pt):
    """Block-by-block CTR and CBC-MAC built on the reference cipher."""
    stream = b""
    i = 0
    while len(stream) < len(pt):
        stream += ref_aes(key, struct.pack(">QII", src, counter, i))
        i += 1
    ct = bytes(a ^ b for a, b in zip(pt, stream))
    msg = struct.pack(">QIB", src, counter, len(pt)) + pt
    msg += bytes(-len(msg) % 16)
    chain = bytes(16)
    for j in range(0, len(msg), 16):
        chain = ref_aes(key, bytes(a ^ b for a, b in zip(chain, msg[j:j + 16])))
    return struct.pack(">I", counter) + ct + chain[:4]


@pytest.mark.parametrize("key,pt,ct", [
    ("000102030405060708090a0b0c0d0e0f", "00112233445566778899aabbccddeeff",
     "69c4e0d86a7b0430d8cdb78070b4c55a"),
    ("2b7e151628aed2a6abf7158809cf4f3c", "3243f6a8885a308d313198a2e0370734",
     "3925841d02dc09fbdc118597196a0b32"),
])
def test_aes_known_answers(key, pt, ct):
    k, p = bytes.fromhex(key), bytes.fromhex(pt)
    assert security.aes128_encrypt_block(k, p).hex() == ct
    assert ref_aes(k, p).hex() == ct


@settings(max_examples=60)
@given(st.binary(min_size=16, max_size=16), st.integers(0, 2**64 - 1),
       st.integers(0, 2**32 - 1), st.binary(max_size=64))
def test_seal_matches_oracle(key, src, counter, pt):
    assert seal(key, src, counter, pt).to_bytes() == oracle_seal(key, src, counter, pt)


@given(st.integers(0, 2**32 - 1), st.binary(max_size=64))
def test_round_trip(counter, pt):
    sp = seal(KEY, SRC, counter, pt)
    assert len(sp.to_bytes()) == len(pt) + security.OVERHEAD
    assert open_payload(KEY, SRC, sp.to_bytes()) == pt


def test_empty_plaintext_still_authenticated():
    wire = seal(KEY, SRC, 5, b"").to_bytes()
    assert len(wire) == 8
    assert open_payload(KEY, SRC, wire) == b""
    with pytest.raises(AuthenticationError):
        open_payload(KEY, SRC, wire[:-1] + bytes([wire[-1] ^ 1]))


def test_any_single_bit_flip_fails():
    wire = seal(KEY, SRC, 9, b"position report").to_bytes()
    for i in range(len(wire)):
        for bit in range(8):
            bad = bytearray(wire)
            bad[i] ^= 1 << bit
            with pytest.raises(AuthenticationError):
                open_payload(KEY, SRC, bytes(bad))


def test_wrong_key_or_source_fails():
    wire = seal(KEY, SRC, 1, b"abc").to_bytes()
    with pytest.raises(AuthenticationError):
        open_payload(LinkKey(bytes(16)), SRC, wire)
    with pytest.raises(AuthenticationError):
        open_payload(KEY, SRC + 1, wire)


def test_replay_rule_strictly_increasing():
    state = ReplayState()
    frames = {c: seal(KEY, SRC, c, b"x") for c in (1, 2, 3)}
    assert open_payload(KEY, SRC, frames[1], state) == b"x"
    assert open_payload(KEY, SRC, frames[3], state) == b"x"
    with pytest.raises(ReplayError):
        open_payload(KEY, SRC, frames[2], state)
    with pytest.raises(ReplayError):
        open_payload(KEY, SRC, frames[3], state)
    assert state.last[SRC] == 3 and state.replays == 2
    # another source has its own window
    assert open_payload(KEY, SRC + 1, seal(KEY, SRC + 1, 1, b"y"), state) == b"y"


def test_forged_frame_does_not_advance_state():
    state = ReplayState()
    good = seal(KEY, SRC, 10, b"ok").to_bytes()
    forged = bytearray(seal(KEY, SRC, 50, b"ok").to_bytes())
    forged[-1] ^= 0xFF
    with pytest.raises(AuthenticationError):
        open_payload(KEY, SRC, bytes(forged), state)
    assert state.auth_failures == 1 and SRC not in state.last
    assert open_payload(KEY, SRC, good, state) == b"ok"


def test_distinct_counters_give_distinct_keystreams():
    pt = bytes(64)
    seen = set()
    for c in range(200):
        ct = seal(KEY, SRC, c, pt).ciphertext
        assert ct not in seen
        seen.add(ct)


def test_size_and_format_limits():
    with pytest.raises(SizeError):
        seal(KEY, SRC, 1, bytes(65))
    with pytest.raises(SizeError):
        seal(KEY, SRC, 2**32, b"")
    with pytest.raises(FormatError):
        SecuredPayload.from_bytes(bytes(7))
    with pytest.raises(SizeError):
        LinkKey(bytes(15))
    with pytest.raises(FormatError):
        LinkKey.from_hex("zz" * 16)
    assert LinkKey.from_hex("00" * 16) == LinkKey(bytes(16))
