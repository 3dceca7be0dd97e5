import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimoeval.channel import ArrayKind, NormState
from mimoeval.ctf import MAGIC, from_bytes, read_channel_file, to_bytes, write_channel_file
from mimoeval.errors import BadMagic, DimensionOverflow, MalformedHeader, TruncatedPayload
from mimoeval.normalization import normalize1

from conftest import random_tensor


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5), st.integers(0, 100))
def test_roundtrip_bit_exact(k, a, n, seed):
    t = random_tensor((k, a, n), seed=seed, array_kind=ArrayKind.ULA, carrier_frequency=3.5e9)
    back = from_bytes(to_bytes(t))
    assert np.array_equal(back.coefficients.view(np.uint64), t.coefficients.view(np.uint64))
    assert back.array_kind is ArrayKind.ULA
    assert back.carrier_frequency == 3.5e9
    assert back.norm_state is NormState.RAW


def test_file_roundtrip_keeps_norm_state(tmp_path):
    t = normalize1(random_tensor((2, 4, 3)))
    path = tmp_path / "x.ctf"
    write_channel_file(t, path)
    back = read_channel_file(path)
    assert back.norm_state is NormState.NORM1
    assert np.array_equal(back.coefficients, t.coefficients)
    assert not (tmp_path / "x.ctf.part").exists()


def test_encoding_is_deterministic():
    t = random_tensor((2, 3, 4), seed=5)
    assert to_bytes(t) == to_bytes(t)
    assert to_bytes(t).startswith(MAGIC)


def test_payload_order_subcarrier_fastest():
    h = np.arange(2 * 3 * 4).reshape(2, 3, 4).astype(complex)
    raw = to_bytes(random_tensor((1, 1, 1)).replace(coefficients=h))
    (hlen,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    payload = np.frombuffer(raw[len(MAGIC) + 4 + hlen :], dtype="<c16")
    assert np.array_equal(payload.real, np.arange(24))


def test_bad_magic():
    raw = bytearray(to_bytes(random_tensor((1, 2, 2))))
    raw[0:4] = b"XXXX"
    with pytest.raises(BadMagic):
        from_bytes(bytes(raw))


def test_truncated_payload():
    raw = to_bytes(random_tensor((1, 2, 2)))
    with pytest.raises(TruncatedPayload):
        from_bytes(raw[:-3])


def test_malformed_header():
    body = b"{not json"
    raw = MAGIC + struct.pack("<I", len(body)) + body
    with pytest.raises(MalformedHeader):
        from_bytes(raw)


def _with_header(header: dict) -> bytes:
    import json

    body = json.dumps(header).encode()
    return MAGIC + struct.pack("<I", len(body)) + body


def test_dimension_overflow():
    hdr = {"version": 1, "users": 1 << 20, "ports": 1 << 20, "subcarriers": 1 << 20,
           "carrier_hz": 2.6e9, "bandwidth_hz": 5e7, "array": "ULA", "norm": "RAW"}
    with pytest.raises(DimensionOverflow):
        from_bytes(_with_header(hdr))
    hdr.update(users=0, ports=2, subcarriers=2)
    with pytest.raises(DimensionOverflow):
        from_bytes(_with_header(hdr))
