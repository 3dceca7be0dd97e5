"""Reader and writer for the portable CTF1 channel-file format.

Layout::

    8 bytes   magic b"CTF1\\n\\0\\0\\0"
    4 bytes   header length, little-endian uint32
    n bytes   UTF-8 JSON header
    payload   K*A*N complex coefficients as little-endian float64 (re, im)
              pairs; subcarrier index fastest, then port, then user

The header carries ``version`` (1), ``users``, ``ports``, ``subcarriers``,
``carrier_hz``, ``bandwidth_hz``, ``array`` and ``norm``.
"""

from __future__ import annotations

import json
import math
import os
import struct

import numpy as np

from .channel import ArrayKind, ChannelTensor, NormState
from .errors import BadMagic, DimensionOverflow, MalformedHeader, TruncatedPayload

MAGIC = b"CTF1\n\x00\x00\x00"
VERSION = 1
MAX_HEADER_BYTES = 1 << 20
MAX_ELEMENTS = 1 << 32

_WIRE_DTYPE = np.dtype("<c16")


def encode_header(tensor: ChannelTensor) -> bytes:
    k, a, n = tensor.shape
    header = {
        "version": VERSION,
        "users": k,
        "ports": a,
        "subcarriers": n,
        "carrier_hz": tensor.carrier_frequency,
        "bandwidth_hz": tensor.bandwidth,
        "array": tensor.array_kind.value,
        "norm": tensor.norm_state.value,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def to_bytes(tensor: ChannelTensor) -> bytes:
    header = encode_header(tensor)
    payload = np.ascontiguousarray(tensor.coefficients, dtype=_WIRE_DTYPE).tobytes(order="C")
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def write_channel_file(tensor: ChannelTensor, path) -> None:
    data = to_bytes(tensor)
    tmp = f"{os.fspath(path)}.part"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _dim(header: dict, key: str) -> int:
    value = header.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedHeader(f"header field {key!r} must be an integer, got {value!r}")
    if value < 1:
        raise DimensionOverflow(f"header field {key!r} must be >= 1, got {value}")
    return value


def _number(header: dict, key: str) -> float:
    value = header.get(key)
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise MalformedHeader(f"header field {key!r} must be a finite number, got {value!r}")
    return float(value)


def from_bytes(data: bytes) -> ChannelTensor:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagic("not a CTF1 channel file (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise MalformedHeader("missing header length")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if hlen > MAX_HEADER_BYTES:
        raise MalformedHeader(f"header length {hlen} exceeds {MAX_HEADER_BYTES} bytes")
    if len(data) < pos + hlen:
        raise MalformedHeader("header is truncated")
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"undecodable header: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeader("header must be a JSON object")
    pos += hlen

    if header.get("version") != VERSION:
        raise MalformedHeader(f"unsupported version {header.get('version')!r}")
    k, a, n = _dim(header, "users"), _dim(header, "ports"), _dim(header, "subcarriers")
    count = k * a * n
    if count > MAX_ELEMENTS:
        raise DimensionOverflow(f"{k}x{a}x{n} = {count} coefficients exceeds limit {MAX_ELEMENTS}")
    carrier = _number(header, "carrier_hz")
    bandwidth = _number(header, "bandwidth_hz")
    try:
        kind = ArrayKind(header.get("array"))
        norm = NormState(header.get("norm"))
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from exc

    need = count * _WIRE_DTYPE.itemsize
    have = len(data) - pos
    if have < need:
        raise TruncatedPayload(f"payload has {have} bytes, header declares {need}")
    if have > need:
        raise MalformedHeader(f"{have - need} trailing bytes after payload")
    coeffs = np.frombuffer(data, dtype=_WIRE_DTYPE, count=count, offset=pos).reshape(k, a, n)
    return ChannelTensor(coeffs, carrier_frequency=carrier, bandwidth=bandwidth, array_kind=kind, norm_state=norm)


def read_channel_file(path) -> ChannelTensor:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
