"""Canonical binary encoding.

Every value is a one-byte tag followed by its body.  Integers are 8-byte
big-endian two's complement, byte strings and text carry a 4-byte length,
sequences a 4-byte count, and records a 2-byte type id plus their fields in
declaration order.  The format is pinned by golden-byte tests.
"""

from __future__ import annotations

import dataclasses
import struct
from typing import Any

T_NONE = 0x00
T_INT = 0x01
T_BYTES = 0x02
T_SEQ = 0x03
T_STR = 0x04
T_BOOL = 0x05
T_RECORD = 0x06

_REGISTRY: dict[int, type] = {}
_IDS: dict[type, int] = {}
_FIELDS: dict[type, tuple[str, ...]] = {}
_CACHE = "_wire_bytes"


class DecodeError(ValueError):
    pass


def wire_type(type_id: int):
    """Register a frozen dataclass under a fixed record id."""

    def deco(cls):
        if type_id in _REGISTRY:
            raise ValueError(f"duplicate wire type id {type_id}")
        _REGISTRY[type_id] = cls
        _IDS[cls] = type_id
        _FIELDS[cls] = tuple(f.name for f in dataclasses.fields(cls))
        # Records are immutable; copies share them so memo-by-identity keeps working.
        cls.__copy__ = lambda self: self
        cls.__deepcopy__ = lambda self, memo: self
        return cls

    return deco


def type_id(cls: type) -> int:
    return _IDS[cls]


def _enc(value: Any, out: list[bytes], skip: str | None = None) -> None:
    if value is None:
        out.append(b"\x00")
    elif value is True or value is False:
        out.append(struct.pack(">BB", T_BOOL, 1 if value else 0))
    elif isinstance(value, int):
        out.append(struct.pack(">Bq", T_INT, value))
    elif isinstance(value, bytes):
        out.append(struct.pack(">BI", T_BYTES, len(value)))
        out.append(value)
    elif isinstance(value, str):
        raw = value.encode()
        out.append(struct.pack(">BI", T_STR, len(raw)))
        out.append(raw)
    elif isinstance(value, (tuple, list)):
        out.append(struct.pack(">BI", T_SEQ, len(value)))
        for item in value:
            _enc(item, out)
    else:
        cls = type(value)
        tid = _IDS.get(cls)
        if tid is None:
            raise TypeError(f"cannot encode {cls.__name__}")
        if skip is None:
            cached = value.__dict__.get(_CACHE)
            if cached is None:
                inner: list[bytes] = []
                _enc_fields(value, cls, tid, _FIELDS[cls], inner)
                cached = b"".join(inner)
                # records are frozen, so their encoding never changes
                object.__setattr__(value, _CACHE, cached)
            out.append(cached)
            return
        _enc_fields(value, cls, tid, tuple(n for n in _FIELDS[cls] if n != skip), out)


def _enc_fields(value: Any, cls: type, tid: int, names: tuple[str, ...], out: list[bytes]) -> None:
    out.append(struct.pack(">BHH", T_RECORD, tid, len(names)))
    for name in names:
        _enc(getattr(value, name), out)


def encode(value: Any) -> bytes:
    out: list[bytes] = []
    _enc(value, out)
    return b"".join(out)


def signing_payload(record: Any) -> bytes:
    """Encoding of a record with its own ``sig`` field left out."""
    out: list[bytes] = []
    _enc(record, out, skip="sig")
    return b"".join(out)


def _dec(buf: bytes, pos: int) -> tuple[Any, int]:
    try:
        tag = buf[pos]
    except IndexError:
        raise DecodeError("truncated input") from None
    pos += 1
    try:
        if tag == T_NONE:
            return None, pos
        if tag == T_BOOL:
            return buf[pos] == 1, pos + 1
        if tag == T_INT:
            if pos + 8 > len(buf):
                raise DecodeError("truncated int")
            return struct.unpack_from(">q", buf, pos)[0], pos + 8
        if tag in (T_BYTES, T_STR):
            (length,) = struct.unpack_from(">I", buf, pos)
            pos += 4
            if pos + length > len(buf):
                raise DecodeError("truncated bytes")
            raw = bytes(buf[pos:pos + length])
            return (raw.decode() if tag == T_STR else raw), pos + length
        if tag == T_SEQ:
            (count,) = struct.unpack_from(">I", buf, pos)
            pos += 4
            items = []
            for _ in range(count):
                item, pos = _dec(buf, pos)
                items.append(item)
            return tuple(items), pos
        if tag == T_RECORD:
            tid, count = struct.unpack_from(">HH", buf, pos)
            pos += 4
            cls = _REGISTRY.get(tid)
            if cls is None:
                raise DecodeError(f"unknown record id {tid}")
            names = _FIELDS[cls]
            if count != len(names):
                raise DecodeError(f"{cls.__name__}: expected {len(names)} fields, got {count}")
            vals = []
            for _ in range(count):
                v, pos = _dec(buf, pos)
                vals.append(v)
            return cls(*vals), pos
    except struct.error as exc:
        raise DecodeError(str(exc)) from None
    raise DecodeError(f"bad tag 0x{tag:02x} at offset {pos - 1}")


def decode(buf: bytes) -> Any:
    value, pos = _dec(buf, 0)
    if pos != len(buf):
        raise DecodeError(f"{len(buf) - pos} trailing bytes")
    return value
