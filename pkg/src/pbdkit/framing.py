"""Length-prefixed field framing shared by every wire format in the package.

A frame is a 4-byte magic followed by fields, each preceded by its length
as a 4-byte big-endian integer.
"""

from __future__ import annotations

import struct
from typing import Iterable, Sequence

_LEN = struct.Struct(">I")


class FramingError(ValueError):
    """Raised when a byte string does not parse as a frame."""


def pack_fields(fields: Iterable[bytes]) -> bytes:
    out = bytearray()
    for field in fields:
        out += _LEN.pack(len(field))
        out += field
    return bytes(out)


def unpack_fields(data: bytes, offset: int = 0) -> list[bytes]:
    fields = []
    end = len(data)
    while offset < end:
        if end - offset < 4:
            raise FramingError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, offset)
        offset += 4
        if end - offset < n:
            raise FramingError("field runs past end of frame")
        fields.append(bytes(data[offset:offset + n]))
        offset += n
    return fields


def frame(magic: bytes, fields: Sequence[bytes]) -> bytes:
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    return magic + pack_fields(fields)


def unframe(magic: bytes, data: bytes, count: int | None = None) -> list[bytes]:
    """Parse ``data`` as a frame with ``magic``; optionally demand ``count`` fields."""
    if data[:4] != magic:
        raise FramingError(f"bad magic: expected {magic!r}, got {bytes(data[:4])!r}")
    fields = unpack_fields(data, 4)
    if count is not None and len(fields) != count:
        raise FramingError(f"expected {count} fields, got {len(fields)}")
    return fields


def u64(value: int) -> bytes:
    return value.to_bytes(8, "big", signed=False)


def from_u64(data: bytes) -> int:
    if len(data) != 8:
        raise FramingError("u64 field must be 8 bytes")
    return int.from_bytes(data, "big", signed=False)


def i64(value: int) -> bytes:
    return value.to_bytes(8, "big", signed=True)


def from_i64(data: bytes) -> int:
    if len(data) != 8:
        raise FramingError("i64 field must be 8 bytes")
    return int.from_bytes(data, "big", signed=True)
