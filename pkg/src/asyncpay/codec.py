"""Canonical, length-prefixed byte encoding used for signing and tx ids.

Every value is written as a one-byte type tag followed by a 4-byte big-endian
length and the body::

    N                       None (no length)
    I <len> <ascii digits>  int (bool is rejected)
    S <len> <utf-8>         str
    Y <len> <raw>           bytes
    L <count> <items...>    tuple or list, items encoded recursively

The encoding is injective on the supported values and stable across runs and
platforms, which is all the signing layer needs.
"""

from __future__ import annotations

import struct
from typing import Any

_LEN = struct.Struct(">I")


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif isinstance(value, bool):
        raise TypeError("bool is not encodable; use an int")
    elif isinstance(value, int):
        body = str(value).encode("ascii")
        out += b"I" + _LEN.pack(len(body)) + body
    elif isinstance(value, str):
        body = value.encode("utf-8")
        out += b"S" + _LEN.pack(len(body)) + body
    elif isinstance(value, (bytes, bytearray)):
        out += b"Y" + _LEN.pack(len(value)) + bytes(value)
    elif isinstance(value, (tuple, list)):
        out += b"L" + _LEN.pack(len(value))
        for item in value:
            _encode_into(item, out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")
