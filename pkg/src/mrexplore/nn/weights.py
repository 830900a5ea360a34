"""Binary weight files: magic 'MADN', version, layer table, little-endian f32.

Layout:
    magic     4 bytes  b"MADN"
    version   u16 LE
    count     u32 LE   number of entries
    entries   count x (name_len u16 LE, name utf-8, ndim u8, ndim x u32 LE)
    data      concatenated float32 LE arrays in entry order
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MADN"
VERSION = 1


class WeightFormatError(ValueError):
    """Malformed weight file; the message reports the failing byte offset."""


def save_weights(params: dict[str, np.ndarray], path: str) -> None:
    names = sorted(params)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<HI", VERSION, len(names))
    for name in names:
        encoded = name.encode("utf-8")
        arr = params[name]
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
    for name in names:
        blob += np.ascontiguousarray(params[name], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def _take(buf: bytes, offset: int, size: int) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise WeightFormatError(f"truncated weight file at offset {offset}")
    return buf[offset:offset + size], offset + size


def load_weights(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    chunk, offset = _take(buf, 0, 4)
    if chunk != MAGIC:
        raise WeightFormatError(f"bad magic {chunk!r} at offset 0")
    chunk, offset = _take(buf, offset, 6)
    version, count = struct.unpack("<HI", chunk)
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version} at offset 4")
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        chunk, offset = _take(buf, offset, 2)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, offset = _take(buf, offset, name_len)
        name = chunk.decode("utf-8")
        chunk, offset = _take(buf, offset, 1)
        ndim = chunk[0]
        dims = []
        for _ in range(ndim):
            chunk, offset = _take(buf, offset, 4)
            dims.append(struct.unpack("<I", chunk)[0])
        table.append((name, tuple(dims)))
    params: dict[str, np.ndarray] = {}
    for name, shape in table:
        size = 4 * int(np.prod(shape)) if shape else 4
        chunk, offset = _take(buf, offset, size)
        params[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
    if offset != len(buf):
        raise WeightFormatError(f"trailing bytes at offset {offset}")
    return params
