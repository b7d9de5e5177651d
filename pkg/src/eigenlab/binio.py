"""Small deterministic binary container for cached arrays.

Layout::

    magic  b"EIGNLAB\\0"
    u32    header length, then a UTF-8 JSON header
           {"format", "version", "meta", "arrays": [[name, dtype, shape], ...]}
    raw little-endian array payloads in header order

Identical inputs always give identical bytes (sorted JSON keys, no
timestamps).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EIGNLAB\x00"


class CacheFormatError(ValueError):
    pass


def write(path, fmt: str, version: int, meta: dict, arrays: dict) -> None:
    specs, payloads = [], []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        specs.append([name, arr.dtype.str, list(arr.shape)])
        payloads.append(arr.tobytes())
    header = json.dumps(
        {"format": fmt, "version": version, "meta": meta, "arrays": specs},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in payloads:
            fh.write(p)
    os.replace(tmp, path)


def read(path, fmt: str, version: int):
    """Returns (meta, arrays); raises CacheFormatError on any mismatch."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CacheFormatError(f"{path}: not an eigenlab cache file")
    (n,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + n])
    except ValueError as exc:
        raise CacheFormatError(f"{path}: corrupt header") from exc
    if header.get("format") != fmt:
        raise CacheFormatError(f"{path}: expected {fmt}, found {header.get('format')}")
    if header.get("version") != version:
        raise CacheFormatError(f"{path}: version {header.get('version')} != {version}")
    pos = 12 + n
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        size = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if pos + size > len(blob):
            raise CacheFormatError(f"{path}: truncated payload")
        arrays[name] = np.frombuffer(blob, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape).copy()
        pos += size
    return header["meta"], arrays
