"""Versioned binary container for named numpy arrays.

Layout: 8-byte magic, uint32 version, uint64 header length, UTF-8 JSON
header, then the raw C-ordered array buffers back to back. The header
lists each array's name, dtype, shape and byte offset. Writing the same
arrays and metadata twice produces byte-identical files (no timestamps),
which the pipeline relies on for its reproducibility hashes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SLOGICv\x00"
_PREFIX = struct.Struct("<8sIQ")


class ContainerError(ValueError):
    pass


def write_container(path, kind: str, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, version, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path, kind: str, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise ContainerError(f"{path}: truncated container")
    magic, file_version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"{path}: not an slogic container")
    if file_version != version:
        raise ContainerError(f"{path}: format version {file_version}, expected {version}")
    start = _PREFIX.size
    header = json.loads(data[start : start + header_len])
    if header["kind"] != kind:
        raise ContainerError(f"{path}: holds a {header['kind']!r}, expected {kind!r}")
    body = memoryview(data)[start + header_len :]
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["meta"], arrays
