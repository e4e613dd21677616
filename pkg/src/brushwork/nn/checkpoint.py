"""Model checkpoint persistence.

Binary layout (all integers little-endian):

    magic       4 bytes  b"BWNN"
    version     u16      currently 1
    meta_len    u32      length of the UTF-8 JSON metadata block
    meta        bytes    canonical JSON: model kind, layer spec table,
                         architecture config, rng provenance, extras
    n_params    u32
    per parameter:
        ndim    u8
        dims    u32 * ndim
        data    float32 little-endian, C order

Loading rejects wrong magic, unknown versions, and truncated files.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptionError, FormatError, VersionError

MAGIC = b"BWNN"
VERSION = 1


def _canonical_meta(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def checkpoint_bytes(meta: dict, params: list[np.ndarray]) -> bytes:
    buf = io.BytesIO()
    meta_bytes = _canonical_meta(meta)
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(params)))
    for value in params:
        arr = np.ascontiguousarray(value, dtype="<f4")
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(arr.tobytes())
    return buf.getvalue()


def save_checkpoint(path, meta: dict, params: list[np.ndarray]) -> None:
    Path(path).write_bytes(checkpoint_bytes(meta, params))


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptionError(f"checkpoint truncated while reading {what}")
    return data


def load_checkpoint(path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise VersionError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptionError(f"checkpoint metadata unreadable: {exc}") from exc
        (n_params,) = struct.unpack("<I", _read_exact(fh, 4, "parameter count"))
        params = []
        for i in range(n_params):
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, f"parameter {i} rank"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, f"parameter {i} shape"))
            count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            raw = _read_exact(fh, 4 * count, f"parameter {i} data")
            params.append(np.frombuffer(raw, dtype="<f4").reshape(dims).copy())
        if fh.read(1):
            raise CorruptionError("trailing bytes after final parameter")
    return meta, params


def content_hash(meta: dict, params: list[np.ndarray]) -> str:
    """Stable hash of a model's structure and weights (for score caching)."""
    h = hashlib.sha256()
    h.update(_canonical_meta(meta))
    for value in params:
        h.update(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return h.hexdigest()
