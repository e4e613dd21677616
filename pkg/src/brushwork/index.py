"""Chunk-level embedding index: exact Euclidean nearest-neighbor over every
library track at 4-second resolution, persisted in a small binary format.

Index file layout (integers little-endian):

    magic       4 bytes  b"CMEI"
    version     u16      currently 1
    dimension   u32
    count       u64
    per record: track_id length u16, track_id UTF-8 bytes,
                chunk_index u32, embedding as dimension float32

Records are stored (and kept) sorted by (track_id, chunk_index); that order
is also the deterministic tie-break for equidistant query results.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, mel_patch
from .errors import (
    CorruptionError,
    EmptyIndexError,
    FormatError,
    PreconditionError,
    ShapeError,
    VersionError,
)

MAGIC = b"CMEI"
VERSION = 1
CHUNK_SECONDS = 4.0


@dataclass(frozen=True)
class ChunkRecord:
    track_id: str
    chunk_index: int
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if self.chunk_index < 0:
            raise PreconditionError(f"chunk_index must be >= 0, got {self.chunk_index}")
        object.__setattr__(self, "embedding",
                           np.asarray(self.embedding, dtype=np.float32).reshape(-1))

    @property
    def start_time(self) -> float:
        return CHUNK_SECONDS * self.chunk_index

    @property
    def key(self) -> tuple[str, int]:
        return (self.track_id, self.chunk_index)


class EmbeddingIndex:
    """Immutable after construction; queries are thread-safe."""

    def __init__(self, dimension: int, records: list[ChunkRecord]):
        if dimension < 1:
            raise PreconditionError(f"dimension must be >= 1, got {dimension}")
        records = sorted(records, key=lambda r: r.key)
        for prev, cur in zip(records, records[1:]):
            if prev.key == cur.key:
                raise PreconditionError(f"duplicate chunk record {cur.key}")
        for r in records:
            if r.embedding.shape != (dimension,):
                raise ShapeError(
                    f"record {r.key} has dimension {r.embedding.shape[0]}, "
                    f"index expects {dimension}")
        self.dimension = dimension
        self.records = records
        # float64 copy once so per-query distance math runs at full precision
        self._matrix = (np.stack([r.embedding for r in records]).astype(np.float64)
                        if records else np.zeros((0, dimension)))
        self._norms = (self._matrix ** 2).sum(axis=1)
        self.build_report: list[dict] = []

    def __len__(self) -> int:
        return len(self.records)

    @property
    def keys(self) -> list[tuple[str, int]]:
        return [r.key for r in self.records]


def build_index(tracks, embedder, batch_size: int = 64) -> EmbeddingIndex:
    """Embed consecutive non-overlapping 4 s chunks of each (track_id, AudioClip).

    Trailing remainders shorter than 4 s are dropped; whole tracks shorter
    than 4 s are skipped with a warning entry in index.build_report.
    """
    report: list[dict] = []
    records: list[ChunkRecord] = []
    pending: list[tuple[str, int, np.ndarray]] = []

    def flush() -> None:
        if not pending:
            return
        vecs = embedder.embed_batch(np.stack([m for _, _, m in pending]))
        for (track_id, chunk_index, _), vec in zip(pending, vecs):
            records.append(ChunkRecord(track_id, chunk_index, vec))
        pending.clear()

    for track_id, clip in tracks:
        if clip.sample_rate != SAMPLE_RATE:
            raise PreconditionError(
                f"track {track_id!r} is {clip.sample_rate} Hz, expected {SAMPLE_RATE}")
        n_chunks = len(clip.samples) // CLIP_SAMPLES
        if n_chunks == 0:
            report.append({"track_id": track_id, "reason": "shorter than 4 s, skipped"})
            continue
        for i in range(n_chunks):
            seg = clip.samples[i * CLIP_SAMPLES : (i + 1) * CLIP_SAMPLES]
            pending.append((track_id, i, mel_patch(AudioClip(seg, SAMPLE_RATE)).values))
            if len(pending) >= batch_size:
                flush()
    flush()

    index = EmbeddingIndex(embedder.embedding_dim, records)
    index.build_report = report
    return index


def nearest(index: EmbeddingIndex, query, k: int,
            candidate_filter: set | None = None) -> list[tuple[ChunkRecord, float]]:
    """Exact k-nearest records by Euclidean distance, ascending; ties resolve
    to the lexicographically smaller (track_id, chunk_index)."""
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    vec = np.asarray(getattr(query, "vector", query), dtype=np.float64).reshape(-1)
    if vec.shape != (index.dimension,):
        raise ShapeError(f"query dimension {vec.shape[0]} != index dimension {index.dimension}")
    if len(index) == 0:
        raise EmptyIndexError("index contains no records")

    if candidate_filter is not None:
        rows = np.asarray([i for i, r in enumerate(index.records)
                           if r.key in candidate_filter], dtype=np.intp)
        if len(rows) == 0:
            raise EmptyIndexError("candidate filter matches no records")
        matrix, norms = index._matrix[rows], index._norms[rows]
    else:
        rows = np.arange(len(index))
        matrix, norms = index._matrix, index._norms

    d2 = np.maximum(norms - 2.0 * (matrix @ vec) + vec @ vec, 0.0)
    order = np.argsort(d2, kind="stable")[: min(k, len(rows))]
    out = []
    for i in order:
        # recompute the winner's distance directly so exact hits report 0.0
        diff = matrix[i] - vec
        out.append((index.records[rows[i]], float(np.sqrt(diff @ diff))))
    return out


def save_index(index: EmbeddingIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIQ", VERSION, index.dimension, len(index)))
        for r in index.records:
            tid = r.track_id.encode("utf-8")
            fh.write(struct.pack("<H", len(tid)))
            fh.write(tid)
            fh.write(struct.pack("<I", r.chunk_index))
            fh.write(np.ascontiguousarray(r.embedding, dtype="<f4").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptionError(f"index file truncated while reading {what}")
    return data


def load_index(path) -> EmbeddingIndex:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad index magic {magic!r}, expected {MAGIC!r}")
        version, dimension, count = struct.unpack("<HIQ", _read_exact(fh, 14, "header"))
        if version != VERSION:
            raise VersionError(f"unsupported index version {version}")
        records = []
        for i in range(count):
            (tid_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            try:
                track_id = _read_exact(fh, tid_len, f"record {i} id").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorruptionError(f"record {i} track id is not UTF-8: {exc}") from exc
            (chunk_index,) = struct.unpack("<I", _read_exact(fh, 4, f"record {i} chunk index"))
            raw = _read_exact(fh, 4 * dimension, f"record {i} embedding")
            records.append(ChunkRecord(track_id, chunk_index,
                                       np.frombuffer(raw, dtype="<f4").copy()))
        if fh.read(1):
            raise CorruptionError("trailing bytes after final record")
    for prev, cur in zip(records, records[1:]):
        if prev.key >= cur.key:
            raise CorruptionError(f"records out of order at {cur.key}")
    return EmbeddingIndex(dimension, records)


def save_index_manifest(path, entries: dict) -> None:
    """Human-readable companion: track_id -> {source, duration, chunks}."""
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
