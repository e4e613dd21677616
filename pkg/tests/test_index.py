"""Embedding index: exact search, tie-breaks, binary persistence."""

import struct

import numpy as np
import pytest

from brushwork.audio import SAMPLE_RATE, AudioClip
from brushwork.embedder import Embedding, build_embedder
from brushwork.errors import (
    CorruptionError,
    EmptyIndexError,
    FormatError,
    PreconditionError,
    ShapeError,
    VersionError,
)
from brushwork.index import (
    ChunkRecord,
    EmbeddingIndex,
    build_index,
    load_index,
    nearest,
    save_index,
    save_index_manifest,
)


def _grid_index():
    # four unit-spaced points on one axis; distances are trivially checkable
    records = [ChunkRecord("trk", i, np.array([float(i), 0.0])) for i in range(4)]
    return EmbeddingIndex(2, records)


def test_record_validation():
    with pytest.raises(PreconditionError):
        ChunkRecord("t", -1, np.zeros(2))
    rec = ChunkRecord("t", 3, np.zeros(2))
    assert rec.start_time == 12.0
    assert rec.key == ("t", 3)


def test_index_rejects_duplicates_and_mixed_dims():
    with pytest.raises(PreconditionError, match="duplicate"):
        EmbeddingIndex(2, [ChunkRecord("t", 0, np.zeros(2)),
                           ChunkRecord("t", 0, np.ones(2))])
    with pytest.raises(ShapeError):
        EmbeddingIndex(2, [ChunkRecord("t", 0, np.zeros(3))])


def test_nearest_exact_distances_and_order():
    index = _grid_index()
    results = nearest(index, np.array([1.2, 0.0]), k=3)
    assert [(r.key, round(d, 6)) for r, d in results] == [
        (("trk", 1), 0.2), (("trk", 2), 0.8), (("trk", 0), 1.2)]
    # exact hit reports exactly zero
    assert nearest(index, np.array([3.0, 0.0]), k=1)[0][1] == 0.0


def test_nearest_breaks_ties_by_key():
    records = [ChunkRecord("b", 0, np.array([1.0])),
               ChunkRecord("a", 1, np.array([-1.0])),
               ChunkRecord("a", 0, np.array([1.0]))]
    index = EmbeddingIndex(1, records)
    results = nearest(index, np.array([0.0]), k=3)
    assert [r.key for r, _ in results] == [("a", 0), ("a", 1), ("b", 0)]


def test_nearest_accepts_embedding_and_validates():
    index = _grid_index()
    (rec, dist), = nearest(index, Embedding(vector=np.array([0.0, 0.0])), k=1)
    assert rec.key == ("trk", 0) and dist == 0.0
    with pytest.raises(PreconditionError):
        nearest(index, np.zeros(2), k=0)
    with pytest.raises(ShapeError):
        nearest(index, np.zeros(3), k=1)
    with pytest.raises(EmptyIndexError):
        nearest(EmbeddingIndex(2, []), np.zeros(2), k=1)


def test_candidate_filter_restricts_results():
    index = _grid_index()
    keep = {("trk", 2), ("trk", 3)}
    results = nearest(index, np.array([0.0, 0.0]), k=4, candidate_filter=keep)
    assert [r.key for r, _ in results] == [("trk", 2), ("trk", 3)]
    with pytest.raises(EmptyIndexError):
        nearest(index, np.zeros(2), k=1, candidate_filter={("nope", 0)})


def test_k_larger_than_index_is_clamped():
    assert len(nearest(_grid_index(), np.zeros(2), k=10)) == 4


def test_build_index_chunks_and_skips_short_tracks():
    embedder = build_embedder(seed=0, n_classes=2)
    rng = np.random.default_rng(0)
    long_clip = AudioClip(rng.uniform(-0.5, 0.5, SAMPLE_RATE * 9).astype(np.float32),
                          SAMPLE_RATE)
    short_clip = AudioClip(np.zeros(SAMPLE_RATE, dtype=np.float32), SAMPLE_RATE)
    index = build_index([("long", long_clip), ("short", short_clip)], embedder)
    # 9 s -> two whole 4 s chunks, 1 s remainder dropped
    assert index.keys == [("long", 0), ("long", 1)]
    assert index.build_report == [{"track_id": "short",
                                   "reason": "shorter than 4 s, skipped"}]
    with pytest.raises(PreconditionError, match="expected 16000"):
        build_index([("bad", AudioClip(np.zeros(100000, dtype=np.float32), 44100))],
                    embedder)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    records = [ChunkRecord(f"trk{i:02d}", j, rng.standard_normal(8).astype(np.float32))
               for i in range(5) for j in range(3)]
    index = EmbeddingIndex(8, records)
    path = tmp_path / "library.idx"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.dimension == 8
    assert loaded.keys == index.keys
    for a, b in zip(index.records, loaded.records):
        np.testing.assert_array_equal(a.embedding, b.embedding)
    # saving the loaded index reproduces the file byte for byte
    path2 = tmp_path / "again.idx"
    save_index(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def _saved(tmp_path):
    index = EmbeddingIndex(2, [ChunkRecord("t", 0, np.ones(2))])
    path = tmp_path / "x.idx"
    save_index(index, path)
    return path


def test_load_rejects_bad_magic(tmp_path):
    path = _saved(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_index(path)


def test_load_rejects_bad_version(tmp_path):
    path = _saved(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:6] = struct.pack("<H", 9)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_index(path)


def test_load_rejects_truncation_and_trailing(tmp_path):
    path = _saved(tmp_path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-2])
    with pytest.raises(CorruptionError, match="truncated"):
        load_index(path)
    path.write_bytes(raw + b"!")
    with pytest.raises(CorruptionError, match="trailing"):
        load_index(path)


def test_index_manifest_companion(tmp_path):
    path = tmp_path / "library.idx.json"
    save_index_manifest(path, {"trk00": {"chunks": 2, "duration": 9.0}})
    assert "trk00" in path.read_text()
