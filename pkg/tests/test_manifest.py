"""Catalog round-trips, library access, and the train/holdout split."""

import json

import numpy as np
import pytest

from brushwork.audio import CLIP_SAMPLES, SAMPLE_RATE
from brushwork.errors import PreconditionError
from brushwork.manifest import (
    LabelManifest,
    LibraryManifest,
    holdout_split,
    load_labels,
    load_manifest,
    save_labels,
    save_manifest,
)


def test_manifest_round_trip(small_corpus):
    manifest = load_manifest(small_corpus.manifest_path)
    copy_path = small_corpus.root / "copy_manifest.json"
    save_manifest(manifest, copy_path)
    reloaded = load_manifest(copy_path)
    assert reloaded.tracks == manifest.tracks
    assert reloaded.paintings == manifest.paintings
    copy_path.unlink()


def test_load_manifest_rejects_missing_file(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({
        "tracks": [{"track_id": "a", "audio_path": "a.wav",
                    "artwork_path": "a.png", "album_id": "a"}],
        "paintings": [],
    }))
    with pytest.raises(PreconditionError, match="missing file"):
        load_manifest(path)


def test_load_manifest_rejects_duplicate_ids(small_corpus, tmp_path):
    manifest = load_manifest(small_corpus.manifest_path)
    dup = LibraryManifest(tracks=manifest.tracks + [manifest.tracks[0]],
                          paintings=manifest.paintings, base_dir=small_corpus.root)
    path = small_corpus.root / "dup_manifest.json"
    save_manifest(dup, path)
    with pytest.raises(PreconditionError, match="duplicate track"):
        load_manifest(path)
    path.unlink()


def test_library_audio_is_decoded_once_and_chunked(small_corpus):
    lib = small_corpus.library
    tid = lib.track_ids[0]
    clip = lib.audio(tid)
    assert clip is lib.audio(tid)  # cached
    assert clip.sample_rate == SAMPLE_RATE
    # 8 s track -> two full 4 s chunks
    assert lib.n_chunks(tid) == 2
    chunk = lib.chunk_clip(tid, 1)
    np.testing.assert_array_equal(chunk.samples, clip.samples[CLIP_SAMPLES:2 * CLIP_SAMPLES])
    with pytest.raises(PreconditionError, match="no chunk"):
        lib.chunk_clip(tid, 2)


def test_library_clip_at_offsets(small_corpus):
    lib = small_corpus.library
    tid = lib.track_ids[0]
    clip = lib.clip_at(tid, 1.5)
    start = int(1.5 * SAMPLE_RATE)
    np.testing.assert_array_equal(clip.samples,
                                  lib.audio(tid).samples[start : start + CLIP_SAMPLES])
    with pytest.raises(PreconditionError, match="overruns"):
        lib.clip_at(tid, 100.0)


def test_library_unknown_ids_raise(small_corpus):
    lib = small_corpus.library
    with pytest.raises(KeyError):
        lib.audio("nope")
    with pytest.raises(KeyError):
        lib.painting("nope")


def test_labels_round_trip_and_validation(tmp_path):
    labels = LabelManifest(classes=["a", "b"], track_classes={"t0": 0, "t1": 1})
    path = tmp_path / "labels.json"
    save_labels(labels, path)
    loaded = load_labels(path)
    assert loaded.classes == ["a", "b"]
    assert loaded.track_classes == {"t0": 0, "t1": 1}
    assert loaded.class_of("t1") == 1

    path.write_text(json.dumps({"classes": ["a"], "tracks": {"t0": 3}}))
    with pytest.raises(PreconditionError, match="out-of-range"):
        load_labels(path)


def test_holdout_split_partitions_and_is_deterministic():
    ids = [f"t{i:02d}" for i in range(20)]
    train, held = holdout_split(ids, 0.1)
    assert sorted(train + held) == sorted(ids)
    assert len(held) == 2
    assert holdout_split(ids, 0.1) == (train, held)


def test_holdout_split_stratified_spans_classes():
    ids = [f"t{i:02d}" for i in range(20)]
    classes = {t: i % 4 for i, t in enumerate(ids)}
    _, held = holdout_split(ids, 0.1, classes)
    assert len({classes[t] for t in held}) >= 2


def test_holdout_split_needs_four_tracks():
    with pytest.raises(PreconditionError):
        holdout_split(["a", "b", "c"], 0.5)


def test_holdout_split_never_exhausts_training():
    ids = [f"t{i}" for i in range(5)]
    train, held = holdout_split(ids, 0.9)
    assert len(train) >= 2
    assert len(held) == 3
