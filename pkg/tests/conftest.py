"""Shared fixtures.

Two corpora: `toy_corpus` is the 20-track acceptance corpus and feeds the
trained-model fixtures; `small_setup` is a 6-track corpus with untrained
(but saved) models for engine/server/CLI mechanics, where model quality is
irrelevant and training time would be wasted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from brushwork.correspond import (
    TrainConfig,
    TrainResult,
    build_correspondence_model,
    train_correspondence,
)
from brushwork.embedder import (
    EmbedderConfig,
    EmbedderResult,
    LabeledClip,
    build_embedder,
    train_embedder,
)
from brushwork.engine import SessionConfig
from brushwork.index import build_index, save_index
from brushwork.manifest import LabelManifest, Library, load_labels, load_manifest
from brushwork.toy import CLIP_CLASS_NAMES, ToySpec, generate, make_labeled_clips

# Pinned training recipe for the acceptance corpus (20 tracks, 4 classes).
CORR_TRAIN = TrainConfig(steps=450, lr=0.01, batch_size=32, seed=0,
                         eval_every=50, eval_pairs=128)
EMB_TRAIN = EmbedderConfig(steps=300, lr=0.02, batch_size=32, seed=0, eval_every=50)
EMB_CLIPS_PER_CLASS = 100


@dataclass
class Corpus:
    root: Path
    manifest_path: Path
    labels_path: Path
    library: Library
    labels: LabelManifest


@dataclass
class TimedTraining:
    result: object
    seconds: float


def _make_corpus(root: Path, spec: ToySpec) -> Corpus:
    manifest_path, labels_path = generate(spec, root)
    return Corpus(root=root, manifest_path=manifest_path, labels_path=labels_path,
                  library=Library(load_manifest(manifest_path)),
                  labels=load_labels(labels_path))


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("toy20")
    return _make_corpus(root, ToySpec(n_tracks=20, n_classes=4, seed=7,
                                      track_duration=12.0))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("toy6")
    return _make_corpus(root, ToySpec(n_tracks=6, n_classes=3, seed=3,
                                      track_duration=8.0))


@pytest.fixture(scope="session")
def trained_correspondence(toy_corpus) -> TimedTraining:
    t0 = time.monotonic()
    result: TrainResult = train_correspondence(
        toy_corpus.library, CORR_TRAIN, toy_corpus.labels.track_classes)
    return TimedTraining(result=result, seconds=time.monotonic() - t0)


@pytest.fixture(scope="session")
def labeled_clips() -> tuple[list[LabeledClip], list[str]]:
    clips, names = make_labeled_clips(EMB_CLIPS_PER_CLASS, seed=0)
    assert names == CLIP_CLASS_NAMES
    return clips, names


@pytest.fixture(scope="session")
def trained_embedder(labeled_clips) -> TimedTraining:
    clips, _ = labeled_clips
    t0 = time.monotonic()
    result: EmbedderResult = train_embedder(clips, EMB_TRAIN)
    return TimedTraining(result=result, seconds=time.monotonic() - t0)


@dataclass
class SmallSetup:
    """Saved (untrained) artifacts over the 6-track corpus."""

    corpus: Corpus
    correspondence_path: Path
    embedder_path: Path
    index_path: Path
    config: SessionConfig

    def session_config(self, **overrides) -> SessionConfig:
        from dataclasses import replace
        return replace(self.config, **overrides)


@pytest.fixture(scope="session")
def small_setup(small_corpus, tmp_path_factory) -> SmallSetup:
    root = tmp_path_factory.mktemp("small_artifacts")
    correspondence = build_correspondence_model(seed=1)
    corr_path = root / "corr.ckpt"
    correspondence.save(corr_path)

    embedder = build_embedder(seed=1, n_classes=3)
    emb_path = root / "emb.ckpt"
    embedder.save(emb_path)

    library = small_corpus.library
    index = build_index(((tid, library.audio(tid)) for tid in library.track_ids),
                        embedder)
    idx_path = root / "library.idx"
    save_index(index, idx_path)

    config = SessionConfig(correspondence_path=str(corr_path),
                           embedder_path=str(emb_path),
                           index_path=str(idx_path),
                           manifest_path=str(small_corpus.manifest_path),
                           fraction=0.25, tick_interval=1.0,
                           image_refresh=2.0, alpha=0.3)
    return SmallSetup(corpus=small_corpus, correspondence_path=corr_path,
                      embedder_path=emb_path, index_path=idx_path, config=config)


@pytest.fixture(scope="session")
def small_artifacts(small_setup):
    from brushwork.engine import load_session_artifacts
    return load_session_artifacts(small_setup.config)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(1234))
