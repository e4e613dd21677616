"""Audio embedder: embeddings, distances, training loop mechanics."""

import numpy as np
import pytest

from brushwork.audio import MelPatch
from brushwork.correspond import build_correspondence_model
from brushwork.embedder import (
    EMBEDDING_DIM,
    EmbedderConfig,
    Embedding,
    LabeledClip,
    build_embedder,
    class_distance_report,
    classification_accuracy,
    distance,
    embed_audio,
    load_embedder,
    train_embedder,
)
from brushwork.errors import PreconditionError, ShapeError
from brushwork.toy import make_labeled_clips


@pytest.fixture(scope="module")
def model():
    return build_embedder(seed=0, n_classes=3)


@pytest.fixture(scope="module")
def tiny_clips():
    clips, _ = make_labeled_clips(10, seed=2)
    return clips


def test_embedding_validation():
    with pytest.raises(PreconditionError, match="non-finite"):
        Embedding(vector=np.array([1.0, np.nan]))
    e = Embedding(vector=np.ones((2, 3)))
    assert e.vector.shape == (6,)  # flattened
    assert e.vector.dtype == np.float32


def test_distance_oracle():
    a = Embedding(vector=np.array([0.0, 3.0]))
    b = Embedding(vector=np.array([4.0, 0.0]))
    assert distance(a, b) == pytest.approx(5.0)
    assert distance(a, a) == 0.0
    with pytest.raises(ShapeError):
        distance(a, Embedding(vector=np.zeros(3)))


def test_embed_audio_deterministic(model, tiny_clips):
    patch = tiny_clips[0].audio
    a = embed_audio(model, patch, source=("trk", 1))
    b = embed_audio(model, patch)
    assert a.vector.shape == (EMBEDDING_DIM,)
    assert a.source == ("trk", 1)
    np.testing.assert_array_equal(a.vector, b.vector)


def test_embed_batch_matches_single(model, tiny_clips):
    mels = np.stack([c.audio.values for c in tiny_clips[:3]])
    batch = model.embed_batch(mels)
    for i in range(3):
        np.testing.assert_allclose(batch[i], model.embed_batch(mels[i : i + 1])[0],
                                   atol=1e-5)


def test_build_validation():
    with pytest.raises(PreconditionError):
        build_embedder(seed=0, n_classes=1)


def test_save_load_round_trip(model, tiny_clips, tmp_path):
    path = tmp_path / "emb.ckpt"
    model.save(path)
    loaded = load_embedder(path)
    assert loaded.content_hash() == model.content_hash()
    assert loaded.n_classes == 3
    mels = np.stack([c.audio.values for c in tiny_clips[:2]])
    np.testing.assert_array_equal(loaded.embed_batch(mels), model.embed_batch(mels))


def test_load_rejects_wrong_kind(tmp_path):
    path = tmp_path / "corr.ckpt"
    build_correspondence_model(seed=0).save(path)
    with pytest.raises(ShapeError, match="expected 'embedder'"):
        load_embedder(path)


def test_train_embedder_validation():
    clips, _ = make_labeled_clips(4, seed=0)
    with pytest.raises(PreconditionError, match=">= 10 clips"):
        train_embedder(clips, EmbedderConfig(steps=1))
    one_class = [LabeledClip(audio=c.audio, class_id=0) for c in clips]
    with pytest.raises(PreconditionError, match=">= 2 classes"):
        train_embedder(one_class, EmbedderConfig(steps=1))


def test_train_embedder_smoke(tiny_clips, tmp_path):
    log_path = tmp_path / "train.log"
    ckpt = tmp_path / "emb.ckpt"
    config = EmbedderConfig(steps=2, lr=0.001, batch_size=8, seed=0, eval_every=1,
                            log_path=str(log_path), checkpoint_path=str(ckpt))
    result = train_embedder(tiny_clips, config)
    steps = [m for m in result.metrics if "step" in m]
    assert [m["step"] for m in steps] == [1, 2]
    assert all(np.isfinite(m["loss"]) for m in steps)
    assert "holdout_accuracy" in steps[-1]
    # stratified holdout: one clip per class at 10 clips/class, fraction 0.1
    assert len(result.holdout) == 3
    assert load_embedder(ckpt).content_hash() == result.model.content_hash()
    assert log_path.read_text().count("\n") == len(result.metrics)


def test_training_is_deterministic(tiny_clips):
    config = EmbedderConfig(steps=2, lr=0.001, batch_size=8, seed=0,
                            holdout_fraction=0.0)
    a = train_embedder(tiny_clips, config)
    b = train_embedder(tiny_clips, config)
    assert a.model.content_hash() == b.model.content_hash()


def test_reports_on_untrained_model(model, tiny_clips):
    mels = np.stack([c.audio.values for c in tiny_clips])
    labels = np.asarray([c.class_id for c in tiny_clips])
    acc = classification_accuracy(model, mels, labels)
    assert 0.0 <= acc <= 1.0
    report = class_distance_report(model, mels, labels)
    assert report["intra_mean"] >= 0.0
    assert report["inter_mean"] >= 0.0
