"""Audio embedder: a conv classifier whose last-conv-layer activations,
globally average pooled, serve as fixed-length audio signatures compared by
Euclidean distance."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .audio import MelPatch, normalize_mel
from .errors import PreconditionError, ShapeError, TrainingError
from .nn import (
    Conv2d,
    Dense,
    GlobalAvgPool,
    MaxPool2d,
    ReLU,
    Sequential,
    content_hash,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    softmax_cross_entropy_grad,
    spawn_rng,
)
from .nn.rng import rng_metadata

EMBEDDING_DIM = 512
EMBEDDER_CHANNELS = (32, 64, 128, 512)

_STREAM_INIT = 0
_STREAM_SHUFFLE = 1


@dataclass(frozen=True)
class Embedding:
    """Fixed-length audio signature with its provenance."""

    vector: np.ndarray
    source: tuple[str, int] = ("live", 0)

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(vec)):
            raise PreconditionError("embedding contains non-finite values")
        object.__setattr__(self, "vector", vec)


@dataclass
class LabeledClip:
    audio: MelPatch
    class_id: int


def distance(a: Embedding, b: Embedding) -> float:
    """Euclidean distance, accumulated in 64-bit."""
    va, vb = a.vector, b.vector
    if va.shape != vb.shape:
        raise ShapeError(f"embedding lengths differ: {va.shape[0]} vs {vb.shape[0]}")
    diff = va.astype(np.float64) - vb.astype(np.float64)
    return float(np.sqrt(diff @ diff))


class AudioEmbedder:
    """Feature stack (convs ending at the embedding width, then GAP) plus a
    dense classifier head used only during training."""

    def __init__(self, features: Sequential, classifier: Dense, n_classes: int,
                 meta: dict):
        self.features = features
        self.classifier = classifier
        self.n_classes = n_classes
        self.meta = meta
        self.embedding_dim = classifier.n_in

    @property
    def params(self):
        return self.features.params + self.classifier.params

    def embed_batch(self, mels: np.ndarray, train: bool = False) -> np.ndarray:
        """(B, 100, 320) raw log-mel values -> (B, D) embeddings."""
        if mels.ndim != 3:
            raise ShapeError(f"expected (B, 100, 320) mel values, got {mels.shape}")
        return self.features.forward(normalize_mel(mels)[..., None], train=train)

    def logits(self, mels: np.ndarray, train: bool = False) -> np.ndarray:
        return self.classifier.forward(self.embed_batch(mels, train=train), train=train)

    def backward(self, dlogits: np.ndarray) -> None:
        self.features.backward(self.classifier.backward(dlogits))

    def checkpoint_meta(self) -> dict:
        return dict(self.meta,
                    kind="embedder",
                    embedding_dim=self.embedding_dim,
                    n_classes=self.n_classes,
                    features=self.features.spec_table(),
                    classifier=self.classifier.spec())

    def save(self, path) -> None:
        save_checkpoint(path, self.checkpoint_meta(), [p.value for p in self.params])

    def content_hash(self) -> str:
        return content_hash(self.checkpoint_meta(), [p.value for p in self.params])


def build_embedder(seed: int, n_classes: int,
                   channels: tuple[int, ...] = EMBEDDER_CHANNELS) -> AudioEmbedder:
    if n_classes < 2:
        raise PreconditionError(f"need at least 2 classes, got {n_classes}")
    rng = spawn_rng(seed, _STREAM_INIT)
    layers = [MaxPool2d(2, 2)]
    prev = 1
    for ch in channels:
        layers += [Conv2d(prev, ch, kernel=3, stride=2, padding="same", rng=rng),
                   ReLU(), MaxPool2d(2, 2)]
        prev = ch
    layers.append(GlobalAvgPool())
    return AudioEmbedder(features=Sequential(layers),
                         classifier=Dense(prev, n_classes, rng=rng),
                         n_classes=n_classes,
                         meta={"rng": rng_metadata(seed)})


def load_embedder(path) -> AudioEmbedder:
    meta, params = load_checkpoint(path)
    if meta.get("kind") != "embedder":
        raise ShapeError(f"checkpoint at {path} is a {meta.get('kind')!r} model, "
                         "expected 'embedder'")
    classifier_spec = meta["classifier"]
    model = AudioEmbedder(features=Sequential.from_spec_table(meta["features"]),
                          classifier=Dense(classifier_spec["n_in"], classifier_spec["n_out"]),
                          n_classes=int(meta["n_classes"]),
                          meta={"rng": meta.get("rng", {})})
    targets = model.params
    if len(targets) != len(params):
        raise ShapeError(f"checkpoint has {len(params)} parameters, model needs {len(targets)}")
    for target, value in zip(targets, params):
        if target.shape != value.shape:
            raise ShapeError(f"parameter shape {value.shape} != expected {target.shape}")
        target.value = value.astype(np.float32)
        target.grad = np.zeros_like(target.value)
        target.momentum = np.zeros_like(target.value)
    return model


def embed_audio(model: AudioEmbedder, audio: MelPatch,
                source: tuple[str, int] = ("live", 0)) -> Embedding:
    """Deterministic embedding of one mel patch."""
    return Embedding(vector=model.embed_batch(audio.values[None])[0], source=source)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class EmbedderConfig:
    steps: int = 300
    lr: float = 0.02
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9
    eval_every: int = 50
    holdout_fraction: float = 0.1
    log_path: str | None = None
    checkpoint_path: str | None = None


@dataclass
class EmbedderResult:
    model: AudioEmbedder
    metrics: list[dict] = field(default_factory=list)
    holdout: list[int] = field(default_factory=list)  # indices into the dataset


def classification_accuracy(model: AudioEmbedder, mels: np.ndarray,
                            labels: np.ndarray, batch_size: int = 64) -> float:
    correct = 0
    for i in range(0, len(mels), batch_size):
        logits = model.logits(mels[i : i + batch_size])
        correct += int((logits.argmax(axis=1) == labels[i : i + batch_size]).sum())
    return correct / len(mels)


def _stratified_holdout(labels: np.ndarray, fraction: float) -> np.ndarray:
    """Indices of a per-class holdout slice (at least one clip per class)."""
    held = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        held.extend(members[: max(1, round(fraction * len(members)))])
    return np.asarray(sorted(held))


def train_embedder(dataset: list[LabeledClip], config: EmbedderConfig) -> EmbedderResult:
    """Cross-entropy training of the classifier; embeddings fall out of the
    feature stack. Requires >= 2 classes with >= 10 clips each."""
    labels = np.asarray([c.class_id for c in dataset], dtype=np.int64)
    class_ids, counts = np.unique(labels, return_counts=True)
    if len(class_ids) < 2:
        raise PreconditionError(f"need >= 2 classes, got {len(class_ids)}")
    if counts.min() < 10:
        raise PreconditionError(
            f"every class needs >= 10 clips, got minimum {int(counts.min())}")
    if config.steps < 1:
        raise PreconditionError(f"steps must be >= 1, got {config.steps}")

    mels = np.stack([c.audio.values for c in dataset])
    n_classes = int(class_ids.max()) + 1
    held = (_stratified_holdout(labels, config.holdout_fraction)
            if config.holdout_fraction > 0 else np.asarray([], dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(len(dataset)), held)

    model = build_embedder(config.seed, n_classes)
    rng = spawn_rng(config.seed, _STREAM_SHUFFLE)
    log_fh = open(config.log_path, "w", encoding="utf-8") if config.log_path else None
    metrics: list[dict] = []

    def record(entry: dict) -> None:
        metrics.append(entry)
        if log_fh:
            log_fh.write(json.dumps(entry, sort_keys=True) + "\n")

    try:
        t0 = time.monotonic()
        for step in range(1, config.steps + 1):
            pick = train_idx[rng.integers(0, len(train_idx), size=config.batch_size)]
            logits = model.logits(mels[pick], train=True)
            loss, dlogits = softmax_cross_entropy_grad(logits, labels[pick])
            if not np.isfinite(loss):
                raise TrainingError(f"training loss became non-finite at step {step}")
            model.backward(dlogits)
            sgd_step(model.params, config.lr, config.momentum)

            entry = {"step": step, "loss": round(float(loss), 6)}
            if len(held) and (step % config.eval_every == 0 or step == config.steps):
                entry["holdout_accuracy"] = round(
                    classification_accuracy(model, mels[held], labels[held]), 4)
            record(entry)
        record({"done": True, "steps": config.steps,
                "seconds": round(time.monotonic() - t0, 2)})
    finally:
        if log_fh:
            log_fh.close()

    if config.checkpoint_path:
        model.save(config.checkpoint_path)
    return EmbedderResult(model=model, metrics=metrics, holdout=held.tolist())


def class_distance_report(model: AudioEmbedder, mels: np.ndarray,
                          labels: np.ndarray, batch_size: int = 64) -> dict:
    """Mean intra-class vs inter-class pairwise embedding distance."""
    vecs = np.concatenate([model.embed_batch(mels[i : i + batch_size])
                           for i in range(0, len(mels), batch_size)])
    vecs64 = vecs.astype(np.float64)
    sq = (vecs64 ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (vecs64 @ vecs64.T), 0.0)
    dists = np.sqrt(d2)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    return {
        "intra_mean": float(dists[same & off_diag].mean()),
        "inter_mean": float(dists[~same].mean()),
    }
