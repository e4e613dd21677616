"""Dual-branch image-audio correspondence scorer.

An image branch and an audio branch each project their modality to a
512-dimensional point; two dense layers map the 1024-d concatenation to a
2-class softmax. Score 0 means the pair corresponds, 1 means dissimilar.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .audio import augment_audio, mel_patch, normalize_mel
from .errors import PreconditionError, ShapeError, TrainingError
from .image import IMAGE_SIZE, ImageTensor, augment_image
from .manifest import Library, holdout_split
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
    softmax,
    softmax_cross_entropy_grad,
    spawn_rng,
)
from .nn.rng import rng_metadata

FEATURE_DIM = 512
BRANCH_CHANNELS = (16, 32, 64, 128)
HEAD_HIDDEN = 128

# rng stream ids, so training draws stay independent of init and eval draws
_STREAM_INIT = 0
_STREAM_SAMPLE = 1
_STREAM_EVAL = 2


@dataclass
class PairSample:
    """One training pair: label 0 = corresponding, 1 = non-corresponding."""

    image: ImageTensor
    audio: np.ndarray  # raw log-mel values (100, 320)
    label: int


def _encoder(in_channels: int, rng: np.random.Generator | None) -> Sequential:
    """Branch stack: leading 2x2 pool, four stride-2 conv blocks, GAP, dense.

    The leading pool and conv stride keep a full forward/backward step within
    the minutes-scale training budget at 224x224 input.
    """
    layers = [MaxPool2d(2, 2)]
    prev = in_channels
    for ch in BRANCH_CHANNELS:
        layers += [Conv2d(prev, ch, kernel=3, stride=2, padding="same", rng=rng),
                   ReLU(), MaxPool2d(2, 2)]
        prev = ch
    layers += [GlobalAvgPool(), Dense(prev, FEATURE_DIM, rng=rng)]
    return Sequential(layers)


def _head(rng: np.random.Generator | None) -> Sequential:
    return Sequential([Dense(2 * FEATURE_DIM, HEAD_HIDDEN, rng=rng), ReLU(),
                       Dense(HEAD_HIDDEN, 2, rng=rng)])


class CorrespondenceModel:
    """Image encoder + audio encoder + 2-way classification head."""

    def __init__(self, image_encoder: Sequential, audio_encoder: Sequential,
                 head: Sequential, meta: dict):
        self.image_encoder = image_encoder
        self.audio_encoder = audio_encoder
        self.head = head
        self.meta = meta
        # width of each branch's feature vector; backward splits the head
        # gradient here
        self.feature_dim = int(meta.get("feature_dim", FEATURE_DIM))

    @property
    def params(self):
        return self.image_encoder.params + self.audio_encoder.params + self.head.params

    # -- encoding ----------------------------------------------------------

    def encode_images(self, images: np.ndarray, train: bool = False) -> np.ndarray:
        """(B, 224, 224, 3) standardized images -> (B, 512) features."""
        if images.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE, 3):
            raise ShapeError(f"expected (B, 224, 224, 3) images, got {images.shape}")
        return self.image_encoder.forward(images, train=train)

    def encode_mels(self, mels: np.ndarray, train: bool = False) -> np.ndarray:
        """(B, 100, 320) raw log-mel values -> (B, 512) features."""
        if mels.ndim != 3:
            raise ShapeError(f"expected (B, 100, 320) mel values, got {mels.shape}")
        return self.audio_encoder.forward(normalize_mel(mels)[..., None], train=train)

    def head_logits(self, image_features: np.ndarray, audio_features: np.ndarray,
                    train: bool = False) -> np.ndarray:
        if image_features.shape != audio_features.shape:
            raise ShapeError("feature batches must align "
                             f"({image_features.shape} vs {audio_features.shape})")
        return self.head.forward(
            np.concatenate([image_features, audio_features], axis=1), train=train)

    # -- scoring -----------------------------------------------------------

    def score_batch(self, images: np.ndarray, mels: np.ndarray) -> np.ndarray:
        """Probability of class 1 ("dissimilar") for each row; shape (B,)."""
        logits = self.head_logits(self.encode_images(images), self.encode_mels(mels))
        return softmax(logits)[:, 1]

    def scores_from_features(self, image_feature: np.ndarray,
                             audio_features: np.ndarray) -> np.ndarray:
        """One image feature against many audio features -> (N,) scores."""
        tiled = np.broadcast_to(image_feature, audio_features.shape)
        return softmax(self.head_logits(tiled, audio_features))[:, 1]

    def scores_against_image_features(self, image_features: np.ndarray,
                                      audio_feature: np.ndarray) -> np.ndarray:
        """Many image features against one audio feature -> (P,) scores."""
        tiled = np.broadcast_to(audio_feature, image_features.shape)
        return softmax(self.head_logits(image_features, tiled))[:, 1]

    # -- training plumbing --------------------------------------------------

    def forward_train(self, images: np.ndarray, mels: np.ndarray) -> np.ndarray:
        f_img = self.encode_images(images, train=True)
        f_aud = self.encode_mels(mels, train=True)
        return self.head_logits(f_img, f_aud, train=True)

    def backward(self, dlogits: np.ndarray) -> None:
        dconcat = self.head.backward(dlogits)
        self.image_encoder.backward(dconcat[:, :self.feature_dim])
        self.audio_encoder.backward(dconcat[:, self.feature_dim:])

    # -- persistence ---------------------------------------------------------

    def checkpoint_meta(self) -> dict:
        return dict(self.meta,
                    kind="correspondence",
                    feature_dim=self.feature_dim,
                    image_encoder=self.image_encoder.spec_table(),
                    audio_encoder=self.audio_encoder.spec_table(),
                    head=self.head.spec_table())

    def save(self, path) -> None:
        save_checkpoint(path, self.checkpoint_meta(), [p.value for p in self.params])

    def content_hash(self) -> str:
        return content_hash(self.checkpoint_meta(), [p.value for p in self.params])


def build_correspondence_model(seed: int) -> CorrespondenceModel:
    rng = spawn_rng(seed, _STREAM_INIT)
    return CorrespondenceModel(image_encoder=_encoder(3, rng),
                               audio_encoder=_encoder(1, rng),
                               head=_head(rng),
                               meta={"rng": rng_metadata(seed)})


def load_correspondence_model(path) -> CorrespondenceModel:
    meta, params = load_checkpoint(path)
    if meta.get("kind") != "correspondence":
        raise ShapeError(f"checkpoint at {path} is a {meta.get('kind')!r} model, "
                         "expected 'correspondence'")
    model = CorrespondenceModel(
        image_encoder=Sequential.from_spec_table(meta["image_encoder"]),
        audio_encoder=Sequential.from_spec_table(meta["audio_encoder"]),
        head=Sequential.from_spec_table(meta["head"]),
        meta={"rng": meta.get("rng", {}),
              "feature_dim": meta.get("feature_dim", FEATURE_DIM)})
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


def score_pair(model: CorrespondenceModel, image: ImageTensor, audio) -> float:
    """Dissimilarity probability in [0, 1]: 0 = strong association."""
    mel = np.asarray(audio.values if hasattr(audio, "values") else audio, dtype=np.float32)
    return float(model.score_batch(image.values[None], mel[None])[0])


def pair_probabilities(model: CorrespondenceModel, image: ImageTensor, audio) -> np.ndarray:
    mel = np.asarray(audio.values if hasattr(audio, "values") else audio, dtype=np.float32)
    logits = model.head_logits(model.encode_images(image.values[None]),
                               model.encode_mels(mel[None]))
    return softmax(logits)[0]


# ---------------------------------------------------------------------------
# Pair sampling
# ---------------------------------------------------------------------------


class PairSampler:
    """Draws balanced correspondence batches from a subset of library tracks.

    Positive pairs take the audio chunk from the image's own track at a
    uniform start offset; negatives draw the audio from a uniformly chosen
    track outside the anchor's album. With ``classes`` given, negatives are
    additionally restricted to a different class, which keeps evaluation
    balanced between positives and cross-class negatives (chance level is
    then exactly 0.5 for any constant scorer).
    """

    def __init__(self, library: Library, track_ids: list[str] | None = None,
                 classes: dict[str, int] | None = None):
        self.library = library
        self.track_ids = list(track_ids) if track_ids is not None else library.track_ids
        self.classes = classes
        if len(self.track_ids) < 2:
            raise PreconditionError(
                f"pair sampling needs >= 2 tracks, got {len(self.track_ids)}")
        for t in self.track_ids:
            if library.audio(t).duration < 4.0:
                raise PreconditionError(f"track {t!r} is shorter than 4 s")
            library.artwork(t)  # fail early if artwork is unreadable
        self._albums = {t: library.album_id(t) for t in self.track_ids}
        for t in self.track_ids:
            if not self._negative_candidates(t):
                raise PreconditionError(
                    f"track {t!r} has no negative candidates outside album "
                    f"{self._albums[t]!r}")

    def _random_clip(self, track_id: str, rng: np.random.Generator,
                     augment: bool) -> np.ndarray:
        clip_len = self.library.audio(track_id).sample_rate * 4
        max_start = len(self.library.audio(track_id).samples) - clip_len
        start = int(rng.integers(0, max_start + 1))
        clip = self.library.clip_at(track_id, start / self.library.audio(track_id).sample_rate)
        if augment:
            clip = augment_audio(clip, rng)
        return mel_patch(clip).values

    def _negative_candidates(self, anchor: str) -> list[str]:
        candidates = [t for t in self.track_ids if self._albums[t] != self._albums[anchor]]
        if self.classes is not None:
            candidates = [t for t in candidates
                          if self.classes[t] != self.classes[anchor]]
        return candidates

    def _negative_track(self, anchor: str, rng: np.random.Generator) -> str:
        candidates = self._negative_candidates(anchor)
        return candidates[int(rng.integers(0, len(candidates)))]

    def sample(self, batch_size: int, rng: np.random.Generator,
               augment: bool = True) -> list[PairSample]:
        if batch_size < 2 or batch_size % 2:
            raise PreconditionError(f"batch_size must be even and >= 2, got {batch_size}")
        samples = []
        for label in (0, 1):
            for _ in range(batch_size // 2):
                anchor = self.track_ids[int(rng.integers(0, len(self.track_ids)))]
                audio_track = anchor if label == 0 else self._negative_track(anchor, rng)
                mel = self._random_clip(audio_track, rng, augment)
                image = self.library.artwork(anchor)
                if augment:
                    image = augment_image(image, rng)
                samples.append(PairSample(image=image, audio=mel, label=label))
        return samples

    def sample_arrays(self, batch_size: int, rng: np.random.Generator,
                      augment: bool = True):
        """Batch as stacked arrays: (images, mels, labels, anchor/audio track ids)."""
        if batch_size < 2 or batch_size % 2:
            raise PreconditionError(f"batch_size must be even and >= 2, got {batch_size}")
        images, mels, labels, pairs = [], [], [], []
        for label in (0, 1):
            for _ in range(batch_size // 2):
                anchor = self.track_ids[int(rng.integers(0, len(self.track_ids)))]
                audio_track = anchor if label == 0 else self._negative_track(anchor, rng)
                mels.append(self._random_clip(audio_track, rng, augment))
                image = self.library.artwork(anchor)
                if augment:
                    image = augment_image(image, rng)
                images.append(image.values)
                labels.append(label)
                pairs.append((anchor, audio_track))
        return (np.stack(images), np.stack(mels),
                np.asarray(labels, dtype=np.int64), pairs)


def sample_pairs(library: Library, batch_size: int,
                 rng: np.random.Generator) -> list[PairSample]:
    """Balanced batch of augmented pairs over the whole library."""
    return PairSampler(library).sample(batch_size, rng)


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 450
    lr: float = 0.01  # 0.05 with momentum 0.9 diverges into dead ReLUs
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9
    eval_every: int = 100
    eval_pairs: int = 128
    holdout_fraction: float = 0.1
    log_path: str | None = None
    checkpoint_path: str | None = None


@dataclass
class TrainResult:
    model: CorrespondenceModel
    metrics: list[dict] = field(default_factory=list)
    train_tracks: list[str] = field(default_factory=list)
    holdout_tracks: list[str] = field(default_factory=list)


def evaluate_pairs(model: CorrespondenceModel, library: Library, track_ids: list[str],
                   n_pairs: int, rng: np.random.Generator,
                   classes: dict[str, int] | None = None,
                   batch_size: int = 64) -> dict:
    """Balanced un-augmented pair accuracy; prediction rule: score >= 0.5 -> 1.

    With class labels, negatives are sampled cross-class only, so the eval
    set is balanced between positives and cross-class negatives and accuracy
    equals cross_class_accuracy; a constant scorer lands at 0.5 exactly.
    """
    sampler = PairSampler(library, track_ids, classes)
    n_pairs = max(2, n_pairs - n_pairs % 2)
    correct = {"pos": 0, "neg_cross": 0, "neg_same": 0}
    total = {"pos": 0, "neg_cross": 0, "neg_same": 0}
    done = 0
    while done < n_pairs:
        take = min(batch_size, n_pairs - done)
        take = take if take % 2 == 0 else take + 1
        images, mels, labels, pairs = sampler.sample_arrays(take, rng, augment=False)
        scores = model.score_batch(images, mels)
        preds = (scores >= 0.5).astype(np.int64)
        for pred, label, (anchor, audio_track) in zip(preds, labels, pairs):
            if label == 0:
                bucket = "pos"
            elif classes is not None and classes[anchor] == classes[audio_track]:
                bucket = "neg_same"
            else:
                bucket = "neg_cross"
            total[bucket] += 1
            correct[bucket] += int(pred == label)
        done += take
    n_all = sum(total.values())
    n_cross = total["pos"] + total["neg_cross"]
    report = {
        "pairs": n_all,
        "accuracy": sum(correct.values()) / n_all,
        "cross_class_accuracy": (correct["pos"] + correct["neg_cross"]) / max(1, n_cross),
        "positive_accuracy": correct["pos"] / max(1, total["pos"]),
        "negative_cross_accuracy": correct["neg_cross"] / max(1, total["neg_cross"]),
        "negative_same_accuracy": (correct["neg_same"] / total["neg_same"]
                                   if total["neg_same"] else None),
        "negative_same_pairs": total["neg_same"],
    }
    return report


def train_correspondence(library: Library, config: TrainConfig,
                         classes: dict[str, int] | None = None) -> TrainResult:
    """SGD training loop over sampled pairs with periodic held-out accuracy.

    Emits one line-delimited JSON record per step (plus eval records) to
    config.log_path when given; raises TrainingError on non-finite loss.
    """
    if config.steps < 1:
        raise PreconditionError(f"steps must be >= 1, got {config.steps}")
    if config.holdout_fraction > 0:
        train_ids, holdout_ids = holdout_split(
            library.track_ids, config.holdout_fraction, classes)
    else:
        train_ids, holdout_ids = library.track_ids, []

    model = build_correspondence_model(config.seed)
    sampler = PairSampler(library, train_ids)
    sample_rng = spawn_rng(config.seed, _STREAM_SAMPLE)
    eval_rng = spawn_rng(config.seed, _STREAM_EVAL)

    log_fh = open(config.log_path, "w", encoding="utf-8") if config.log_path else None
    metrics: list[dict] = []

    def record(entry: dict) -> None:
        metrics.append(entry)
        if log_fh:
            log_fh.write(json.dumps(entry, sort_keys=True) + "\n")

    try:
        t0 = time.monotonic()
        for step in range(1, config.steps + 1):
            images, mels, labels, _ = sampler.sample_arrays(config.batch_size, sample_rng)
            logits = model.forward_train(images, mels)
            loss, dlogits = softmax_cross_entropy_grad(logits, labels)
            if not np.isfinite(loss):
                raise TrainingError(f"training loss became non-finite at step {step}")
            model.backward(dlogits)
            sgd_step(model.params, config.lr, config.momentum)

            entry = {"step": step, "loss": round(float(loss), 6)}
            if holdout_ids and (step % config.eval_every == 0 or step == config.steps):
                report = evaluate_pairs(model, library, holdout_ids,
                                        config.eval_pairs, eval_rng, classes)
                entry["holdout_accuracy"] = round(report["accuracy"], 4)
                entry["holdout_cross_class_accuracy"] = round(
                    report["cross_class_accuracy"], 4)
            record(entry)
        record({"done": True, "steps": config.steps,
                "seconds": round(time.monotonic() - t0, 2)})
    finally:
        if log_fh:
            log_fh.close()

    if config.checkpoint_path:
        model.save(config.checkpoint_path)
    return TrainResult(model=model, metrics=metrics,
                       train_tracks=list(train_ids), holdout_tracks=list(holdout_ids))
