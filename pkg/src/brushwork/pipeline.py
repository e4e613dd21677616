"""Two-step selection: visual correspondence pre-filter over library chunks,
then audio-embedding nearest neighbor among the survivors, plus the running
congruity measure for the meter scenario."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .correspond import CorrespondenceModel, score_pair
from .embedder import AudioEmbedder, embed_audio
from .errors import ConfigError, EmptyIndexError, PreconditionError
from .image import ImageTensor
from .index import ChunkRecord, EmbeddingIndex, nearest


@dataclass(frozen=True)
class StageOneResult:
    painting_id: str
    survivors: dict  # (track_id, chunk_index) -> visual score in [0, 1]
    fraction: float

    @property
    def survivor_keys(self) -> set:
        return set(self.survivors)


@dataclass(frozen=True)
class MatchEvent:
    chunk: ChunkRecord
    stage1_score: float
    stage2_distance: float
    timestamp: float
    painting_id: str | None = None

    def as_dict(self) -> dict:
        payload = {
            "track_id": self.chunk.track_id,
            "chunk_index": self.chunk.chunk_index,
            "start_time": self.chunk.start_time,
            "stage1_score": round(self.stage1_score, 6),
            "stage2_distance": round(self.stage2_distance, 6),
            "timestamp": round(self.timestamp, 3),
        }
        if self.painting_id is not None:
            payload["painting_id"] = self.painting_id
        return payload


def survivor_count(n_total: int, fraction: float) -> int:
    """max(1, ceil(fraction * n)): the kept size of the stage-1 cut."""
    if not 0 < fraction <= 1:
        raise PreconditionError(f"fraction must be in (0, 1], got {fraction}")
    if n_total < 1:
        raise EmptyIndexError("no chunks to filter")
    return max(1, math.ceil(fraction * n_total))


def select_lowest(keys: list, scores: np.ndarray, fraction: float) -> dict:
    """Keep the lowest-scoring max(1, ceil(fraction*N)) keys; ties resolve in
    key order (keys arrive pre-sorted by (track_id, chunk_index))."""
    if len(keys) != len(scores):
        raise PreconditionError(f"{len(keys)} keys vs {len(scores)} scores")
    keep = survivor_count(len(keys), fraction)
    order = np.argsort(np.asarray(scores, dtype=np.float64), kind="stable")[:keep]
    return {keys[i]: float(scores[i]) for i in order}


def painting_hash(painting: ImageTensor) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(painting.values, dtype="<f4").tobytes()).hexdigest()


def stage1_filter(model: CorrespondenceModel, painting: ImageTensor,
                  index: EmbeddingIndex, library_mels=None, fraction: float = 0.01,
                  painting_id: str = "live", audio_features: np.ndarray | None = None,
                  score_cache: dict | None = None, model_hash: str | None = None,
                  batch_size: int = 64) -> StageOneResult:
    """Score every chunk against the painting and keep the lowest fraction.

    ``library_mels`` maps (track_id, chunk_index) to a MelPatch; alternatively
    precomputed branch ``audio_features`` aligned with index.records skip the
    audio encoder. ``score_cache`` memoizes the full score vector per
    (painting hash, model hash), since scoring dominates refilter cost.
    """
    survivor_count(len(index), fraction)  # validates fraction and emptiness
    cache_key = None
    scores = None
    if score_cache is not None:
        cache_key = (painting_hash(painting), model_hash or model.content_hash())
        scores = score_cache.get(cache_key)

    if scores is None:
        image_feature = model.encode_images(painting.values[None])[0]
        if audio_features is None:
            if library_mels is None:
                raise PreconditionError("need library_mels or audio_features to score")
            feats = []
            for i in range(0, len(index), batch_size):
                mels = np.stack([library_mels(r.track_id, r.chunk_index).values
                                 for r in index.records[i : i + batch_size]])
                feats.append(model.encode_mels(mels))
            audio_features = np.concatenate(feats)
        if len(audio_features) != len(index):
            raise PreconditionError(
                f"{len(audio_features)} audio features for {len(index)} records")
        scores = model.scores_from_features(image_feature, audio_features)
        if score_cache is not None:
            score_cache[cache_key] = scores

    return StageOneResult(painting_id=painting_id,
                          survivors=select_lowest(index.keys, scores, fraction),
                          fraction=fraction)


def stage2_retrieve(embedder: AudioEmbedder, index: EmbeddingIndex,
                    stage1: StageOneResult, brush_audio,
                    timestamp: float = 0.0) -> MatchEvent:
    """Nearest stage-1 survivor to the brush-stroke audio embedding."""
    if not stage1.survivors:
        raise EmptyIndexError("stage-1 result has no survivors")
    emb = embed_audio(embedder, brush_audio)
    (record, dist), = nearest(index, emb, k=1, candidate_filter=stage1.survivor_keys)
    return MatchEvent(chunk=record,
                      stage1_score=stage1.survivors[record.key],
                      stage2_distance=dist,
                      timestamp=timestamp)


@dataclass(frozen=True)
class CongruityState:
    """Exponentially smoothed alignment level; raw = 1 - dissimilarity score."""

    alpha: float = 0.3
    raw: float = 0.0
    smoothed: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")

    def as_dict(self) -> dict:
        return {"raw": round(self.raw, 6),
                "smoothed": round(self.smoothed if self.smoothed is not None else self.raw, 6),
                "alpha": self.alpha}


def congruity_update(state: CongruityState, model: CorrespondenceModel,
                     current_painting: ImageTensor, current_music) -> CongruityState:
    """EMA step: the first update adopts the raw value directly."""
    raw = 1.0 - score_pair(model, current_painting, current_music)
    if state.smoothed is None:
        smoothed = raw
    else:
        smoothed = state.alpha * raw + (1.0 - state.alpha) * state.smoothed
    return CongruityState(alpha=state.alpha, raw=raw, smoothed=smoothed)
