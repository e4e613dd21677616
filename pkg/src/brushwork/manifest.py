"""Library manifests and loaded-catalog access.

A manifest is a human-editable JSON catalog of tracks (audio + artwork +
album id) and standalone paintings. Paths are stored relative to the
manifest file so generated corpora are byte-identical across machines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, MelPatch, decode_resample, mel_patch
from .errors import PreconditionError
from .image import ImageTensor, ingest_image


@dataclass(frozen=True)
class TrackEntry:
    track_id: str
    audio_path: str
    artwork_path: str
    album_id: str


@dataclass(frozen=True)
class PaintingEntry:
    painting_id: str
    image_path: str


@dataclass
class LibraryManifest:
    tracks: list[TrackEntry]
    paintings: list[PaintingEntry] = field(default_factory=list)
    base_dir: Path = Path(".")

    def resolve(self, rel_path: str) -> Path:
        return (self.base_dir / rel_path).resolve()

    def track(self, track_id: str) -> TrackEntry:
        for entry in self.tracks:
            if entry.track_id == track_id:
                return entry
        raise KeyError(track_id)


def _check_unique(kind: str, ids: list[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise PreconditionError(f"duplicate {kind} id {i!r} in manifest")
        seen.add(i)


def load_manifest(path) -> LibraryManifest:
    """Read a manifest, checking id uniqueness and that referenced files exist."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    tracks = [TrackEntry(**t) for t in data.get("tracks", [])]
    paintings = [PaintingEntry(**p) for p in data.get("paintings", [])]
    manifest = LibraryManifest(tracks=tracks, paintings=paintings, base_dir=path.parent)
    _check_unique("track", [t.track_id for t in tracks])
    _check_unique("painting", [p.painting_id for p in paintings])
    for t in tracks:
        for rel in (t.audio_path, t.artwork_path):
            if not manifest.resolve(rel).is_file():
                raise PreconditionError(f"manifest references missing file {rel!r}")
    for p in paintings:
        if not manifest.resolve(p.image_path).is_file():
            raise PreconditionError(f"manifest references missing file {p.image_path!r}")
    return manifest


def save_manifest(manifest: LibraryManifest, path) -> None:
    data = {
        "tracks": [vars(t) for t in manifest.tracks],
        "paintings": [vars(p) for p in manifest.paintings],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class LabelManifest:
    """Class taxonomy for embedder training: track_id -> class index."""

    classes: list[str]
    track_classes: dict[str, int]

    def class_of(self, track_id: str) -> int:
        return self.track_classes[track_id]


def load_labels(path) -> LabelManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    labels = LabelManifest(classes=list(data["classes"]),
                           track_classes={k: int(v) for k, v in data["tracks"].items()})
    for track_id, class_id in labels.track_classes.items():
        if not 0 <= class_id < len(labels.classes):
            raise PreconditionError(f"track {track_id!r} has out-of-range class {class_id}")
    return labels


def save_labels(labels: LabelManifest, path) -> None:
    data = {"classes": labels.classes, "tracks": labels.track_classes}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class Library:
    """A manifest with its data loaded on demand and cached in memory.

    Tracks are decoded to 16 kHz mono once; chunk mels are 4 s non-overlapping
    segments (trailing remainder dropped).
    """

    def __init__(self, manifest: LibraryManifest):
        self.manifest = manifest
        self._audio: dict[str, AudioClip] = {}
        self._artwork: dict[str, ImageTensor] = {}
        self._paintings: dict[str, ImageTensor] = {}
        self._chunk_mels: dict[tuple[str, int], MelPatch] = {}

    @property
    def track_ids(self) -> list[str]:
        return [t.track_id for t in self.manifest.tracks]

    @property
    def painting_ids(self) -> list[str]:
        return [p.painting_id for p in self.manifest.paintings]

    def album_id(self, track_id: str) -> str:
        return self.manifest.track(track_id).album_id

    def audio(self, track_id: str) -> AudioClip:
        if track_id not in self._audio:
            entry = self.manifest.track(track_id)
            raw = self.manifest.resolve(entry.audio_path).read_bytes()
            self._audio[track_id] = decode_resample(raw, SAMPLE_RATE)
        return self._audio[track_id]

    def artwork(self, track_id: str) -> ImageTensor:
        if track_id not in self._artwork:
            entry = self.manifest.track(track_id)
            raw = self.manifest.resolve(entry.artwork_path).read_bytes()
            self._artwork[track_id] = ingest_image(raw)
        return self._artwork[track_id]

    def painting(self, painting_id: str) -> ImageTensor:
        if painting_id not in self._paintings:
            for entry in self.manifest.paintings:
                if entry.painting_id == painting_id:
                    raw = self.manifest.resolve(entry.image_path).read_bytes()
                    self._paintings[painting_id] = ingest_image(raw)
                    break
            else:
                raise KeyError(painting_id)
        return self._paintings[painting_id]

    def n_chunks(self, track_id: str) -> int:
        return int(math.floor(len(self.audio(track_id).samples) / CLIP_SAMPLES))

    def chunk_clip(self, track_id: str, chunk_index: int) -> AudioClip:
        if not 0 <= chunk_index < self.n_chunks(track_id):
            raise PreconditionError(
                f"track {track_id!r} has no chunk {chunk_index} "
                f"(contains {self.n_chunks(track_id)})")
        clip = self.audio(track_id)
        start = chunk_index * CLIP_SAMPLES
        return AudioClip(clip.samples[start : start + CLIP_SAMPLES].copy(), clip.sample_rate)

    def chunk_mel(self, track_id: str, chunk_index: int) -> MelPatch:
        key = (track_id, chunk_index)
        if key not in self._chunk_mels:
            self._chunk_mels[key] = mel_patch(self.chunk_clip(track_id, chunk_index))
        return self._chunk_mels[key]

    def clip_at(self, track_id: str, start_seconds: float) -> AudioClip:
        """A 4 s clip starting at an arbitrary offset within the track."""
        clip = self.audio(track_id)
        start = int(round(start_seconds * clip.sample_rate))
        if start < 0 or start + CLIP_SAMPLES > len(clip.samples):
            raise PreconditionError(
                f"clip at {start_seconds:.2f}s overruns track {track_id!r}")
        return AudioClip(clip.samples[start : start + CLIP_SAMPLES].copy(), clip.sample_rate)


def holdout_split(track_ids: list[str], fraction: float,
                  classes: dict[str, int] | None = None) -> tuple[list[str], list[str]]:
    """Deterministic train/holdout split over tracks.

    Reserves max(2, round(fraction * n)) tracks. With class labels the pick
    is a stratified round-robin so the holdout spans >= 2 distinct classes,
    which cross-class evaluation needs.
    """
    ids = sorted(track_ids)
    if len(ids) < 4:
        raise PreconditionError(f"need at least 4 tracks to split, got {len(ids)}")
    n_hold = min(max(2, round(fraction * len(ids))), len(ids) - 2)
    if classes is None:
        held = ids[::max(1, len(ids) // n_hold)][:n_hold]
    else:
        by_class: dict[int, list[str]] = {}
        for t in ids:
            by_class.setdefault(classes[t], []).append(t)
        rotation = sorted(by_class)
        held, i = [], 0
        while len(held) < n_hold:
            bucket = by_class[rotation[i % len(rotation)]]
            if bucket:
                held.append(bucket.pop(0))
            i += 1
    held_set = set(held)
    return [t for t in ids if t not in held_set], sorted(held)
