"""Deterministic synthetic corpus with known cross-modal structure.

Each class pairs an image hue band with an audio spectral band and pulse
rate, so class identity is recoverable from either modality alone and
retrieval claims can be verified at desk scale. A separate three-class
clip set (tones / noise / clicks) exercises the embedder.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .audio import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, mel_patch, write_wav_pcm16
from .embedder import LabeledClip
from .errors import PreconditionError
from .image import resize_bilinear
from .manifest import (
    LabelManifest,
    LibraryManifest,
    PaintingEntry,
    TrackEntry,
    save_labels,
    save_manifest,
)
from .nn import spawn_rng

HUE_BAND_HALF_WIDTH = 0.05
SPECTRAL_BAND_WIDTH = 900.0
SPECTRAL_LO_BASE = 300.0
SPECTRAL_LO_SPAN = 5800.0

# rng stream families (first SeedSequence entry after the seed)
_STREAM_TRACK = 10
_STREAM_PAINTING = 20
_STREAM_CLIPS = 30


@dataclass(frozen=True)
class ToySpec:
    n_tracks: int = 20
    n_classes: int = 4
    seed: int = 7
    track_duration: float = 12.0
    image_size: int = 256

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise PreconditionError(f"need >= 2 classes, got {self.n_classes}")
        if self.n_classes > 7:
            raise PreconditionError(
                "more than 7 classes would overlap the hue/spectral bands")
        if self.n_tracks < self.n_classes:
            raise PreconditionError("need at least one track per class")
        if self.track_duration < 4.0:
            raise PreconditionError("tracks must be at least 4 s long")


def class_hue_center(k: int, n_classes: int) -> float:
    return k / n_classes


def class_spectral_band(k: int, n_classes: int) -> tuple[float, float]:
    lo = SPECTRAL_LO_BASE + k * SPECTRAL_LO_SPAN / max(n_classes - 1, 1)
    return lo, lo + SPECTRAL_BAND_WIDTH


def class_pulse_rate(k: int) -> float:
    return 1.5 + float(k)


# ---------------------------------------------------------------------------
# Audio synthesis
# ---------------------------------------------------------------------------


def _bandpass_noise(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    noise = np.fft.irfft(spectrum, n=n)
    rms = np.sqrt((noise**2).mean())
    return noise / max(rms, 1e-12)


def synth_track_audio(k: int, spec: ToySpec, rng: np.random.Generator) -> np.ndarray:
    """Band-limited sinusoids + noise, pulsed at the class rate, peak 0.75."""
    n = int(round(spec.track_duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    lo, hi = class_spectral_band(k, spec.n_classes)

    mix = np.zeros(n)
    for _ in range(3):
        freq = rng.uniform(lo + 50.0, hi - 50.0)
        amp = rng.uniform(0.15, 0.3)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        mix += amp * np.sin(2.0 * np.pi * freq * t + phase)
    mix += 0.1 * _bandpass_noise(rng, n, lo, hi)

    pulse_phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.55 + 0.225 * (1.0 + np.cos(2.0 * np.pi * class_pulse_rate(k) * t
                                            + pulse_phase))
    mix *= envelope
    return (0.75 * mix / np.abs(mix).max()).astype(np.float32)


# ---------------------------------------------------------------------------
# Artwork synthesis
# ---------------------------------------------------------------------------


def hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    h6 = (h % 1.0) * 6.0
    sector = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    conds = [sector == i for i in range(6)]
    r = np.select(conds, [v, q, p, p, t, v])
    g = np.select(conds, [t, v, v, q, p, p])
    b = np.select(conds, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def synth_artwork(k: int, spec: ToySpec, rng: np.random.Generator) -> np.ndarray:
    """Smooth textured image whose hue stays inside the class band; uint8 RGB."""
    size = spec.image_size

    def smooth_field() -> np.ndarray:
        grid = rng.random((8, 8, 1))
        return resize_bilinear(grid, size, size)[:, :, 0]

    hue = (class_hue_center(k, spec.n_classes)
           + (smooth_field() - 0.5) * (HUE_BAND_HALF_WIDTH * 1.4)) % 1.0
    sat = 0.55 + 0.35 * smooth_field()
    val = 0.45 + 0.45 * smooth_field()
    rgb = hsv_to_rgb(hue, sat, val)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


def generate(spec: ToySpec, out_dir) -> tuple[Path, Path]:
    """Write WAVs, PNGs, manifest.json, and labels.json under out_dir.

    Fully determined by spec.seed: a second run produces byte-identical
    files. Returns (manifest_path, labels_path).
    """
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "art").mkdir(parents=True, exist_ok=True)

    tracks, track_classes = [], {}
    for i in range(spec.n_tracks):
        k = i % spec.n_classes
        rng = spawn_rng(spec.seed, _STREAM_TRACK, i)
        track_id = f"trk{i:03d}"
        write_wav_pcm16(out / "audio" / f"{track_id}.wav",
                        synth_track_audio(k, spec, rng), SAMPLE_RATE)
        Image.fromarray(synth_artwork(k, spec, rng)).save(out / "art" / f"{track_id}.png")
        tracks.append(TrackEntry(track_id=track_id,
                                 audio_path=f"audio/{track_id}.wav",
                                 artwork_path=f"art/{track_id}.png",
                                 album_id=track_id))
        track_classes[track_id] = k

    paintings = []
    for k in range(spec.n_classes):
        rng = spawn_rng(spec.seed, _STREAM_PAINTING, k)
        painting_id = f"pnt{k:03d}"
        Image.fromarray(synth_artwork(k, spec, rng)).save(out / "art" / f"{painting_id}.png")
        paintings.append(PaintingEntry(painting_id=painting_id,
                                       image_path=f"art/{painting_id}.png"))

    manifest_path = out / "manifest.json"
    labels_path = out / "labels.json"
    save_manifest(LibraryManifest(tracks=tracks, paintings=paintings, base_dir=out),
                  manifest_path)
    save_labels(LabelManifest(classes=[f"class{k}" for k in range(spec.n_classes)],
                              track_classes=track_classes), labels_path)
    return manifest_path, labels_path


# ---------------------------------------------------------------------------
# Three-class embedder clip set
# ---------------------------------------------------------------------------

CLIP_CLASS_NAMES = ["tone", "noise", "clicks"]


def _synth_tone(rng: np.random.Generator) -> np.ndarray:
    t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
    freq = rng.uniform(220.0, 3520.0)
    amp = rng.uniform(0.3, 0.6)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return (amp * np.sin(2.0 * np.pi * freq * t + phase)).astype(np.float32)


def _synth_noise(rng: np.random.Generator) -> np.ndarray:
    amp = rng.uniform(0.1, 0.3)
    return np.clip(amp * rng.standard_normal(CLIP_SAMPLES), -1.0, 1.0).astype(np.float32)


def _synth_clicks(rng: np.random.Generator) -> np.ndarray:
    rate = rng.uniform(2.0, 8.0)
    offset = rng.uniform(0.0, 1.0 / rate)
    samples = 0.003 * rng.standard_normal(CLIP_SAMPLES)
    click_len = 400
    decay = np.exp(-np.arange(click_len) / 80.0)
    start = offset
    while True:
        pos = int(round(start * SAMPLE_RATE))
        if pos >= CLIP_SAMPLES:
            break
        burst = 0.8 * rng.standard_normal(click_len) * decay
        end = min(pos + click_len, CLIP_SAMPLES)
        samples[pos:end] += burst[: end - pos]
        start += 1.0 / rate
    return np.clip(samples, -1.0, 1.0).astype(np.float32)


_CLIP_SYNTHS = [_synth_tone, _synth_noise, _synth_clicks]


def make_labeled_clips(n_per_class: int = 100,
                       seed: int = 0) -> tuple[list[LabeledClip], list[str]]:
    """Deterministic tones/noise/clicks mel clips for embedder training."""
    clips = []
    for class_id, synth in enumerate(_CLIP_SYNTHS):
        for j in range(n_per_class):
            rng = spawn_rng(seed, _STREAM_CLIPS + class_id, j)
            clip = AudioClip(synth(rng), SAMPLE_RATE)
            clips.append(LabeledClip(audio=mel_patch(clip), class_id=class_id))
    return clips, list(CLIP_CLASS_NAMES)
