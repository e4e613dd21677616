"""Audio frontend: WAV decoding, resampling, log-mel patches, gain augmentation.

The canonical unit of audio everywhere in this package is a 4 s mono clip at
16 kHz (64000 samples), transformed into a 100x320 log-mel patch:
25 ms Hann window, FFT 512, 12.5 ms hop, 100 triangular HTK-mel filters
spanning 0-8000 Hz, log compression with a 1e-6 floor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import resample_poly

from .errors import DecodeError, PreconditionError, UnsupportedFormatError

SAMPLE_RATE = 16000
CLIP_SECONDS = 4.0
CLIP_SAMPLES = 64000  # 4 s x 16 kHz

N_MELS = 100
N_FRAMES = 320
WIN_LENGTH = 400  # 25 ms at 16 kHz
HOP_LENGTH = 200  # 12.5 ms at 16 kHz
N_FFT = 512
FMIN_HZ = 0.0
FMAX_HZ = 8000.0
LOG_FLOOR = 1e-6


@dataclass
class AudioClip:
    """Mono audio, float32 samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise PreconditionError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class MelPatch:
    """Log-mel energies, shape (n_mels, n_frames)."""

    values: np.ndarray
    bin_centers: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# WAV I/O (RIFF, PCM16 little-endian and IEEE float32 only)
# ---------------------------------------------------------------------------


def read_wav(raw: bytes) -> tuple[np.ndarray, int]:
    """Parse WAV bytes into (samples[n, channels] float32, sample_rate).

    Accepts PCM16 and IEEE float32 encodings; anything else is out of scope.
    """
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise DecodeError("not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise DecodeError("fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise DecodeError("data chunk truncated")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise DecodeError("missing fmt or data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise DecodeError("channel count must be >= 1")
    if audio_format == 1 and bits == 16:
        # Same scale the encoder uses, so a write/read round trip stays
        # within half a quantization step. -32768 lands just below -1.0;
        # decode_resample clips it back into range.
        values = np.frombuffer(data, dtype="<i2").astype(np.float32) / 32767.0
    elif audio_format == 3 and bits == 32:
        values = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedFormatError(
            f"unsupported WAV encoding (format tag {audio_format}, {bits}-bit); "
            "only PCM16 and float32 are in scope"
        )
    frames = len(values) // channels
    return values[: frames * channels].reshape(frames, channels), rate


def write_wav_pcm16(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono float32 samples in [-1, 1] as a PCM16 WAV file."""
    samples = np.asarray(samples, dtype=np.float32).reshape(-1)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        sample_rate,
        sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


# ---------------------------------------------------------------------------
# Decode + resample
# ---------------------------------------------------------------------------


def decode_resample(raw: bytes, target_rate: int = SAMPLE_RATE) -> AudioClip:
    """Decode WAV bytes, mix to mono, and resample to ``target_rate``.

    Output length is round(n_in * target_rate / input_rate). Multichannel
    input is averaged down to mono before resampling.
    """
    if target_rate <= 0:
        raise PreconditionError(f"target_rate must be positive, got {target_rate}")
    frames, rate = read_wav(raw)
    mono = frames.mean(axis=1) if frames.shape[1] > 1 else frames[:, 0]
    mono = np.clip(mono, -1.0, 1.0).astype(np.float32)
    if rate == target_rate or len(mono) == 0:
        return AudioClip(mono, target_rate)

    out_len = int(round(len(mono) * target_rate / rate))
    g = np.gcd(target_rate, rate)
    resampled = resample_poly(mono.astype(np.float64), target_rate // g, rate // g)
    if len(resampled) >= out_len:
        resampled = resampled[:out_len]
    else:
        resampled = np.pad(resampled, (0, out_len - len(resampled)))
    return AudioClip(np.clip(resampled, -1.0, 1.0).astype(np.float32), target_rate)


# ---------------------------------------------------------------------------
# Mel filterbank and patch extraction
# ---------------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = FMIN_HZ,
    fmax: float = FMAX_HZ,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular HTK-mel filterbank.

    Returns (weights[n_mels, n_fft//2 + 1], center_frequencies_hz[n_mels]).
    Triangles peak at 1.0; no area normalization.
    """
    fft_freqs = np.arange(n_fft // 2 + 1, dtype=np.float64) * sample_rate / n_fft
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)

    weights = np.zeros((n_mels, len(fft_freqs)), dtype=np.float64)
    for m in range(n_mels):
        lo, ctr, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - lo) / (ctr - lo)
        falling = (hi - fft_freqs) / (hi - ctr)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
    return weights.astype(np.float32), hz_points[1:-1].copy()


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window (standard STFT convention)."""
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)).astype(np.float64)


_FILTERBANK_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _cached_filterbank() -> tuple[np.ndarray, np.ndarray]:
    key = (N_MELS, N_FFT, SAMPLE_RATE, FMIN_HZ, FMAX_HZ)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank()
    return _FILTERBANK_CACHE[key]


def frame_signal(samples: np.ndarray, win_length: int, hop: int, n_frames: int) -> np.ndarray:
    """Left-aligned frames with tail zero-padding, shape (n_frames, win_length)."""
    needed = (n_frames - 1) * hop + win_length
    padded = np.zeros(needed, dtype=np.float64)
    padded[: len(samples)] = samples
    idx = np.arange(win_length)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def mel_patch(clip: AudioClip) -> MelPatch:
    """Transform a canonical 4 s / 16 kHz clip into a 100x320 log-mel patch.

    Clips shorter than 64000 samples are zero-padded; longer clips and
    non-16 kHz clips are rejected.
    """
    if clip.sample_rate != SAMPLE_RATE:
        raise PreconditionError(
            f"mel_patch requires {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz"
        )
    if len(clip.samples) > CLIP_SAMPLES:
        raise PreconditionError(
            f"clip has {len(clip.samples)} samples; at most {CLIP_SAMPLES} allowed"
        )
    samples = np.zeros(CLIP_SAMPLES, dtype=np.float64)
    samples[: len(clip.samples)] = clip.samples

    frames = frame_signal(samples, WIN_LENGTH, HOP_LENGTH, N_FRAMES)
    spectra = np.fft.rfft(frames * hann_window(WIN_LENGTH), n=N_FFT, axis=1)
    power = spectra.real**2 + spectra.imag**2  # (n_frames, n_fft//2+1)

    weights, centers = _cached_filterbank()
    mel_energy = power @ weights.astype(np.float64).T  # (n_frames, n_mels)
    values = np.log(mel_energy + LOG_FLOOR).T.astype(np.float32)
    return MelPatch(values=values, bin_centers=centers)


MEL_NORM_SCALE = -float(np.log(LOG_FLOOR)) / 2.0  # ~6.9078


def normalize_mel(values: np.ndarray) -> np.ndarray:
    """Scale log-mel values so silence maps to -1 and 0 log-energy to +1.

    Network input conditioning; both models apply it internally, so callers
    always pass raw MelPatch values.
    """
    return ((np.asarray(values) + MEL_NORM_SCALE) / MEL_NORM_SCALE).astype(np.float32)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

GAIN_DB_RANGE = (-12.0, 0.0)


def apply_gain_db(clip: AudioClip, gain_db: float) -> AudioClip:
    """Scale a clip by a dB gain, clipping the result to [-1, 1]."""
    gain = 10.0 ** (gain_db / 20.0)
    return AudioClip(np.clip(clip.samples * gain, -1.0, 1.0), clip.sample_rate)


def augment_audio(clip: AudioClip, rng: np.random.Generator) -> AudioClip:
    """Random amplitude variation: uniform gain in [-12, 0] dB."""
    gain_db = float(rng.uniform(*GAIN_DB_RANGE))
    return apply_gain_db(clip, gain_db)
