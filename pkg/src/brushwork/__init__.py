"""Live cross-modal retrieval: a painting in progress plus contact-mic brush
audio drive selection of 4 s excerpts from an indexed music library.

Pipeline: a correspondence scorer filters the library down to the fraction of
chunks that best fit the canvas (stage 1), then a brush-audio embedding picks
the nearest surviving chunk (stage 2). The live engine wraps both stages
behind a tick loop with an HTTP/SSE control surface.
"""

from .audio import (
    CLIP_SAMPLES,
    N_FRAMES,
    N_MELS,
    SAMPLE_RATE,
    AudioClip,
    MelPatch,
    decode_resample,
    mel_patch,
)
from .correspond import (
    CorrespondenceModel,
    TrainConfig,
    build_correspondence_model,
    load_correspondence_model,
    score_pair,
    train_correspondence,
)
from .embedder import (
    AudioEmbedder,
    EmbedderConfig,
    Embedding,
    build_embedder,
    embed_audio,
    load_embedder,
    train_embedder,
)
from .engine import Session, SessionConfig, load_session_artifacts, run_script
from .errors import BrushworkError
from .image import ImageTensor, ingest_image
from .index import ChunkRecord, EmbeddingIndex, build_index, load_index, nearest, save_index
from .manifest import Library, LibraryManifest, load_labels, load_manifest
from .pipeline import (
    CongruityState,
    MatchEvent,
    StageOneResult,
    congruity_update,
    stage1_filter,
    stage2_retrieve,
)
from .server import EngineServer
from .toy import ToySpec, generate, make_labeled_clips

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "AudioEmbedder",
    "BrushworkError",
    "CLIP_SAMPLES",
    "ChunkRecord",
    "CongruityState",
    "CorrespondenceModel",
    "Embedding",
    "EmbeddingIndex",
    "EmbedderConfig",
    "EngineServer",
    "ImageTensor",
    "Library",
    "LibraryManifest",
    "MatchEvent",
    "MelPatch",
    "N_FRAMES",
    "N_MELS",
    "SAMPLE_RATE",
    "Session",
    "SessionConfig",
    "StageOneResult",
    "ToySpec",
    "TrainConfig",
    "build_correspondence_model",
    "build_embedder",
    "build_index",
    "congruity_update",
    "decode_resample",
    "embed_audio",
    "generate",
    "ingest_image",
    "load_correspondence_model",
    "load_embedder",
    "load_index",
    "load_labels",
    "load_manifest",
    "load_session_artifacts",
    "make_labeled_clips",
    "mel_patch",
    "nearest",
    "run_script",
    "save_index",
    "score_pair",
    "stage1_filter",
    "stage2_retrieve",
    "train_correspondence",
    "train_embedder",
]
