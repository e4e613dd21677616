"""Live session engine: rolling brush-audio window, canvas snapshots, periodic
ticks through the selection pipeline, and a sequenced event stream.

Sessions are driven either by a wall clock (serving) or a manual clock
(scripted replay); all event timestamps come from the session clock, so a
replayed script reproduces its event log byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, decode_resample, mel_patch
from .correspond import CorrespondenceModel, load_correspondence_model
from .embedder import AudioEmbedder, load_embedder
from .errors import ConfigError, PreconditionError, StartupError, StateError
from .image import ImageTensor, ingest_image
from .index import EmbeddingIndex, load_index
from .manifest import Library, load_manifest
from .pipeline import CongruityState, congruity_update, stage1_filter, stage2_retrieve

MODES = ("scenario1_crossfeed", "scenario2_congruity")


@dataclass(frozen=True)
class SessionConfig:
    correspondence_path: str
    embedder_path: str
    index_path: str
    manifest_path: str
    mode: str = "scenario1_crossfeed"
    fraction: float = 0.01
    tick_interval: float = 1.0
    image_refresh: float = 2.0
    alpha: float = 0.3

    RUNTIME_FIELDS = ("mode", "fraction", "tick_interval", "image_refresh", "alpha")

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.tick_interval <= 0:
            raise ConfigError(f"tick_interval must be > 0, got {self.tick_interval}")
        if self.image_refresh < 0:
            raise ConfigError(f"image_refresh must be >= 0, got {self.image_refresh}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")

    def runtime_dict(self) -> dict:
        return {"mode": self.mode, "fraction": self.fraction,
                "tick_interval": self.tick_interval,
                "image_refresh": self.image_refresh, "alpha": self.alpha}


class RollingBuffer:
    """Last `capacity` mono samples, order preserving."""

    def __init__(self, capacity: int = CLIP_SAMPLES):
        self.capacity = capacity
        self._samples = np.zeros(0, dtype=np.float32)
        self.total_pushed = 0

    def push(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples, dtype=np.float32).reshape(-1)
        self.total_pushed += len(samples)
        joined = np.concatenate([self._samples, samples])
        self._samples = joined[-self.capacity :]

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def full(self) -> bool:
        return self.total_pushed >= self.capacity

    def snapshot(self) -> np.ndarray:
        return self._samples.copy()


@dataclass(frozen=True)
class EngineEvent:
    sequence: int
    kind: str  # match | congruity | status
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"sequence": self.sequence, "kind": self.kind,
                           "payload": self.payload},
                          sort_keys=True, separators=(",", ":"))


def event_log_bytes(events: list[EngineEvent]) -> bytes:
    return ("\n".join(e.to_json() for e in events) + "\n").encode("utf-8")


class ManualClock:
    """Virtual session time, advanced explicitly by a replay driver."""

    def __init__(self, start: float = 0.0):
        self._t = start

    def now(self) -> float:
        return self._t

    def set(self, t: float) -> None:
        if t < self._t:
            raise PreconditionError(f"clock cannot move backwards ({t} < {self._t})")
        self._t = t


class WallClock:
    def __init__(self):
        self._t0 = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._t0


@dataclass
class SessionArtifacts:
    """Everything a session needs, loaded and preprocessed once."""

    correspondence: CorrespondenceModel
    embedder: AudioEmbedder
    index: EmbeddingIndex
    library: Library
    chunk_audio_features: np.ndarray  # (N, 512) aligned with index.records
    painting_features: np.ndarray  # (P, 512)
    painting_ids: list[str]
    model_hash: str


def load_session_artifacts(config: SessionConfig, batch_size: int = 64) -> SessionArtifacts:
    """Load models/index/library named by the config, failing with the path.

    Precomputes the correspondence audio features of every index chunk and
    the image features of every library painting, so per-session refilters
    and reverse-direction lookups are head-only.
    """
    def _load(what, path, loader):
        try:
            return loader(path)
        except FileNotFoundError as exc:
            raise StartupError(f"cannot load {what}: file not found: {path}") from exc
        except Exception as exc:
            raise StartupError(f"cannot load {what} from {path}: {exc}") from exc

    correspondence = _load("correspondence model", config.correspondence_path,
                           load_correspondence_model)
    embedder = _load("embedder model", config.embedder_path, load_embedder)
    index = _load("embedding index", config.index_path, load_index)
    manifest = _load("library manifest", config.manifest_path, load_manifest)
    library = Library(manifest)

    feats = []
    for i in range(0, len(index), batch_size):
        records = index.records[i : i + batch_size]
        try:
            mels = np.stack([library.chunk_mel(r.track_id, r.chunk_index).values
                             for r in records])
        except (KeyError, PreconditionError) as exc:
            raise StartupError(f"index entry missing from library: {exc}") from exc
        feats.append(correspondence.encode_mels(mels))
    chunk_audio_features = (np.concatenate(feats) if feats
                            else np.zeros((0, 512), dtype=np.float32))

    painting_ids = library.painting_ids
    if painting_ids:
        images = np.stack([library.painting(p).values for p in painting_ids])
        painting_features = correspondence.encode_images(images)
    else:
        painting_features = np.zeros((0, 512), dtype=np.float32)

    return SessionArtifacts(correspondence=correspondence, embedder=embedder,
                            index=index, library=library,
                            chunk_audio_features=chunk_audio_features,
                            painting_features=painting_features,
                            painting_ids=painting_ids,
                            model_hash=correspondence.content_hash())


class Session:
    """One live performance session; all mutation happens under one lock."""

    def __init__(self, artifacts: SessionArtifacts, config: SessionConfig,
                 clock=None, session_id: str | None = None):
        config.validate()
        self.artifacts = artifacts
        self.config = config
        self.clock = clock if clock is not None else WallClock()
        self.session_id = session_id or uuid.uuid4().hex
        self._buffer = RollingBuffer()
        self._canvas: ImageTensor | None = None
        self._canvas_hash: str | None = None
        self._pending_refilter = False
        self._force_refilter = False
        self._last_refilter: float | None = None
        self._stage1 = None
        self._congruity = CongruityState(alpha=config.alpha)
        self._sequence = 0
        self.events: list[EngineEvent] = []
        self._subscribers: list[queue.Queue] = []
        self._score_cache: dict = {}
        self._lock = threading.RLock()
        self.closed = False
        self._emit("status", {"text": "session started",
                              "session_id": self.session_id,
                              "mode": config.mode,
                              "warmed_up": False})

    # -- events --------------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> EngineEvent:
        with self._lock:
            self._sequence += 1
            event = EngineEvent(sequence=self._sequence, kind=kind, payload=payload)
            self.events.append(event)
            for q in self._subscribers:
                while True:
                    try:
                        q.put_nowait(event)
                        break
                    except queue.Full:  # slow subscriber: drop its oldest event
                        try:
                            q.get_nowait()
                        except queue.Empty:
                            pass
            return event

    def subscribe(self, since: int = 0, maxsize: int = 256):
        """Atomically returns (backlog after `since`, live queue)."""
        with self._lock:
            backlog = [e for e in self.events if e.sequence > since]
            q: queue.Queue = queue.Queue(maxsize=maxsize)
            self._subscribers.append(q)
            return backlog, q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # -- inputs ----------------------------------------------------------------

    def _check_open(self) -> None:
        if self.closed:
            raise StateError("session is closed")

    def push_audio(self, block: AudioClip) -> dict:
        if block.sample_rate != SAMPLE_RATE:
            raise PreconditionError(
                f"audio blocks must be {SAMPLE_RATE} Hz, got {block.sample_rate}")
        with self._lock:
            self._check_open()
            self._buffer.push(block.samples)
            return {"buffered": len(self._buffer),
                    "total_pushed": self._buffer.total_pushed,
                    "warmed_up": self._buffer.full}

    def push_image(self, raw: bytes) -> dict:
        tensor = ingest_image(raw)  # decode errors propagate
        digest = hashlib.sha256(raw).hexdigest()
        with self._lock:
            self._check_open()
            if digest == self._canvas_hash:
                return {"changed": False, "canvas_hash": digest}
            self._canvas = tensor
            self._canvas_hash = digest
            self._pending_refilter = True
            self._emit("status", {"text": "stage1 refresh", "canvas_hash": digest})
            return {"changed": True, "canvas_hash": digest}

    def set_params(self, updates: dict) -> dict:
        unknown = set(updates) - set(SessionConfig.RUNTIME_FIELDS)
        if unknown:
            raise ConfigError(f"unknown session parameters: {sorted(unknown)}")
        with self._lock:
            self._check_open()
            candidate = replace(self.config, **updates)
            candidate.validate()  # config stays unchanged if this raises
            if candidate.fraction != self.config.fraction:
                self._force_refilter = True
            if candidate.alpha != self.config.alpha:
                self._congruity = CongruityState(alpha=candidate.alpha,
                                                 raw=self._congruity.raw,
                                                 smoothed=self._congruity.smoothed)
            self.config = candidate
            self._emit("status", {"text": "params applied",
                                  "config": self.config.runtime_dict()})
            return self.config.runtime_dict()

    # -- ticking ------------------------------------------------------------

    def _refilter_due(self, now: float) -> bool:
        if self._stage1 is None or self._force_refilter:
            return True
        if not self._pending_refilter:
            return False
        return (self._last_refilter is None
                or now - self._last_refilter >= self.config.image_refresh)

    def _run_stage1(self, now: float) -> None:
        self._stage1 = stage1_filter(
            self.artifacts.correspondence, self._canvas, self.artifacts.index,
            fraction=self.config.fraction, painting_id="live",
            audio_features=self.artifacts.chunk_audio_features,
            score_cache=self._score_cache, model_hash=self.artifacts.model_hash)
        self._last_refilter = now
        self._pending_refilter = False
        self._force_refilter = False
        self._emit("status", {"text": "stage1 refiltered",
                              "survivors": len(self._stage1.survivors),
                              "canvas_hash": self._canvas_hash})

    def _nearest_painting(self, mel) -> str | None:
        if not self.artifacts.painting_ids:
            return None
        aud = self.artifacts.correspondence.encode_mels(mel.values[None])[0]
        scores = self.artifacts.correspondence.scores_against_image_features(
            self.artifacts.painting_features, aud)
        return self.artifacts.painting_ids[int(np.argmin(scores))]

    def tick(self) -> list[EngineEvent]:
        """One pipeline pass; returns the events it emitted."""
        with self._lock:
            self._check_open()
            now = round(self.clock.now(), 3)
            if not self._buffer.full:
                return [self._emit("status", {
                    "text": "warming up",
                    "buffered": self._buffer.total_pushed,
                    "needed": self._buffer.capacity,
                    "timestamp": now})]
            if self._canvas is None:
                return [self._emit("status", {"text": "no canvas snapshot",
                                              "timestamp": now})]
            emitted = []
            mel = mel_patch(AudioClip(self._buffer.snapshot(), SAMPLE_RATE))
            if self.config.mode == "scenario1_crossfeed":
                if self._refilter_due(now):
                    self._run_stage1(now)
                    emitted.append(self.events[-1])
                match = stage2_retrieve(self.artifacts.embedder, self.artifacts.index,
                                        self._stage1, mel, timestamp=now)
                payload = match.as_dict()
                painting_id = self._nearest_painting(mel)
                if painting_id is not None:
                    payload["painting_id"] = painting_id
                emitted.append(self._emit("match", payload))
            else:
                self._congruity = congruity_update(
                    self._congruity, self.artifacts.correspondence, self._canvas, mel)
                payload = dict(self._congruity.as_dict(), timestamp=now)
                emitted.append(self._emit("congruity", payload))
            return emitted

    # -- introspection ---------------------------------------------------------

    def status(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                **self.config.runtime_dict(),
                "warmed_up": self._buffer.full,
                "buffered": len(self._buffer),
                "total_pushed": self._buffer.total_pushed,
                "has_canvas": self._canvas is not None,
                "canvas_hash": self._canvas_hash,
                "survivors": len(self._stage1.survivors) if self._stage1 else None,
                "sequence": self._sequence,
                "time": round(self.clock.now(), 3),
            }

    def close(self) -> None:
        with self._lock:
            if self.closed:
                return
            self.closed = True
            for q in self._subscribers:
                try:
                    q.put_nowait(None)  # wake streaming readers
                except queue.Full:
                    pass


def start_session(config: SessionConfig, clock=None,
                  session_id: str | None = None) -> Session:
    """Load everything the config references and open a session."""
    return Session(load_session_artifacts(config), config, clock, session_id)


# ---------------------------------------------------------------------------
# Scripted replay
# ---------------------------------------------------------------------------


@dataclass
class ReplayResult:
    session: Session
    events: list[EngineEvent] = field(default_factory=list)

    def log_bytes(self) -> bytes:
        return event_log_bytes(self.events)


def _script_audio_block(cache: dict, base_dir: Path, action: dict) -> AudioClip:
    path = str(base_dir / action["path"])
    if path not in cache:
        cache[path] = decode_resample(Path(path).read_bytes(), SAMPLE_RATE)
    clip = cache[path]
    start = int(round(action.get("start", 0.0) * SAMPLE_RATE))
    length = int(round(action.get("duration", 1.0) * SAMPLE_RATE))
    seg = clip.samples[start : start + length]
    if len(seg) == 0:
        raise PreconditionError(
            f"script audio slice at {action.get('start', 0.0)}s is empty for {path}")
    return AudioClip(seg.copy(), SAMPLE_RATE)


def run_script(artifacts: SessionArtifacts, config: SessionConfig,
               script: list[dict], until: float, base_dir,
               session_id: str = "replay") -> ReplayResult:
    """Drive a session from a timed action script on a manual clock.

    Actions: {"t": s, "action": "push_audio", "path", "start", "duration"},
    {"t": s, "action": "push_image", "path"}, and
    {"t": s, "action": "set_params", "params": {...}}. Ticks fire at
    multiples of the (current) tick interval; actions at a tick time apply
    before that tick. Two runs of one script produce identical event logs.
    """
    base_dir = Path(base_dir)
    clock = ManualClock()
    session = Session(artifacts, config, clock=clock, session_id=session_id)
    actions = sorted(enumerate(script), key=lambda pair: (pair[1]["t"], pair[0]))
    audio_cache: dict = {}
    next_tick = session.config.tick_interval
    i = 0
    while True:
        action_t = actions[i][1]["t"] if i < len(actions) else None
        if action_t is not None and action_t <= min(next_tick, until):
            action = actions[i][1]
            clock.set(action_t)
            kind = action["action"]
            if kind == "push_audio":
                session.push_audio(_script_audio_block(audio_cache, base_dir, action))
            elif kind == "push_image":
                session.push_image((base_dir / action["path"]).read_bytes())
            elif kind == "set_params":
                session.set_params(action["params"])
            else:
                raise PreconditionError(f"unknown script action {kind!r}")
            i += 1
        elif next_tick <= until:
            clock.set(next_tick)
            session.tick()
            next_tick += session.config.tick_interval
        else:
            break
    return ReplayResult(session=session, events=list(session.events))


def load_script(path) -> list[dict]:
    script = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(script, list):
        raise PreconditionError("replay script must be a JSON list of actions")
    return script
