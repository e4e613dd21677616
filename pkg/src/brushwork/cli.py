"""Command-line driver: one subcommand per pipeline stage.

Machine-readable results are line-delimited JSON on stdout; diagnostics go
to stderr. Every subcommand takes --seed and is reproducible given it.
BRUSHWORK_LOG (error|info|debug) controls log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import toy
from .audio import CLIP_SAMPLES, SAMPLE_RATE, AudioClip, decode_resample, mel_patch
from .correspond import (
    TrainConfig,
    evaluate_pairs,
    load_correspondence_model,
    score_pair,
    train_correspondence,
)
from .embedder import EmbedderConfig, class_distance_report, load_embedder, train_embedder
from .engine import SessionConfig, load_script, load_session_artifacts, run_script
from .errors import BrushworkError, PreconditionError
from .image import ingest_image
from .index import build_index, load_index, save_index, save_index_manifest
from .manifest import (
    Library,
    LibraryManifest,
    PaintingEntry,
    TrackEntry,
    holdout_split,
    load_labels,
    load_manifest,
    save_manifest,
)
from .nn.rng import spawn_rng
from .pipeline import stage1_filter, stage2_retrieve
from .server import EngineServer
from .toy import ToySpec, make_labeled_clips

log = logging.getLogger("brushwork.cli")

IMAGE_SUFFIXES = (".png", ".bmp")


def emit(payload: dict) -> None:
    """One machine-readable result line on stdout."""
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    sys.stdout.flush()


def diag(message: str) -> None:
    sys.stderr.write(message + "\n")


def _configure_logging() -> None:
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    raw = os.environ.get("BRUSHWORK_LOG", "error").lower()
    if raw not in levels:
        diag(f"warning: BRUSHWORK_LOG={raw!r} not in {sorted(levels)}; using error")
    logging.basicConfig(level=levels.get(raw, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_labels_for(manifest_path: str, explicit: str | None):
    """labels.json beside the manifest is picked up automatically."""
    if explicit:
        return load_labels(explicit)
    candidate = Path(manifest_path).parent / "labels.json"
    return load_labels(candidate) if candidate.is_file() else None


def _clip_from_wav(path: str) -> AudioClip:
    """Decode a WAV to 16 kHz mono and keep the final 4 s (live-buffer rule)."""
    clip = decode_resample(Path(path).read_bytes(), SAMPLE_RATE)
    if len(clip.samples) == 0:
        raise PreconditionError(f"{path} decodes to zero samples")
    return AudioClip(clip.samples[-CLIP_SAMPLES:], SAMPLE_RATE)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_gen_toy(args) -> int:
    spec = ToySpec(n_tracks=args.tracks, n_classes=args.classes, seed=args.seed,
                   track_duration=args.duration)
    manifest_path, labels_path = toy.generate(spec, args.out)
    emit({"command": "gen-toy", "manifest": str(manifest_path),
          "labels": str(labels_path), "tracks": args.tracks,
          "classes": args.classes, "seed": args.seed})
    return 0


def _cmd_ingest(args) -> int:
    root = Path(args.folder)
    if not root.is_dir():
        raise PreconditionError(f"{args.folder} is not a directory")
    out = Path(args.out)
    wavs: dict[str, Path] = {}
    images: dict[str, Path] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        suffix = path.suffix.lower()
        bucket = wavs if suffix == ".wav" else images if suffix in IMAGE_SUFFIXES else None
        if bucket is None:
            continue
        if path.stem in bucket:
            diag(f"warning: duplicate stem {path.stem!r}, keeping {bucket[path.stem]}")
            continue
        bucket[path.stem] = path

    def rel(p: Path) -> str:
        return os.path.relpath(p, out.parent)

    tracks = [TrackEntry(track_id=stem, audio_path=rel(wavs[stem]),
                         artwork_path=rel(images[stem]), album_id=stem)
              for stem in sorted(set(wavs) & set(images))]
    paintings = [PaintingEntry(painting_id=stem, image_path=rel(images[stem]))
                 for stem in sorted(set(images) - set(wavs))]
    for stem in sorted(set(wavs) - set(images)):
        diag(f"warning: {wavs[stem]} has no matching artwork image; skipped")
    if not tracks:
        raise PreconditionError(f"no (wav, image) stem pairs found under {root}")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(LibraryManifest(tracks=tracks, paintings=paintings), out)
    emit({"command": "ingest", "manifest": str(out),
          "tracks": len(tracks), "paintings": len(paintings)})
    return 0


def _cmd_train_correspondence(args) -> int:
    library = Library(load_manifest(args.manifest))
    labels = _load_labels_for(args.manifest, args.labels)
    config = TrainConfig(steps=args.steps, lr=args.lr, batch_size=args.batch,
                         seed=args.seed, holdout_fraction=args.holdout,
                         log_path=args.log, checkpoint_path=args.out)
    result = train_correspondence(
        library, config, labels.track_classes if labels else None)
    # per-step losses go to --log; stdout carries eval records and the summary
    for entry in result.metrics:
        if "holdout_accuracy" in entry or "done" in entry:
            emit(entry)
    emit({"command": "train-correspondence", "checkpoint": args.out,
          "train_tracks": len(result.train_tracks),
          "holdout_tracks": len(result.holdout_tracks)})
    return 0


def _cmd_train_embedder(args) -> int:
    clips, class_names = make_labeled_clips(args.clips_per_class, seed=args.seed)
    config = EmbedderConfig(steps=args.steps, lr=args.lr, batch_size=args.batch,
                            seed=args.seed, log_path=args.log,
                            checkpoint_path=args.out)
    result = train_embedder(clips, config)
    for entry in result.metrics:
        if "holdout_accuracy" in entry or "done" in entry:
            emit(entry)
    mels = np.stack([c.audio.values for c in clips])
    class_ids = np.array([c.class_id for c in clips])
    report = class_distance_report(result.model, mels, class_ids)
    emit({"command": "train-embedder", "checkpoint": args.out,
          "classes": class_names, **{k: round(float(v), 4) for k, v in report.items()}})
    return 0


def _cmd_build_index(args) -> int:
    library = Library(load_manifest(args.manifest))
    embedder = load_embedder(args.embedder)
    index = build_index(((tid, library.audio(tid)) for tid in library.track_ids),
                        embedder, batch_size=args.batch)
    save_index(index, args.out)
    entries = {}
    for tid in library.track_ids:
        chunks = sum(1 for r in index.records if r.track_id == tid)
        entries[tid] = {"source": library.manifest.track(tid).audio_path,
                        "duration": round(library.audio(tid).duration, 3),
                        "chunks": chunks}
    save_index_manifest(str(args.out) + ".json", entries)
    for warning in index.build_report:
        diag(f"warning: skipped {warning['track_id']}: {warning['reason']}")
    emit({"command": "build-index", "index": str(args.out),
          "chunks": len(index), "tracks": len(library.track_ids),
          "skipped": len(index.build_report)})
    return 0


def _cmd_score(args) -> int:
    model = load_correspondence_model(args.model)
    painting = ingest_image(Path(args.painting).read_bytes())
    mel = mel_patch(_clip_from_wav(args.clip))
    emit({"command": "score", "painting": args.painting, "clip": args.clip,
          "score": round(score_pair(model, painting, mel), 6)})
    return 0


def _cmd_retrieve(args) -> int:
    model = load_correspondence_model(args.model)
    embedder = load_embedder(args.embedder)
    index = load_index(args.index)
    library = Library(load_manifest(args.manifest))
    painting = ingest_image(Path(args.painting).read_bytes())
    brush = mel_patch(_clip_from_wav(args.brush))
    stage1 = stage1_filter(model, painting, index, library.chunk_mel,
                           fraction=args.fraction,
                           painting_id=Path(args.painting).stem)
    match = stage2_retrieve(embedder, index, stage1, brush)
    emit(match.as_dict())
    return 0


def _cmd_eval(args) -> int:
    model = load_correspondence_model(args.model)
    library = Library(load_manifest(args.manifest))
    labels = _load_labels_for(args.manifest, args.labels)
    classes = labels.track_classes if labels else None
    _, holdout_ids = holdout_split(library.track_ids, args.holdout, classes)
    rng = spawn_rng(args.seed, 2)  # same stream id the trainer uses for eval
    report = evaluate_pairs(model, library, holdout_ids, args.pairs, rng, classes)
    emit({"command": "eval", "holdout_tracks": len(holdout_ids),
          **{k: (round(v, 4) if isinstance(v, float) else v)
             for k, v in report.items()}})
    return 0


def _cmd_serve(args) -> int:
    config = SessionConfig(correspondence_path=args.model, embedder_path=args.embedder,
                           index_path=args.index, manifest_path=args.manifest,
                           mode=args.mode, fraction=args.fraction)
    config.validate()
    artifacts = load_session_artifacts(config)
    if args.script:
        # offline: replay a scripted session on the virtual clock, print events
        script = load_script(args.script)
        result = run_script(artifacts, config, script, until=args.until,
                            base_dir=Path(args.script).parent)
        sys.stdout.write(result.log_bytes().decode("utf-8"))
        sys.stdout.flush()
        return 0
    server = EngineServer(artifacts, config, host=args.host, port=args.port)
    server.start()
    emit({"command": "serve", "url": server.url, "mode": args.mode})
    try:
        server.wait()
    except KeyboardInterrupt:
        diag("shutting down")
        server.stop()
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_seed(p: argparse.ArgumentParser, default: int = 0) -> None:
    p.add_argument("--seed", type=int, default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brushwork",
        description="Cross-modal painting-to-music retrieval pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="generate a deterministic synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--tracks", type=int, default=20)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--duration", type=float, default=12.0)
    _add_seed(p, 7)
    p.set_defaults(func=_cmd_gen_toy)

    p = sub.add_parser("ingest", help="scan a folder of wav+image stems into a manifest")
    p.add_argument("folder")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("train-correspondence",
                       help="train the painting/music correspondence scorer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.add_argument("--log", help="ndjson file for per-step loss records")
    p.add_argument("--steps", type=int, default=450)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--holdout", type=float, default=0.1)
    _add_seed(p)
    p.set_defaults(func=_cmd_train_correspondence)

    p = sub.add_parser("train-embedder",
                       help="train the brush-audio embedder on synthetic clip classes")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="ndjson file for per-step loss records")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--clips-per-class", type=int, default=100)
    _add_seed(p)
    p.set_defaults(func=_cmd_train_embedder)

    p = sub.add_parser("build-index", help="embed 4 s chunks of every track")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=64)
    _add_seed(p)
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("score", help="correspondence score for one painting + one clip")
    p.add_argument("--model", required=True)
    p.add_argument("--painting", required=True)
    p.add_argument("--clip", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("retrieve", help="two-stage retrieval for one painting + brush block")
    p.add_argument("--index", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--painting", required=True)
    p.add_argument("--brush", required=True)
    p.add_argument("--fraction", type=float, default=0.01)
    _add_seed(p)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", help="held-out pair accuracy of a trained scorer")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels")
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--pairs", type=int, default=128)
    _add_seed(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the live engine behind HTTP/SSE")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--mode", default="scenario1_crossfeed")
    p.add_argument("--fraction", type=float, default=0.01)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--script", help="replay a scripted session instead of serving")
    p.add_argument("--until", type=float, default=60.0,
                   help="virtual seconds to replay when --script is given")
    _add_seed(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrushworkError as exc:
        diag(f"error: {exc}")
        return 1
    except OSError as exc:
        diag(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
