"""HTTP control surface and server-sent event stream for live sessions.

Endpoints:
    POST /session         start (or restart) a session; body = runtime params
    POST /session/params  partial runtime updates; echoes the applied config
    POST /session/image   raw PNG/BMP bytes -> canvas snapshot
    POST /session/audio   WAV bytes (16 kHz) -> rolling buffer
    GET  /session/status  session snapshot
    GET  /session/events  SSE stream of engine events (?since=<sequence>)

Built on the stdlib threading HTTP server; one wall-clock ticker thread per
session drives the pipeline.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .audio import SAMPLE_RATE, AudioClip, read_wav
from .engine import Session, SessionArtifacts, SessionConfig, WallClock
from .errors import BrushworkError, ConfigError, StateError

log = logging.getLogger("brushwork.server")

MAX_BODY_BYTES = 32 * 1024 * 1024
SSE_KEEPALIVE_SECONDS = 10.0


class EngineServer:
    """Owns at most one active session plus its ticker thread."""

    def __init__(self, artifacts: SessionArtifacts, base_config: SessionConfig,
                 host: str = "127.0.0.1", port: int = 0):
        self.artifacts = artifacts
        self.base_config = base_config
        self.session: Session | None = None
        self._lock = threading.Lock()
        self._ticker: threading.Thread | None = None
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._serve_thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._serve_thread = threading.Thread(target=self.httpd.serve_forever,
                                              name="brushwork-http", daemon=True)
        self._serve_thread.start()
        log.info("serving on %s", self.url)

    def wait(self) -> None:
        """Block until the serve thread exits (Ctrl-C interrupts)."""
        if self._serve_thread is not None:
            self._serve_thread.join()

    def stop(self) -> None:
        with self._lock:
            if self.session is not None:
                self.session.close()
                self.session = None
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._serve_thread is not None:
            self._serve_thread.join(timeout=5)

    def start_session(self, overrides: dict) -> Session:
        unknown = set(overrides) - set(SessionConfig.RUNTIME_FIELDS)
        if unknown:
            raise ConfigError(f"unknown session parameters: {sorted(unknown)}")
        config = replace(self.base_config, **overrides)
        config.validate()
        with self._lock:
            if self.session is not None:
                self.session.close()
            session = Session(self.artifacts, config, clock=WallClock(),
                              session_id=uuid.uuid4().hex)
            self.session = session
            self._ticker = threading.Thread(target=self._tick_loop, args=(session,),
                                            name="brushwork-ticker", daemon=True)
            self._ticker.start()
            return session

    def current_session(self) -> Session:
        session = self.session
        if session is None:
            raise StateError("no active session; POST /session first")
        return session

    def _tick_loop(self, session: Session) -> None:
        next_tick = time.monotonic() + session.config.tick_interval
        while not session.closed and self.session is session:
            now = time.monotonic()
            if now < next_tick:
                time.sleep(min(next_tick - now, 0.05))
                continue
            try:
                session.tick()
            except StateError:
                break
            except Exception:
                log.exception("tick failed")
            next_tick += session.config.tick_interval


def _make_handler(server: EngineServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        # -- plumbing -------------------------------------------------------

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

        def _cors(self) -> None:
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _send_json(self, code: int, payload: dict) -> None:
            body = json.dumps(payload, sort_keys=True).encode("utf-8")
            self.send_response(code)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            if length > MAX_BODY_BYTES:
                raise ValueError(f"request body exceeds {MAX_BODY_BYTES} bytes")
            return self.rfile.read(length)

        def _json_body(self) -> dict:
            raw = self._read_body()
            if not raw:
                return {}
            data = json.loads(raw.decode("utf-8"))
            if not isinstance(data, dict):
                raise ValueError("request body must be a JSON object")
            return data

        # -- routes -----------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_POST(self):
            path = urlparse(self.path).path
            try:
                if path == "/session":
                    session = server.start_session(self._json_body())
                    self._send_json(200, session.status())
                elif path == "/session/params":
                    applied = server.current_session().set_params(self._json_body())
                    self._send_json(200, applied)
                elif path == "/session/image":
                    ack = server.current_session().push_image(self._read_body())
                    self._send_json(200, ack)
                elif path == "/session/audio":
                    ack = self._push_audio(self._read_body())
                    self._send_json(200, ack)
                else:
                    self._send_json(404, {"error": f"unknown path {path}"})
            except StateError as exc:
                self._send_json(409, {"error": str(exc)})
            except (BrushworkError, ValueError) as exc:
                self._send_json(400, {"error": str(exc)})
            except Exception as exc:  # last-resort: keep the server alive
                log.exception("POST %s failed", path)
                self._send_json(500, {"error": str(exc)})

        def _push_audio(self, raw: bytes) -> dict:
            frames, rate = read_wav(raw)
            if rate != SAMPLE_RATE:
                raise ConfigError(
                    f"audio blocks must be {SAMPLE_RATE} Hz WAV, got {rate} Hz")
            mono = frames.mean(axis=1) if frames.shape[1] > 1 else frames[:, 0]
            clip = AudioClip(np.clip(mono, -1.0, 1.0), rate)
            return server.current_session().push_audio(clip)

        def do_GET(self):
            parsed = urlparse(self.path)
            try:
                if parsed.path == "/session/status":
                    self._send_json(200, server.current_session().status())
                elif parsed.path == "/session/events":
                    since = int(parse_qs(parsed.query).get("since", ["0"])[0])
                    self._stream_events(since)
                else:
                    self._send_json(404, {"error": f"unknown path {parsed.path}"})
            except StateError as exc:
                self._send_json(409, {"error": str(exc)})
            except (BrokenPipeError, ConnectionResetError):
                pass
            except Exception as exc:
                log.exception("GET %s failed", parsed.path)
                try:
                    self._send_json(500, {"error": str(exc)})
                except (BrokenPipeError, ConnectionResetError):
                    pass

        def _stream_events(self, since: int) -> None:
            session = server.current_session()
            backlog, q = session.subscribe(since)
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            # the stream has no length; EOF is the end-of-stream signal
            self.send_header("Connection", "close")
            self.close_connection = True
            self.end_headers()
            try:
                for event in backlog:
                    self._write_event(event)
                while not session.closed:
                    try:
                        event = q.get(timeout=SSE_KEEPALIVE_SECONDS)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    if event is None:  # close sentinel
                        break
                    self._write_event(event)
            finally:
                session.unsubscribe(q)

        def _write_event(self, event) -> None:
            self.wfile.write(f"data: {event.to_json()}\n\n".encode("utf-8"))
            self.wfile.flush()

    return Handler
