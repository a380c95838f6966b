"""HTTP chat service over a frozen model snapshot.

Endpoints:
  POST /api/chat    {"utterance": str, "session_id"?: str}
                    -> {"response", "emotion", "model_variant", "elapsed_ms",
                        "session_id"?}
  GET  /api/health  -> {"status", "model_variant", "checkpoint_digest",
                        "vocab_size"}
Static files for the UI are served from an optional directory; every error
body is JSON {"error": string}.

The service never mutates model parameters: requests read one immutable
Snapshot, and a checkpoint hot-swap replaces that snapshot atomically.
Per-request sampling streams derive from (service seed, request counter), so a
transcript can be replayed from its log.
"""

from __future__ import annotations

import json
import mimetypes
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_digest, load_checkpoint
from .classifier import ClassifierModel, predict_groups
from .data import GROUPS
from .decoding import GenerationConfig, generate_ids, sample_rng
from .model import CLASSIFIER_KIND, SEQ2SEQ_KIND, Seq2SeqModel, tensors_from_arrays
from .tokenizer import Vocab, decode, desegment, encode

_MAX_BODY = 1 << 20
_EMPTY_RETRIES = 4


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass(frozen=True)
class ServerConfig:
    checkpoint: str | None = None
    classifier: str | None = None
    k: int = 40
    temperature: float = 1.0
    port: int = 8080
    host: str = "127.0.0.1"
    static_dir: str | None = None
    segmenter_command: str | None = None
    seed: int = 0
    max_len: int = 150

    @classmethod
    def from_dict(cls, d: dict) -> "ServerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown server config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Snapshot:
    model: Seq2SeqModel
    vocab: Vocab
    variant: str
    digest: str
    gcfg: GenerationConfig
    classifier: ClassifierModel | None = None


def load_snapshot(cfg: ServerConfig) -> Snapshot:
    if not cfg.checkpoint:
        raise ServiceError(503, "no checkpoint configured")
    ckpt = load_checkpoint(cfg.checkpoint)
    if ckpt.model_kind != SEQ2SEQ_KIND:
        raise ValueError(f"serving needs a {SEQ2SEQ_KIND} checkpoint, got {ckpt.model_kind}")
    if ckpt.vocab is None:
        raise ValueError(f"checkpoint {cfg.checkpoint} has no vocab.txt")
    model = Seq2SeqModel(ckpt.config, tensors_from_arrays(ckpt.params))
    variant = ckpt.meta.get("variant", "warm")
    classifier = None
    if cfg.classifier:
        clf = load_checkpoint(cfg.classifier)
        if clf.model_kind != CLASSIFIER_KIND:
            raise ValueError(
                f"classifier path holds a {clf.model_kind} checkpoint, expected {CLASSIFIER_KIND}"
            )
        classifier = ClassifierModel(clf.config, tensors_from_arrays(clf.params))
    if variant == "emoprepend" and classifier is None:
        raise ValueError("the emoprepend variant needs a classifier checkpoint to serve")
    gcfg = GenerationConfig(k=cfg.k, temperature=cfg.temperature,
                            max_len=cfg.max_len, seed=cfg.seed)
    return Snapshot(
        model=model, vocab=ckpt.vocab, variant=variant,
        digest=checkpoint_digest(cfg.checkpoint), gcfg=gcfg, classifier=classifier,
    )


class ChatService:
    def __init__(self, config: ServerConfig, snapshot: Snapshot | None = None):
        self.config = config
        self._snapshot = snapshot
        self._counter = 0
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config: ServerConfig) -> "ChatService":
        return cls(config, load_snapshot(config))

    def swap_checkpoint(self, checkpoint: str, classifier: str | None = None) -> None:
        """Replace the serving snapshot atomically; in-flight requests finish on the old one."""
        cfg = replace(self.config, checkpoint=checkpoint,
                      classifier=classifier or self.config.classifier)
        self._snapshot = load_snapshot(cfg)

    def _next_request_index(self) -> int:
        with self._lock:
            self._counter += 1
            return self._counter

    def _segment(self, text: str) -> str:
        cmd = self.config.segmenter_command
        if not cmd:
            return text
        try:
            proc = subprocess.run(
                shlex.split(cmd), input=text, capture_output=True,
                text=True, timeout=30, check=True,
            )
        except (OSError, subprocess.SubprocessError) as exc:
            raise ServiceError(500, f"segmenter command failed: {exc}") from exc
        return proc.stdout.strip()

    def health(self) -> dict:
        snap = self._snapshot
        if snap is None:
            return {"status": "loading"}
        return {
            "status": "ok",
            "model_variant": snap.variant,
            "checkpoint_digest": snap.digest,
            "vocab_size": len(snap.vocab),
        }

    def handle_chat(self, payload) -> dict:
        start = time.perf_counter()
        snap = self._snapshot
        if snap is None:
            raise ServiceError(503, "model not loaded")
        if not isinstance(payload, dict):
            raise ServiceError(400, "request body must be a JSON object")
        utterance = payload.get("utterance")
        if not isinstance(utterance, str) or not utterance.strip():
            raise ServiceError(400, "utterance must be a non-empty string")
        session_id = payload.get("session_id")
        if session_id is not None and not isinstance(session_id, str):
            raise ServiceError(400, "session_id must be a string when present")

        segmented = self._segment(utterance.strip())
        emotion = None
        if snap.classifier is not None:
            ids = encode(segmented, snap.vocab, snap.classifier.config.max_len)
            idx = predict_groups(snap.classifier, np.asarray([ids], dtype=np.int64))
            emotion = GROUPS[int(idx[0])]
        src_text = segmented
        if snap.variant == "emoprepend":
            src_text = f"<{emotion}> {segmented}"

        enc = encode(src_text, snap.vocab, snap.model.config.max_len)
        rng = sample_rng(snap.gcfg.seed, self._next_request_index())
        surface = ""
        for _ in range(_EMPTY_RETRIES):
            ids = generate_ids(snap.model, enc, snap.gcfg, rng=rng)
            surface = desegment(decode(ids, snap.vocab)).strip()
            if surface:
                break
        if not surface:
            raise ServiceError(500, "model produced an empty response")

        elapsed_ms = int(round((time.perf_counter() - start) * 1000))
        out = {
            "response": surface,
            "emotion": emotion,
            "model_variant": snap.variant,
            "elapsed_ms": elapsed_ms,
        }
        if session_id is not None:
            out["session_id"] = session_id
        return out


def _make_handler(service: ChatService, static_dir: str | None):
    static_root = Path(static_dir).resolve() if static_dir else None

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, obj: dict) -> None:
            body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path.rstrip("/") != "/api/chat":
                self._send_json(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                if length > _MAX_BODY:
                    # drain so the client can finish sending before the reply
                    remaining = length
                    while remaining > 0:
                        chunk = self.rfile.read(min(remaining, 65536))
                        if not chunk:
                            break
                        remaining -= len(chunk)
                    self.close_connection = True
                    raise ServiceError(413, "request body too large")
                raw = self.rfile.read(length)
                try:
                    payload = json.loads(raw.decode("utf-8")) if raw else None
                except (UnicodeDecodeError, json.JSONDecodeError):
                    raise ServiceError(400, "request body is not valid JSON")
                self._send_json(200, service.handle_chat(payload))
            except ServiceError as exc:
                self._send_json(exc.status, {"error": exc.message})
            except Exception as exc:  # noqa: BLE001 - boundary: report, don't crash the worker
                self._send_json(500, {"error": f"internal error: {exc}"})

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path.rstrip("/") == "/api/health":
                self._send_json(200, service.health())
                return
            if static_root is None:
                self._send_json(404, {"error": "not found"})
                return
            rel = path.lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if static_root not in target.parents and target != static_root:
                self._send_json(404, {"error": "not found"})
                return
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                self._send_json(404, {"error": "not found"})
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


def make_server(service: ChatService, host: str | None = None, port: int | None = None) -> ThreadingHTTPServer:
    cfg = service.config
    handler = _make_handler(service, cfg.static_dir)
    return ThreadingHTTPServer(
        (host if host is not None else cfg.host, port if port is not None else cfg.port),
        handler,
    )


def serve(config: ServerConfig) -> None:
    service = ChatService.from_config(config)
    server = make_server(service)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port} (variant={service.health().get('model_variant')})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
