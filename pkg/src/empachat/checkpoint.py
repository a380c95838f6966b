"""Checkpoint directories: manifest.json + weights.bin (+ vocab.txt).

weights.bin holds every parameter as little-endian float32, concatenated in
manifest order. The manifest records path, shape, offset, and byte length for
each tensor, so a load can validate layout before touching the weights. In
memory everything is float64; the cast to float32 happens only at the disk
boundary.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ConfigMismatchError, ModelConfig, manifest_for_kind
from .tokenizer import Vocab, load_vocab, save_vocab

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
VOCAB_NAME = "vocab.txt"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_kind: str
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab: Vocab | None = None
    meta: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    expected = manifest_for_kind(ckpt.model_kind, ckpt.config)
    entries = []
    blobs = []
    offset = 0
    for path, shape in expected:
        if path not in ckpt.params:
            raise CheckpointError(f"cannot save: missing parameter {path}")
        arr = np.asarray(ckpt.params[path])
        if tuple(arr.shape) != tuple(shape):
            raise CheckpointError(
                f"cannot save: parameter {path} has shape {tuple(arr.shape)}, expected {tuple(shape)}"
            )
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({
            "path": path,
            "shape": list(shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    extra = set(ckpt.params) - {p for p, _ in expected}
    if extra:
        raise CheckpointError(f"cannot save: unexpected parameter {sorted(extra)[0]}")

    manifest = {
        "format_version": FORMAT_VERSION,
        "model_kind": ckpt.model_kind,
        "config": ckpt.config.to_dict(),
        "meta": ckpt.meta,
        "weights_file": WEIGHTS_NAME,
        "parameters": entries,
    }
    (out / WEIGHTS_NAME).write_bytes(b"".join(blobs))
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if ckpt.vocab is not None:
        save_vocab(ckpt.vocab, out / VOCAB_NAME)
    return out


def load_checkpoint(ckpt_dir: str | Path) -> Checkpoint:
    d = Path(ckpt_dir)
    manifest_path = d / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"not a checkpoint directory (no {MANIFEST_NAME}): {d}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version: {version!r}")
    kind = manifest.get("model_kind")
    try:
        config = ModelConfig.from_dict(manifest["config"])
        expected = manifest_for_kind(kind, config)
    except ConfigMismatchError as exc:
        raise CheckpointError(f"invalid checkpoint manifest: {exc}") from exc

    listed = manifest.get("parameters", [])
    if len(listed) != len(expected):
        raise CheckpointError(
            f"manifest lists {len(listed)} parameters, expected {len(expected)}"
        )
    blob = (d / manifest.get("weights_file", WEIGHTS_NAME)).read_bytes()
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry, (path, shape) in zip(listed, expected):
        if entry["path"] != path:
            raise CheckpointError(
                f"manifest parameter order mismatch: got {entry['path']!r}, expected {path!r}"
            )
        if tuple(entry["shape"]) != tuple(shape):
            raise CheckpointError(
                f"parameter {path} has shape {tuple(entry['shape'])}, expected {tuple(shape)}"
            )
        if entry["offset"] != offset:
            raise CheckpointError(f"parameter {path} at offset {entry['offset']}, expected {offset}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if entry["nbytes"] != nbytes:
            raise CheckpointError(f"parameter {path} spans {entry['nbytes']} bytes, expected {nbytes}")
        if offset + nbytes > len(blob):
            raise CheckpointError(f"weights file truncated at parameter {path}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[path] = arr.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(
            f"weights file has {len(blob)} bytes, manifest accounts for {offset}"
        )

    vocab = None
    if (d / VOCAB_NAME).exists():
        vocab = load_vocab(d / VOCAB_NAME)
    return Checkpoint(
        model_kind=kind,
        config=config,
        params=params,
        vocab=vocab,
        meta=manifest.get("meta", {}),
    )


def checkpoint_digest(ckpt_dir: str | Path) -> str:
    """SHA-256 of the raw weights file; the identity used in reports and /api/health."""
    blob = (Path(ckpt_dir) / WEIGHTS_NAME).read_bytes()
    return hashlib.sha256(blob).hexdigest()
