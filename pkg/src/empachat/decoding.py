"""Autoregressive decoding with Top-K sampling.

Each step re-runs the decoder over the whole prefix (no key/value cache; desk
scale keeps sequences short). Sampling zeroes out all but the k most probable
tokens and renormalizes; k=1 degenerates to argmax (ties to the lowest id) and
k >= vocab size degenerates to full sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import Seq2SeqModel
from .tokenizer import CLS_ID, SEP_ID, Vocab, decode, encode


@dataclass(frozen=True)
class GenerationConfig:
    k: int = 40
    temperature: float = 1.0
    max_len: int = 150
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-sample stream: same (seed, index) -> same draws."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def top_k_sample(
    probs: np.ndarray,
    k: int,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw token id(s) from the renormalized top-k of a distribution.

    Returns an int when size is None, else an int64 array of draws.
    """
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if probs.size == 0:
        raise ValueError("empty distribution")
    k = min(k, probs.size)
    # Stable sort keeps equal probabilities in ascending-id order, so k=1 is
    # exactly argmax with ties resolved to the lowest id.
    top = np.argsort(-probs, kind="stable")[:k]
    mass = probs[top]
    total = mass.sum()
    if total <= 0.0:
        raise ValueError("top-k probability mass is zero")
    mass = mass / total
    if size is None:
        return int(top[rng.choice(k, p=mass)])
    return top[rng.choice(k, p=mass, size=size)].astype(np.int64)


def _softmax_t(logits: np.ndarray, temperature: float) -> np.ndarray:
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    scaled = scaled - scaled.max()
    ex = np.exp(scaled)
    return ex / ex.sum()


def generate_ids(
    model: Seq2SeqModel,
    enc_ids,
    cfg: GenerationConfig,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Sample response token ids for one encoded utterance.

    Starts from the sequence-start token, stops at the separator or the length
    cap; the returned ids exclude both delimiters.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
    enc = np.asarray(enc_ids, dtype=np.int64).reshape(1, -1)
    limit = min(cfg.max_len, model.config.max_len - 1)
    out: list[int] = []
    with T.no_grad():
        enc_states = model.encode(enc, train_mode=False)
        dec = [CLS_ID]
        for _ in range(limit):
            logits = model.decode(np.asarray([dec], dtype=np.int64), enc_states, enc)
            probs = _softmax_t(logits.data[0, -1], cfg.temperature)
            next_id = top_k_sample(probs, cfg.k, rng)
            if next_id == SEP_ID:
                break
            dec.append(next_id)
            out.append(next_id)
    return out


def generate(
    utterance: str,
    model: Seq2SeqModel,
    vocab: Vocab,
    cfg: GenerationConfig,
    rng: np.random.Generator | None = None,
) -> str:
    """Encode an utterance, sample a response, return it as special-free text."""
    enc = encode(utterance, vocab, model.config.max_len)
    return decode(generate_ids(model, enc, cfg, rng), vocab)
