"""Seq2seq fine-tuning on dialogue pairs.

Pairs are encoded once, grouped into length-sorted batches (less padding), and
the batch order is reshuffled every epoch from the run seed. Validation runs
after every epoch; the returned parameters are the ones with the best
validation loss, not the last ones.

Variants:
  cold        randomly initialized seq2seq model
  warm        encoder and decoder warm-started from the donor
  emoprepend  warm plus an emotion-group token prepended to the utterance
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import DialogueSample, emo_prepend
from .evaluation import perplexity
from .model import ModelConfig, Seq2SeqModel
from .optim import AdamState, adam_step, clip_global_norm
from .pretrain import warmup_lr
from .tokenizer import PAD_ID, Vocab, encode

VARIANTS = ("cold", "warm", "emoprepend")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-4
    warmup_frac: float = 0.05
    clip_norm: float = 1.0
    seed: int = 0
    variant: str = "warm"
    log_every: int = 20

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")


def encode_pair(
    sample: DialogueSample,
    vocab: Vocab,
    max_len: int,
    variant: str = "warm",
    predicted_group: str | None = None,
    at_inference: bool = False,
) -> tuple[list[int], list[int]]:
    if variant == "emoprepend":
        src_text = emo_prepend(sample, predicted_group, at_inference)
    else:
        src_text = sample.utterance
    return encode(src_text, vocab, max_len), encode(sample.response, vocab, max_len)


def pad_rows(rows: list[list[int]], pad_id: int = PAD_ID) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), pad_id, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def make_batches(
    pairs: list[tuple[list[int], list[int]]], batch_size: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Length-sorted fixed-size batches (the last one may be short)."""
    if not pairs:
        raise ValueError("no pairs to batch")
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i][0]), len(pairs[i][1]), i))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        batches.append((pad_rows([p[0] for p in chunk]), pad_rows([p[1] for p in chunk])))
    return batches


def seq2seq_loss(
    model: Seq2SeqModel,
    enc_ids: np.ndarray,
    dec_ids: np.ndarray,
    train_mode: bool = True,
    rng=None,
) -> tuple[T.Tensor, int]:
    """Mean teacher-forced NLL over non-pad target tokens."""
    dec_ids = np.asarray(dec_ids, dtype=np.int64)
    if dec_ids.shape[1] < 2:
        raise ValueError("decoder sequences need at least two tokens")
    dec_in = dec_ids[:, :-1]
    targets = dec_ids[:, 1:]
    keep = targets != PAD_ID
    count = int(keep.sum())
    if count == 0:
        raise ValueError("batch has no non-pad target tokens")
    logits = model.forward(enc_ids, dec_in, train_mode=train_mode, rng=rng)
    log_probs = T.log_softmax(logits, axis=-1)
    picked = T.gather_last(log_probs, np.where(keep, targets, 0))
    masked = T.mul(picked, T.Tensor(keep.astype(np.float64)))
    return T.scale(T.tensor_sum(masked), -1.0 / count), count


def finetune(
    train_pairs: list[tuple[list[int], list[int]]],
    val_pairs: list[tuple[list[int], list[int]]],
    model_config: ModelConfig,
    cfg: TrainConfig,
    params: dict[str, T.Tensor],
    log_path: str | Path | None = None,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Train in place; return the best-validation parameter snapshot and history.

    History rows carry epoch, step, split ("train"/"val"), loss, ppl.
    Raises RuntimeError on a non-finite training loss.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = Seq2SeqModel(model_config, params)
    state = AdamState(learning_rate=cfg.learning_rate)
    train_batches = make_batches(train_pairs, cfg.batch_size)
    val_batches = make_batches(val_pairs, cfg.batch_size) if val_pairs else []
    total_steps = cfg.epochs * len(train_batches)
    history: list[dict] = []
    best_loss = math.inf
    best_params = {k: p.data.copy() for k, p in params.items()}
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_batches))
        for bi in order:
            enc, dec = train_batches[bi]
            step += 1
            T.zero_all_grads(params)
            loss, _ = seq2seq_loss(model, enc, dec, train_mode=True, rng=rng)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise RuntimeError(f"non-finite training loss at step {step}")
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            state.learning_rate = warmup_lr(cfg.learning_rate, step, total_steps, cfg.warmup_frac)
            adam_step(params, state)
            if step % cfg.log_every == 0 or step == 1:
                history.append({
                    "epoch": epoch, "step": step, "split": "train",
                    "loss": loss_val, "ppl": math.exp(min(loss_val, 700.0)),
                })
        if val_batches:
            summary = perplexity(model, val_batches)
            history.append({
                "epoch": epoch, "step": step, "split": "val",
                "loss": summary.nll, "ppl": summary.ppl,
            })
            if summary.nll < best_loss:
                best_loss = summary.nll
                best_params = {k: p.data.copy() for k, p in params.items()}
        else:
            best_params = {k: p.data.copy() for k, p in params.items()}
    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "step", "split", "loss", "ppl"])
            writer.writeheader()
            writer.writerows(history)
    return best_params, history
