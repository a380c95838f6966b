"""Masked-language-model pretraining for the encoder-only donor.

The donor is what warm-starting copies from, so this stage only needs to
produce an encoder whose parameters carry usable structure, on the same vocab
the seq2seq model will use. Masking follows the usual 80/10/10 recipe over
non-special positions; the prediction head is the tied token embedding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .model import ENCODER_KIND, EncoderModel, ModelConfig, init_parameters
from .optim import AdamState, adam_step, clip_global_norm
from .tokenizer import MASK_ID, PAD_ID, SPECIAL_TOKENS, Vocab

IGNORE_LABEL = -1


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 1000
    batch_size: int = 32
    learning_rate: float = 5e-4
    warmup_frac: float = 0.05
    clip_norm: float = 1.0
    mask_rate: float = 0.15
    seed: int = 0
    log_every: int = 50


def mask_tokens(
    ids: np.ndarray,
    first_regular_id: int,
    vocab_size: int,
    mask_id: int,
    rng: np.random.Generator,
    mask_rate: float = 0.15,
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt a padded id batch for MLM.

    Only non-special positions (id >= first_regular_id) are candidates. Of the
    selected positions, 80% become the mask token, 10% a random regular token,
    10% stay unchanged. Labels hold the original id at selected positions and
    IGNORE_LABEL elsewhere. Every row with at least one candidate gets at
    least one selected position.
    """
    ids = np.asarray(ids, dtype=np.int64)
    masked = ids.copy()
    labels = np.full(ids.shape, IGNORE_LABEL, dtype=np.int64)
    candidates = ids >= first_regular_id
    selected = candidates & (rng.random(ids.shape) < mask_rate)
    for r in range(ids.shape[0]):
        if candidates[r].any() and not selected[r].any():
            pool = np.flatnonzero(candidates[r])
            selected[r, rng.choice(pool)] = True
    labels[selected] = ids[selected]
    action = rng.random(ids.shape)
    to_mask = selected & (action < 0.8)
    to_random = selected & (action >= 0.8) & (action < 0.9)
    masked[to_mask] = mask_id
    n_random = int(to_random.sum())
    if n_random:
        masked[to_random] = rng.integers(first_regular_id, vocab_size, size=n_random)
    return masked, labels


def mlm_loss(model: EncoderModel, ids: np.ndarray, labels: np.ndarray,
             train_mode: bool = True, rng=None) -> tuple[T.Tensor, int]:
    """Mean NLL over labeled positions; count of labeled positions."""
    labels = np.asarray(labels, dtype=np.int64)
    keep = labels != IGNORE_LABEL
    count = int(keep.sum())
    if count == 0:
        raise ValueError("MLM batch has no labeled positions")
    logits = model.mlm_logits(ids, train_mode=train_mode, rng=rng)
    log_probs = T.log_softmax(logits, axis=-1)
    safe = np.where(keep, labels, 0)
    picked = T.gather_last(log_probs, safe)
    masked = T.mul(picked, T.Tensor(keep.astype(np.float64)))
    return T.scale(T.tensor_sum(masked), -1.0 / count), count


def _pad_batch(rows: list[list[int]], pad_id: int = PAD_ID) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), pad_id, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def warmup_lr(base_lr: float, step: int, total_steps: int, warmup_frac: float) -> float:
    """Linear ramp over the first warmup_frac of steps, then constant."""
    warmup_steps = max(1, int(round(total_steps * warmup_frac)))
    if step <= warmup_steps:
        return base_lr * step / warmup_steps
    return base_lr


def pretrain_encoder(
    corpus: list[list[int]],
    vocab: Vocab,
    model_config: ModelConfig,
    cfg: PretrainConfig,
    log_path: str | Path | None = None,
) -> tuple[dict[str, T.Tensor], list[dict]]:
    """Run MLM pretraining; returns the trained parameters and the loss log.

    Raises RuntimeError on a non-finite loss instead of training through it.
    """
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = init_parameters(ENCODER_KIND, model_config, seed=cfg.seed)
    model = EncoderModel(model_config, params)
    state = AdamState(learning_rate=cfg.learning_rate)
    first_regular = len(SPECIAL_TOKENS)
    log_rows: list[dict] = []
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, len(corpus), size=cfg.batch_size)
        batch = _pad_batch([corpus[i] for i in idx])
        masked, labels = mask_tokens(
            batch, first_regular, model_config.vocab_size, MASK_ID, rng, cfg.mask_rate
        )
        if not (labels != IGNORE_LABEL).any():
            continue
        T.zero_all_grads(params)
        loss, _ = mlm_loss(model, masked, labels, train_mode=True, rng=rng)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise RuntimeError(f"non-finite pretraining loss at step {step}")
        loss.backward()
        clip_global_norm(params, cfg.clip_norm)
        state.learning_rate = warmup_lr(cfg.learning_rate, step, cfg.steps, cfg.warmup_frac)
        adam_step(params, state)
        if step % cfg.log_every == 0 or step == cfg.steps or step == 1:
            log_rows.append({"step": step, "loss": loss_val, "lr": state.learning_rate})
    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "loss", "lr"])
            writer.writeheader()
            writer.writerows(log_rows)
    return params, log_rows
