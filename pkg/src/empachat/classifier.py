"""Six-way emotion-group classifier over the encoder's first-position state.

Used at inference time to pick the emotion token the emoprepend variant
attaches to an incoming utterance (training and validation use gold labels,
so the classifier only gates test-time and serving behavior).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import GROUPS
from .model import (
    CLASSIFIER_KIND,
    ClassifierModel,
    ModelConfig,
    encoder_manifest,
    init_parameters,
)
from .optim import AdamState, adam_step, clip_global_norm
from .pretrain import warmup_lr
from .train import pad_rows

GROUP_INDEX = {g: i for i, g in enumerate(GROUPS)}


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-4
    warmup_frac: float = 0.05
    clip_norm: float = 1.0
    seed: int = 0
    log_every: int = 20


def classifier_from_donor(
    donor_params: dict[str, np.ndarray], cfg: ModelConfig, seed: int
) -> dict[str, T.Tensor]:
    """Fresh classifier whose encoder weights are copied from the donor."""
    params = init_parameters(CLASSIFIER_KIND, cfg, seed=seed)
    for path, _ in encoder_manifest(cfg):
        if path not in donor_params:
            raise ValueError(f"donor checkpoint missing parameter: {path}")
        params[path] = T.Tensor(donor_params[path].copy(), requires_grad=True)
    return params


def classifier_loss(
    model: ClassifierModel, ids: np.ndarray, labels: np.ndarray,
    train_mode: bool = True, rng=None,
) -> T.Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    logits = model.logits(ids, train_mode=train_mode, rng=rng)
    log_probs = T.log_softmax(logits, axis=-1)
    picked = T.gather_last(log_probs, labels)
    return T.scale(T.tensor_sum(picked), -1.0 / labels.shape[0])


def predict_groups(model: ClassifierModel, ids: np.ndarray) -> np.ndarray:
    """Argmax group index per row; ties resolve to the lowest index."""
    with T.no_grad():
        logits = model.logits(ids, train_mode=False)
    return np.argmax(logits.data, axis=-1)


def accuracy(model: ClassifierModel, batches: list[tuple[np.ndarray, np.ndarray]]) -> float:
    correct = 0
    total = 0
    for ids, labels in batches:
        pred = predict_groups(model, ids)
        correct += int((pred == labels).sum())
        total += labels.shape[0]
    if total == 0:
        raise ValueError("accuracy needs at least one example")
    return correct / total


def _batches(
    rows: list[tuple[list[int], int]], batch_size: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    order = sorted(range(len(rows)), key=lambda i: (len(rows[i][0]), i))
    out = []
    for start in range(0, len(order), batch_size):
        chunk = [rows[i] for i in order[start : start + batch_size]]
        out.append((
            pad_rows([r[0] for r in chunk]),
            np.asarray([r[1] for r in chunk], dtype=np.int64),
        ))
    return out


def train_classifier(
    train_rows: list[tuple[list[int], int]],
    val_rows: list[tuple[list[int], int]],
    model_config: ModelConfig,
    cfg: ClassifierConfig,
    params: dict[str, T.Tensor] | None = None,
    log_path: str | Path | None = None,
) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Train on (token ids, group index) rows; keep the best-val-accuracy snapshot."""
    if params is None:
        params = init_parameters(CLASSIFIER_KIND, model_config, seed=cfg.seed)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = ClassifierModel(model_config, params)
    state = AdamState(learning_rate=cfg.learning_rate)
    train_batches = _batches(train_rows, cfg.batch_size)
    val_batches = _batches(val_rows, cfg.batch_size) if val_rows else []
    total_steps = cfg.epochs * len(train_batches)
    history: list[dict] = []
    best_acc = -math.inf
    best_params = {k: p.data.copy() for k, p in params.items()}
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_batches))
        for bi in order:
            ids, labels = train_batches[bi]
            step += 1
            T.zero_all_grads(params)
            loss = classifier_loss(model, ids, labels, train_mode=True, rng=rng)
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise RuntimeError(f"non-finite classifier loss at step {step}")
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            state.learning_rate = warmup_lr(cfg.learning_rate, step, total_steps, cfg.warmup_frac)
            adam_step(params, state)
            if step % cfg.log_every == 0 or step == 1:
                history.append({"epoch": epoch, "step": step, "split": "train",
                                "loss": loss_val, "accuracy": ""})
        if val_batches:
            acc = accuracy(model, val_batches)
            history.append({"epoch": epoch, "step": step, "split": "val",
                            "loss": "", "accuracy": acc})
            if acc > best_acc:
                best_acc = acc
                best_params = {k: p.data.copy() for k, p in params.items()}
        else:
            best_params = {k: p.data.copy() for k, p in params.items()}
    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "step", "split", "loss", "accuracy"])
            writer.writeheader()
            writer.writerows(history)
    return best_params, history
