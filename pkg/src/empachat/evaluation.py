"""Evaluation metrics: token-level perplexity and corpus BLEU-4.

Perplexity is exp(total NLL / total non-pad target tokens), accumulated over
batches as a (sum, count) pair so batch size never changes the result.

BLEU is corpus-level with a single reference per candidate: clipped n-gram
precisions up to order 4, add-one smoothing on orders >= 2 only, brevity
penalty 1 when the candidate corpus is longer than the reference corpus and
exp(1 - r/c) otherwise, scaled by 100.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import Seq2SeqModel
from .tokenizer import CLS_ID, PAD_ID, SEP_ID

# Structural delimiters never count toward perplexity.
PPL_EXCLUDED_IDS = (PAD_ID, CLS_ID, SEP_ID)


@dataclass(frozen=True)
class EvalSummary:
    nll: float
    ppl: float
    tokens: int


@dataclass(frozen=True)
class EvalReport:
    """One benchmark row: how a variant scored on a test split."""
    variant: str
    ppl: float
    bleu: float
    bleu_surface: float
    samples: int
    config_digest: str


def sequence_nll(
    model: Seq2SeqModel,
    enc_ids: np.ndarray,
    dec_ids: np.ndarray,
    exclude_ids: tuple[int, ...] = (PAD_ID,),
) -> tuple[float, int]:
    """Total teacher-forced NLL and counted-token total for one batch.

    dec_ids is the full target sequence; inputs are dec_ids[:, :-1] and
    targets dec_ids[:, 1:]. Targets whose id is in exclude_ids contribute
    neither to the sum nor to the count.
    """
    dec_ids = np.asarray(dec_ids, dtype=np.int64)
    if dec_ids.shape[1] < 2:
        raise ValueError("decoder sequences need at least two tokens")
    dec_in = dec_ids[:, :-1]
    targets = dec_ids[:, 1:]
    keep = ~np.isin(targets, exclude_ids)
    count = int(keep.sum())
    if count == 0:
        return 0.0, 0
    with T.no_grad():
        logits = model.forward(enc_ids, dec_in, train_mode=False)
        log_probs = T.log_softmax(logits, axis=-1)
        picked = T.gather_last(log_probs, np.where(keep, targets, 0))
    total = -float((picked.data * keep).sum())
    return total, count


def perplexity(
    model: Seq2SeqModel,
    batches: list[tuple[np.ndarray, np.ndarray]],
    exclude_ids: tuple[int, ...] = PPL_EXCLUDED_IDS,
) -> EvalSummary:
    total_nll = 0.0
    total_tokens = 0
    for enc, dec in batches:
        nll, count = sequence_nll(model, enc, dec, exclude_ids)
        total_nll += nll
        total_tokens += count
    if total_tokens == 0:
        raise ValueError("perplexity needs at least one counted target token")
    mean = total_nll / total_tokens
    return EvalSummary(nll=mean, ppl=math.exp(mean), tokens=total_tokens)


def ngram_counts(tokens: list[str], order: int) -> Counter:
    return Counter(tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1))


def corpus_bleu(references: list[list[str]], candidates: list[list[str]], max_order: int = 4) -> float:
    """Corpus BLEU in [0, 100]; one reference per candidate."""
    if len(references) != len(candidates):
        raise ValueError(
            f"reference/candidate count mismatch: {len(references)} vs {len(candidates)}"
        )
    if not candidates:
        raise ValueError("BLEU needs at least one sentence pair")
    matches = [0] * max_order
    totals = [0] * max_order
    cand_len = 0
    ref_len = 0
    for ref, cand in zip(references, candidates):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            cand_counts = ngram_counts(cand, n)
            ref_counts = ngram_counts(ref, n)
            totals[n - 1] += sum(cand_counts.values())
            matches[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in cand_counts.items()
            )
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    geo_mean = math.exp(log_sum / max_order)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * bp * geo_mean


def bleu_from_texts(references: list[str], candidates: list[str], max_order: int = 4) -> float:
    return corpus_bleu(
        [r.split() for r in references],
        [c.split() for c in candidates],
        max_order,
    )
