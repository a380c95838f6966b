"""End-to-end benchmark: cold vs warm vs warm+emotion on one dataset.

Pipeline per run directory:
  1. deterministic 90/5/5 split (seed 42), manifests written out
  2. vocab built from the training split only
  3. MLM donor pretrained on training utterances and responses
  4. emotion classifier trained from the donor (gold labels train/val)
  5. each variant fine-tuned per seed, evaluated on the test split
     (the emoprepend variant sees classifier predictions at test time)
  6. report.csv / report.md (one row per variant) plus report.json with
     per-run numbers; generation transcripts as utterance<TAB>response lines

Every stage is seeded, so rerunning with the same inputs reproduces the
reports byte for byte. A variant that fails to train is recorded as an error
row and marks the report incomplete; the other variants still run.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, checkpoint_digest, save_checkpoint
from .classifier import (
    GROUP_INDEX,
    ClassifierConfig,
    ClassifierModel,
    accuracy as classifier_accuracy,
    classifier_from_donor,
    predict_groups,
    train_classifier,
    _batches as classifier_batches,
)
from .data import GROUPS, DialogueSample, SplitConfig, split_dataset, write_split_manifests
from .decoding import GenerationConfig, generate_ids, sample_rng
from .evaluation import EvalReport, bleu_from_texts, perplexity
from .model import (
    ENCODER_KIND,
    CLASSIFIER_KIND,
    SEQ2SEQ_KIND,
    ModelConfig,
    Seq2SeqModel,
    arrays_from_tensors,
    init_parameters,
    tensors_from_arrays,
    warm_start,
)
from .pretrain import PretrainConfig, pretrain_encoder
from .tokenizer import Vocab, build_vocab, decode, desegment, encode
from .train import TrainConfig, encode_pair, finetune, make_batches

VARIANTS = ("cold", "warm", "emoprepend")
VARIANT_SEED_OFFSET = {"cold": 1, "warm": 2, "emoprepend": 3}


@dataclass(frozen=True)
class BenchConfig:
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 2
    ffn_dim: int = 128
    max_len: int = 48
    dropout_rate: float = 0.1
    min_freq: int = 2
    pretrain_steps: int = 1500
    pretrain_lr: float = 5e-4
    pretrain_batch: int = 32
    epochs: int = 5
    batch_size: int = 32
    finetune_lr: float = 3e-4
    classifier_epochs: int = 3
    classifier_lr: float = 1e-4
    seeds: tuple[int, ...] = (0, 1, 2)
    transcript_count: int = 48
    gen_k: int = 5
    gen_temperature: float = 1.0
    gen_seed: int = 1234


def _model_config(vocab_size: int, cfg: BenchConfig) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        hidden_dim=cfg.hidden_dim,
        num_layers=cfg.num_layers,
        num_heads=cfg.num_heads,
        ffn_dim=cfg.ffn_dim,
        max_len=cfg.max_len,
        dropout_rate=cfg.dropout_rate,
    )


def _config_digest(mcfg: ModelConfig, cfg: BenchConfig) -> str:
    blob = json.dumps({"model": mcfg.to_dict(), "bench": asdict(cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _encode_variant(
    samples: list[DialogueSample],
    vocab: Vocab,
    max_len: int,
    variant: str,
    predicted: list[str] | None = None,
    at_inference: bool = False,
) -> list[tuple[list[int], list[int]]]:
    pairs = []
    for i, s in enumerate(samples):
        group = predicted[i] if predicted is not None else None
        pairs.append(encode_pair(s, vocab, max_len, variant, group, at_inference))
    return pairs


def _generate_transcript(
    model: Seq2SeqModel,
    samples: list[DialogueSample],
    pairs: list[tuple[list[int], list[int]]],
    vocab: Vocab,
    cfg: BenchConfig,
) -> list[dict]:
    gcfg = GenerationConfig(k=cfg.gen_k, temperature=cfg.gen_temperature,
                            max_len=cfg.max_len, seed=cfg.gen_seed)
    rows = []
    n = min(cfg.transcript_count, len(samples))
    for i in range(n):
        ids = generate_ids(model, pairs[i][0], gcfg, rng=sample_rng(cfg.gen_seed, i))
        text = decode(ids, vocab)
        rows.append({
            "utterance": samples[i].utterance,
            "reference": samples[i].response,
            "generated": text,
            "generated_surface": desegment(text),
        })
    return rows


def _bleu_pair(rows: list[dict]) -> tuple[float, float]:
    refs = [r["reference"] for r in rows]
    segmented = bleu_from_texts(refs, [r["generated"] for r in rows])
    surface = bleu_from_texts(
        [desegment(r) for r in refs], [r["generated_surface"] for r in rows]
    )
    return segmented, surface


def _write_reports(out: Path, rows: list[dict], complete: bool) -> None:
    """One aggregate row per variant, as CSV and as a Markdown table."""
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "ppl", "bleu", "bleu_surface"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    lines = ["| Model | PPL | BLEU |", "| --- | --- | --- |"]
    for row in rows:
        ppl = f"{row['ppl']:.2f}" if isinstance(row["ppl"], float) else str(row["ppl"])
        bleu = f"{row['bleu']:.2f}" if isinstance(row["bleu"], float) else str(row["bleu"])
        lines.append(f"| {row['model']} | {ppl} | {bleu} |")
    by_model = {r["model"]: r for r in rows}
    ordering = ""
    if isinstance(by_model["warm"].get("ppl"), float) and isinstance(by_model["cold"].get("ppl"), float):
        holds = by_model["warm"]["ppl"] < by_model["cold"]["ppl"]
        ordering = f"\nwarm-start PPL < cold-start PPL: {str(holds).lower()}\n"
    status = "" if complete else "\nINCOMPLETE: at least one variant failed to train.\n"
    (out / "report.md").write_text("\n".join(lines) + "\n" + ordering + status, encoding="utf-8")


def run_benchmark(
    samples: list[DialogueSample],
    out_dir: str | Path,
    cfg: BenchConfig = BenchConfig(),
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split_cfg = SplitConfig()
    train, val, test = split_dataset(samples, split_cfg)
    write_split_manifests(len(samples), split_cfg, out)

    train_texts = [s.utterance for s in train] + [s.response for s in train]
    vocab = build_vocab(train_texts, min_freq=cfg.min_freq)
    mcfg = _model_config(len(vocab), cfg)
    digest = _config_digest(mcfg, cfg)

    # Donor: MLM over every training-side text.
    pcfg = PretrainConfig(
        steps=cfg.pretrain_steps, batch_size=cfg.pretrain_batch,
        learning_rate=cfg.pretrain_lr, seed=0,
    )
    corpus = [encode(t, vocab, cfg.max_len) for t in train_texts]
    donor_tensors, _ = pretrain_encoder(corpus, vocab, mcfg, pcfg, log_path=out / "pretrain_log.csv")
    donor = arrays_from_tensors(donor_tensors)
    save_checkpoint(
        Checkpoint(ENCODER_KIND, mcfg, donor, vocab=vocab, meta={"stage": "pretrain"}),
        out / "checkpoints" / "donor",
    )

    # Classifier: utterance -> emotion group, warm from the donor.
    def clf_rows(split):
        return [(encode(s.utterance, vocab, cfg.max_len), GROUP_INDEX[s.emotion.group]) for s in split]

    ccfg = ClassifierConfig(epochs=cfg.classifier_epochs, batch_size=cfg.batch_size,
                            learning_rate=cfg.classifier_lr, seed=0)
    clf_params, _ = train_classifier(
        clf_rows(train), clf_rows(val), mcfg, ccfg,
        params=classifier_from_donor(donor, mcfg, seed=101),
        log_path=out / "classifier_log.csv",
    )
    save_checkpoint(
        Checkpoint(CLASSIFIER_KIND, mcfg, clf_params, vocab=vocab, meta={"stage": "classifier"}),
        out / "checkpoints" / "classifier",
    )
    clf_model = ClassifierModel(mcfg, tensors_from_arrays(clf_params))
    test_rows = clf_rows(test)
    test_acc = classifier_accuracy(clf_model, classifier_batches(test_rows, cfg.batch_size))
    counts = np.bincount([r[1] for r in test_rows], minlength=len(GROUPS))
    majority = float(counts.max() / counts.sum())
    predicted_idx: list[int] = []
    for ids, _ in classifier_batches(test_rows, cfg.batch_size):
        predicted_idx.extend(predict_groups(clf_model, ids).tolist())
    # classifier_batches sorts by length; map predictions back to sample order
    order = sorted(range(len(test_rows)), key=lambda i: (len(test_rows[i][0]), i))
    by_index = dict(zip(order, predicted_idx))
    predicted_groups = [GROUPS[by_index[i]] for i in range(len(test_rows))]

    runs: list[dict] = []
    reports: list[EvalReport] = []
    for variant in VARIANTS:
        tr_pairs = _encode_variant(train, vocab, cfg.max_len, variant)
        va_pairs = _encode_variant(val, vocab, cfg.max_len, variant)
        te_predicted = predicted_groups if variant == "emoprepend" else None
        te_pairs = _encode_variant(test, vocab, cfg.max_len, variant,
                                   predicted=te_predicted, at_inference=variant == "emoprepend")
        for seed in cfg.seeds:
            run: dict = {"variant": variant, "seed": seed}
            try:
                init_seed = seed * 10 + VARIANT_SEED_OFFSET[variant]
                if variant == "cold":
                    params = init_parameters(SEQ2SEQ_KIND, mcfg, seed=init_seed)
                else:
                    params = warm_start(mcfg, donor, seed=init_seed)
                tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                                   learning_rate=cfg.finetune_lr, seed=seed, variant=variant)
                run["train_config"] = asdict(tcfg)
                best, history = finetune(
                    tr_pairs, va_pairs, mcfg, tcfg, params,
                    log_path=out / f"train_{variant}_seed{seed}.csv",
                )
                model = Seq2SeqModel(mcfg, tensors_from_arrays(best))
                val_rows = [h for h in history if h["split"] == "val"]
                run["val_ppl"] = min(h["ppl"] for h in val_rows) if val_rows else None
                run["test_ppl"] = perplexity(model, make_batches(te_pairs, cfg.batch_size)).ppl
                transcript = _generate_transcript(model, test, te_pairs, vocab, cfg)
                run["test_bleu"], run["test_bleu_surface"] = _bleu_pair(transcript)
                run["transcript_samples"] = len(transcript)
                tpath = out / f"transcripts_{variant}_seed{seed}.txt"
                with open(tpath, "w", encoding="utf-8") as fh:
                    for row in transcript:
                        fh.write(f"{row['utterance']}\t{row['generated_surface']}\n")
                if seed == cfg.seeds[0]:
                    save_checkpoint(
                        Checkpoint(SEQ2SEQ_KIND, mcfg, best, vocab=vocab,
                                   meta={"variant": variant, "seed": seed}),
                        out / "checkpoints" / variant,
                    )
            except (RuntimeError, ValueError) as exc:
                run["error"] = str(exc)
            runs.append(run)

    def mean_over(variant: str, key: str):
        vals = [r[key] for r in runs if r["variant"] == variant and key in r]
        return float(np.mean(vals)) if vals else None

    complete = not any("error" in r for r in runs)
    rows = []
    for variant in VARIANTS:
        ppl = mean_over(variant, "test_ppl")
        bleu = mean_over(variant, "test_bleu")
        surface = mean_over(variant, "test_bleu_surface")
        rows.append({
            "model": variant,
            "ppl": ppl if ppl is not None else "error",
            "bleu": bleu if bleu is not None else "error",
            "bleu_surface": surface if surface is not None else "error",
        })
        if ppl is not None:
            reports.append(EvalReport(
                variant=variant, ppl=ppl, bleu=bleu, bleu_surface=surface,
                samples=len(test), config_digest=digest,
            ))
    _write_reports(out, rows, complete)

    summary = {r["model"]: {"test_ppl": r["ppl"], "test_bleu": r["bleu"],
                            "test_bleu_surface": r["bleu_surface"]} for r in rows}
    gap = None
    warm_ppl = summary["warm"]["test_ppl"]
    cold_ppl = summary["cold"]["test_ppl"]
    if isinstance(warm_ppl, float) and isinstance(cold_ppl, float):
        gap = 1.0 - warm_ppl / cold_ppl
    report = {
        "complete": complete,
        "dataset_size": len(samples),
        "split": {"train": len(train), "val": len(val), "test": len(test)},
        "vocab_size": len(vocab),
        "model_config": mcfg.to_dict(),
        "bench_config": asdict(cfg),
        "config_digest": digest,
        "classifier": {"test_accuracy": test_acc, "majority_baseline": majority},
        "runs": runs,
        "eval_reports": [asdict(r) for r in reports],
        "summary": summary,
        "warm_vs_cold_ppl_gap": gap,
        "checkpoint_digests": {
            name: checkpoint_digest(out / "checkpoints" / name)
            for name in ("donor", "classifier") + VARIANTS
            if (out / "checkpoints" / name / "weights.bin").exists()
        },
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return report
