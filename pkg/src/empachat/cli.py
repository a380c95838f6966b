"""Command-line entry points for the full pipeline.

Subcommands: pretrain, finetune, train-classifier, eval, bench, generate,
serve. Every subcommand accepts --seed, --config <path> (JSON whose keys are
the subcommand's flag names; explicit flags win), and --out <dir> where it
writes artifacts. Missing input files exit 1 with a message naming the path;
usage errors (unknown flag, no subcommand) exit 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .bench import BenchConfig, run_benchmark
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
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
from .data import GROUPS, SplitConfig, load_dataset, split_dataset
from .decoding import GenerationConfig, generate_ids, sample_rng
from .evaluation import bleu_from_texts, perplexity
from .model import (
    CLASSIFIER_KIND,
    ENCODER_KIND,
    SEQ2SEQ_KIND,
    ModelConfig,
    Seq2SeqModel,
    arrays_from_tensors,
    init_parameters,
    tensors_from_arrays,
    warm_start,
)
from .pretrain import PretrainConfig, pretrain_encoder
from .server import ServerConfig, serve
from .tokenizer import build_vocab, decode, desegment, encode
from .train import TrainConfig, encode_pair, finetune, make_batches


class CliError(Exception):
    pass


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {path}")
    return p


def _model_config_from_args(args, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        hidden_dim=args.hidden,
        num_layers=args.layers,
        num_heads=args.heads,
        ffn_dim=args.ffn,
        max_len=args.max_len,
    )


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--ffn", type=int, default=512)
    p.add_argument("--max-len", type=int, default=150)


def _apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    """Fill flags left at their defaults from the --config JSON file."""
    if not getattr(args, "config", None):
        return
    path = _require_file(args.config, "config file")
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise CliError(f"config file must hold a JSON object: {path}")
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CliError(f"config file key {key!r} is not a flag of this subcommand")
        if getattr(args, dest) == parser.get_default(dest):
            setattr(args, dest, value)


def _cmd_pretrain(args) -> int:
    data = _require_file(args.data, "dataset")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(data)
    texts = [s.utterance for s in samples] + [s.response for s in samples]
    vocab = build_vocab(texts, min_freq=args.min_freq)
    mcfg = _model_config_from_args(args, len(vocab))
    pcfg = PretrainConfig(steps=args.steps, batch_size=args.batch_size,
                          learning_rate=args.lr, seed=args.seed)
    corpus = [encode(t, vocab, mcfg.max_len) for t in texts]
    params, log_rows = pretrain_encoder(corpus, vocab, mcfg, pcfg,
                                        log_path=out / "pretrain_log.csv")
    save_checkpoint(
        Checkpoint(ENCODER_KIND, mcfg, arrays_from_tensors(params), vocab=vocab,
                   meta={"stage": "pretrain", "seed": args.seed}),
        out,
    )
    print(json.dumps({"checkpoint": str(out), "vocab_size": len(vocab),
                      "final_loss": log_rows[-1]["loss"] if log_rows else None}))
    return 0


def _cmd_finetune(args) -> int:
    data = _require_file(args.data, "dataset")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(data)
    train, val, _ = split_dataset(samples, SplitConfig())
    if args.variant in ("warm", "emoprepend") or args.donor:
        donor_dir = args.donor
        if not donor_dir:
            raise CliError(f"variant {args.variant!r} needs --donor")
        _require_file(donor_dir, "donor checkpoint")
        donor = load_checkpoint(donor_dir)
        if donor.model_kind != ENCODER_KIND:
            raise CliError(f"--donor must be an {ENCODER_KIND} checkpoint, got {donor.model_kind}")
        vocab, mcfg = donor.vocab, donor.config
        if vocab is None:
            raise CliError(f"donor checkpoint has no vocab.txt: {donor_dir}")
        if args.variant == "cold":
            params = init_parameters(SEQ2SEQ_KIND, mcfg, seed=args.seed)
        else:
            params = warm_start(mcfg, donor.params, seed=args.seed)
    else:
        texts = [s.utterance for s in train] + [s.response for s in train]
        vocab = build_vocab(texts, min_freq=args.min_freq)
        mcfg = _model_config_from_args(args, len(vocab))
        params = init_parameters(SEQ2SEQ_KIND, mcfg, seed=args.seed)
    tr_pairs = [encode_pair(s, vocab, mcfg.max_len, args.variant) for s in train]
    va_pairs = [encode_pair(s, vocab, mcfg.max_len, args.variant) for s in val]
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                       learning_rate=args.lr, seed=args.seed, variant=args.variant)
    best, history = finetune(tr_pairs, va_pairs, mcfg, tcfg, params,
                             log_path=out / "train_log.csv")
    save_checkpoint(
        Checkpoint(SEQ2SEQ_KIND, mcfg, best, vocab=vocab,
                   meta={"variant": args.variant, "seed": args.seed}),
        out,
    )
    val_rows = [h for h in history if h["split"] == "val"]
    print(json.dumps({"checkpoint": str(out),
                      "best_val_ppl": min(h["ppl"] for h in val_rows) if val_rows else None}))
    return 0


def _cmd_train_classifier(args) -> int:
    data = _require_file(args.data, "dataset")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(data)
    train, val, test = split_dataset(samples, SplitConfig())
    if args.donor:
        _require_file(args.donor, "donor checkpoint")
        donor = load_checkpoint(args.donor)
        if donor.model_kind != ENCODER_KIND:
            raise CliError(f"--donor must be an {ENCODER_KIND} checkpoint, got {donor.model_kind}")
        vocab, mcfg = donor.vocab, donor.config
        if vocab is None:
            raise CliError(f"donor checkpoint has no vocab.txt: {args.donor}")
        params = classifier_from_donor(donor.params, mcfg, seed=args.seed)
    else:
        texts = [s.utterance for s in train]
        vocab = build_vocab(texts, min_freq=args.min_freq)
        mcfg = _model_config_from_args(args, len(vocab))
        params = init_parameters(CLASSIFIER_KIND, mcfg, seed=args.seed)

    def rows(split):
        return [(encode(s.utterance, vocab, mcfg.max_len), GROUP_INDEX[s.emotion.group])
                for s in split]

    ccfg = ClassifierConfig(epochs=args.epochs, batch_size=args.batch_size,
                            learning_rate=args.lr, seed=args.seed)
    best, _ = train_classifier(rows(train), rows(val), mcfg, ccfg,
                               params=params, log_path=out / "classifier_log.csv")
    save_checkpoint(
        Checkpoint(CLASSIFIER_KIND, mcfg, best, vocab=vocab,
                   meta={"stage": "classifier", "seed": args.seed}),
        out,
    )
    model = ClassifierModel(mcfg, tensors_from_arrays(best))
    test_acc = classifier_accuracy(model, classifier_batches(rows(test), args.batch_size))
    print(json.dumps({"checkpoint": str(out), "test_accuracy": test_acc}))
    return 0


def _cmd_eval(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    data = _require_file(args.data, "dataset")
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.model_kind != SEQ2SEQ_KIND:
        raise CliError(f"eval needs a {SEQ2SEQ_KIND} checkpoint, got {ckpt.model_kind}")
    if ckpt.vocab is None:
        raise CliError(f"checkpoint has no vocab.txt: {args.checkpoint}")
    vocab, mcfg = ckpt.vocab, ckpt.config
    variant = ckpt.meta.get("variant", "warm")
    samples = load_dataset(data)
    predicted = None
    if variant == "emoprepend":
        if not args.classifier:
            raise CliError("evaluating an emoprepend checkpoint needs --classifier")
        _require_file(args.classifier, "classifier checkpoint")
        clf_ckpt = load_checkpoint(args.classifier)
        clf = ClassifierModel(clf_ckpt.config, tensors_from_arrays(clf_ckpt.params))
        predicted = []
        for s in samples:
            ids = encode(s.utterance, vocab, clf_ckpt.config.max_len)
            predicted.append(GROUPS[int(predict_groups(clf, np.asarray([ids]))[0])])
    pairs = []
    for i, s in enumerate(samples):
        group = predicted[i] if predicted is not None else None
        pairs.append(encode_pair(s, vocab, mcfg.max_len, variant, group,
                                 at_inference=variant == "emoprepend"))
    model = Seq2SeqModel(mcfg, tensors_from_arrays(ckpt.params))
    summary = perplexity(model, make_batches(pairs, args.batch_size))
    gcfg = GenerationConfig(k=args.k, temperature=args.temperature,
                            max_len=mcfg.max_len, seed=args.seed)
    n = min(args.bleu_samples, len(samples))
    gens = []
    for i in range(n):
        ids = generate_ids(model, pairs[i][0], gcfg, rng=sample_rng(args.seed, i))
        gens.append(decode(ids, vocab))
    refs = [s.response for s in samples[:n]]
    digest_blob = json.dumps({
        "model": mcfg.to_dict(), "variant": variant, "k": args.k,
        "temperature": args.temperature, "seed": args.seed,
        "batch_size": args.batch_size, "bleu_samples": n,
    }, sort_keys=True)
    result = {
        "variant": variant,
        "samples": len(samples),
        "ppl": summary.ppl,
        "bleu": bleu_from_texts(refs, gens),
        "bleu_surface": bleu_from_texts([desegment(r) for r in refs],
                                        [desegment(g) for g in gens]),
        "bleu_samples": n,
        "config_digest": hashlib.sha256(digest_blob.encode("utf-8")).hexdigest(),
    }
    print(json.dumps(result))
    return 0


def _cmd_bench(args) -> int:
    data = _require_file(args.data, "dataset")
    samples = load_dataset(data)
    cfg = BenchConfig(
        hidden_dim=args.hidden, num_layers=args.layers, num_heads=args.heads,
        ffn_dim=args.ffn, max_len=args.max_len,
        pretrain_steps=args.pretrain_steps, epochs=args.epochs,
        batch_size=args.batch_size, finetune_lr=args.lr,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        transcript_count=args.transcripts, gen_k=args.gen_k,
    )
    report = run_benchmark(samples, args.out, cfg)
    print(json.dumps({"out": str(args.out), "complete": report["complete"],
                      "summary": report["summary"],
                      "warm_vs_cold_ppl_gap": report["warm_vs_cold_ppl_gap"]}))
    return 0


def _cmd_generate(args) -> int:
    _require_file(args.checkpoint, "checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.model_kind != SEQ2SEQ_KIND:
        raise CliError(f"generate needs a {SEQ2SEQ_KIND} checkpoint, got {ckpt.model_kind}")
    if ckpt.vocab is None:
        raise CliError(f"checkpoint has no vocab.txt: {args.checkpoint}")
    variant = ckpt.meta.get("variant", "warm")
    text = args.utterance
    if variant == "emoprepend":
        if not args.classifier:
            raise CliError("generating with an emoprepend checkpoint needs --classifier")
        _require_file(args.classifier, "classifier checkpoint")
        clf_ckpt = load_checkpoint(args.classifier)
        clf = ClassifierModel(clf_ckpt.config, tensors_from_arrays(clf_ckpt.params))
        ids = encode(text, ckpt.vocab, clf_ckpt.config.max_len)
        group = GROUPS[int(predict_groups(clf, np.asarray([ids]))[0])]
        text = f"<{group}> {text}"
    model = Seq2SeqModel(ckpt.config, tensors_from_arrays(ckpt.params))
    gcfg = GenerationConfig(k=args.k, temperature=args.temperature,
                            max_len=args.gen_len, seed=args.seed)
    enc = encode(text, ckpt.vocab, ckpt.config.max_len)
    ids = generate_ids(model, enc, gcfg, rng=sample_rng(args.seed, 0))
    print(desegment(decode(ids, ckpt.vocab)))
    return 0


def _cmd_serve(args) -> int:
    overrides = {
        "checkpoint": args.checkpoint, "classifier": args.classifier,
        "k": args.k, "temperature": args.temperature, "port": args.port,
        "host": args.host, "static_dir": args.static_dir,
        "segmenter_command": args.segmenter_command, "seed": args.seed,
    }
    if args.config:
        cfg = ServerConfig.from_file(_require_file(args.config, "config file"))
        merged = {f: getattr(cfg, f) for f in ServerConfig.__dataclass_fields__}
        for key, value in overrides.items():
            if value is not None:
                merged[key] = value
        cfg = ServerConfig(**merged)
    else:
        cfg = ServerConfig(**{k: v for k, v in overrides.items() if v is not None})
    if not cfg.checkpoint:
        raise CliError("serve needs a checkpoint (flag --checkpoint or config file)")
    _require_file(cfg.checkpoint, "checkpoint")
    if cfg.classifier:
        _require_file(cfg.classifier, "classifier checkpoint")
    serve(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="empachat",
        description="Empathetic dialogue at desk scale: pretrain, warm-start, chat.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON file of flag defaults")
        p.add_argument("--out", default="run", required=out_required, help="output directory")

    p = sub.add_parser("pretrain", help="train the masked-LM donor encoder")
    common(p, out_required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--min-freq", type=int, default=2)
    _add_model_flags(p)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("finetune", help="train a seq2seq variant on dialogue pairs")
    common(p, out_required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--donor", default=None, help="encoder checkpoint to warm-start from")
    p.add_argument("--variant", choices=("cold", "warm", "emoprepend"), default="warm")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--min-freq", type=int, default=2)
    _add_model_flags(p)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("train-classifier", help="train the emotion-group classifier")
    common(p, out_required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--donor", default=None)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--min-freq", type=int, default=2)
    _add_model_flags(p)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("eval", help="perplexity and BLEU of a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--bleu-samples", type=int, default=64)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="cold/warm/emoprepend comparison on one dataset")
    common(p, out_required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--pretrain-steps", type=int, default=1500)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--transcripts", type=int, default=48)
    p.add_argument("--gen-k", type=int, default=5)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--ffn", type=int, default=128)
    p.add_argument("--max-len", type=int, default=48)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("generate", help="sample one response from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--utterance", required=True)
    p.add_argument("--classifier", default=None)
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--gen-len", type=int, default=150)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--classifier", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default=None)
    p.add_argument("--static-dir", default=None)
    p.add_argument("--segmenter-command", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "serve":
            # serve interprets --config itself (ServerConfig schema)
            sub_actions = parser._subparsers._group_actions[0]  # type: ignore[attr-defined]
            _apply_config_file(sub_actions.choices[args.command], args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
