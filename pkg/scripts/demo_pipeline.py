#!/usr/bin/env python3
"""Walk the full pipeline on a small slice of the bundled fixture.

Pretrains a tiny masked-LM donor, warm-starts a seq2seq model from it,
trains the emotion classifier, evaluates perplexity/BLEU, and samples a
few responses. Everything lands in one run directory. Takes roughly a
minute on a laptop; pass --full for the bench comparison instead.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from empachat.cli import main as cli  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]

MODEL = ["--hidden", "64", "--layers", "2", "--heads", "2",
         "--ffn", "128", "--max-len", "48"]


def run(argv: list[str]) -> None:
    print(f"$ empachat {' '.join(argv)}")
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=str(ROOT / "data" / "fixture_dialogues.csv"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "demo"))
    ap.add_argument("--rows", type=int, default=480, help="corpus slice size")
    ap.add_argument("--full", action="store_true",
                    help="run the cold/warm/emoprepend bench on the whole fixture")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.full:
        run(["bench", "--data", args.data, "--out", str(out / "bench")])
        print(f"\nreports under {out / 'bench'}")
        return 0

    with open(args.data, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    slice_path = out / "slice.csv"
    with open(slice_path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows[: args.rows + 1])  # header + rows

    donor = out / "donor"
    model = out / "warm"
    clf = out / "classifier"

    run(["pretrain", "--data", str(slice_path), "--steps", "300",
         "--min-freq", "1", "--out", str(donor), *MODEL])
    run(["finetune", "--data", str(slice_path), "--donor", str(donor),
         "--variant", "warm", "--epochs", "10", "--lr", "1e-3",
         "--min-freq", "1", "--out", str(model), *MODEL])
    run(["train-classifier", "--data", str(slice_path), "--donor", str(donor),
         "--epochs", "6", "--lr", "1e-3", "--min-freq", "1",
         "--out", str(clf), *MODEL])
    run(["eval", "--checkpoint", str(model), "--data", str(slice_path),
         "--bleu-samples", "16", "--k", "5", "--out", str(out / "eval")])
    for seed, utt in enumerate(("i feel glad because i found the garden today",
                                "my nana +ti lost the letter and i feel so lonely")):
        run(["generate", "--checkpoint", str(model), "--classifier", str(clf),
             "--utterance", utt, "--k", "5", "--gen-len", "32",
             "--seed", str(seed), "--out", str(out / "gen")])

    print(f"\nartifacts under {out}")
    print(json.dumps({"serve": f"empachat serve --checkpoint {model} "
                               f"--classifier {clf}"}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
