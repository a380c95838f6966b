#!/usr/bin/env python3
"""Generate the synthetic dialogue fixture used by the benchmark and tests.

The corpus is a small constructed language with morphological segmentation
markers (trailing/leading "+"), balanced across all 32 fine emotion labels.
Utterances carry group-specific keywords so the emotion classifier has signal,
and responses follow group-specific templates so fine-tuning has structure to
learn. A sprinkle of frequency-1 tokens exercises the min-frequency vocabulary
cut. Fully deterministic for a given seed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from empachat.data import EMOTION_GROUPS, FINE_LABELS  # noqa: E402

GROUP_WORDS = {
    "joy": ["glad", "sunny", "smiling", "bright", "cheer"],
    "love": ["dear", "tender", "warm", "beloved", "sweet"],
    "surprise": ["sudden", "unexpected", "astonished", "wow", "startled"],
    "sadness": ["lonely", "teary", "heavy", "gray", "aching"],
    "anger": ["furious", "boiling", "stormy", "bitter", "seething"],
    "fear": ["afraid", "trembling", "uneasy", "shadowed", "anxious"],
}

GROUP_ACKS = {
    "joy": ["so glad for you", "that joy shines through", "wonderful to hear"],
    "love": ["that warmth is precious", "hold that love close", "so dear to hear"],
    "surprise": ["what a twist", "that came out of nowhere", "no wonder you gasped"],
    "sadness": ["i am sorry you carry that", "that sounds heavy", "i hear the ache"],
    "anger": ["that would boil anyone", "your anger makes sense", "what an unfair thing"],
    "fear": ["that sounds frightening", "no wonder you worry", "stay safe out there"],
}

NOUNS = [
    "garden", "letter", "river", "market", "window", "harvest", "journey",
    "supper", "lantern", "meadow", "bridge", "valley", "orchard", "village",
    "kitchen", "festival", "mountain", "harbor", "cottage", "pasture",
]
VERBS = [
    "found", "lost", "carried", "opened", "watched", "heard", "made",
    "broke", "planted", "crossed", "visited", "remembered", "shared",
]
TAILS = ["today", "again", "last night", "this morning", "at dusk", "by the road"]

UTT_TEMPLATES = [
    "i feel {word} because i {verb} the {noun} {tail}",
    "my {kin} {verb} the {noun} and i feel so {word}",
    "i {verb} the {noun} {tail} and it left me {word}",
    "feeling {word} after the {noun} , i {verb} it {tail}",
]
RESP_TEMPLATES = [
    "{ack} , tell me about the {noun}",
    "{ack} , i am with you {tail}",
    "{ack} , what happened with the {noun} ?",
    "{ack} , thank you for sharing that",
]
# Kinship terms written with segmentation markers: "nana +ti" desegments to
# "nanati" (possessive suffix), "ba+ nana" to "banana-style" prefixing.
KIN = ["nana +ti", "sidi +ka", "ba+ nana", "lu+ sidi", "imma +ti", "ba+ imma"]


def build_rows(per_label: int, seed: int) -> list[tuple[str, str, str]]:
    rng = np.random.default_rng(seed)
    rows = []
    rare_counter = 0
    for fine in FINE_LABELS:
        group = EMOTION_GROUPS[fine]
        for _ in range(per_label):
            word = GROUP_WORDS[group][rng.integers(len(GROUP_WORDS[group]))]
            noun = NOUNS[rng.integers(len(NOUNS))]
            verb = VERBS[rng.integers(len(VERBS))]
            tail = TAILS[rng.integers(len(TAILS))]
            kin = KIN[rng.integers(len(KIN))]
            utt = UTT_TEMPLATES[rng.integers(len(UTT_TEMPLATES))].format(
                word=word, noun=noun, verb=verb, tail=tail, kin=kin
            )
            # fine-label marker token keeps the 32 labels distinguishable
            utt = f"{utt} , truly {fine.replace(' ', '_')}"
            if rng.random() < 0.04:
                rare_counter += 1
                utt = f"{utt} rare{rare_counter}"
            ack = GROUP_ACKS[group][rng.integers(len(GROUP_ACKS[group]))]
            resp = RESP_TEMPLATES[rng.integers(len(RESP_TEMPLATES))].format(
                ack=ack, noun=noun, tail=tail
            )
            rows.append((fine, utt, resp))
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "fixture_dialogues.csv"))
    ap.add_argument("--per-label", type=int, default=75)
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()
    rows = build_rows(args.per_label, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["emotion", "utterance", "response"])
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
