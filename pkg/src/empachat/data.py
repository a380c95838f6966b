"""Dialogue corpus ingestion, emotion grouping, splitting, emotion prepending.

The corpus is a UTF-8 CSV with header ``emotion,utterance,response`` (TSV
supported via a flag), one single-turn exchange per row, labeled with one of
32 fine emotion labels that map onto 6 primary groups.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

GROUPS = ("joy", "love", "surprise", "sadness", "anger", "fear")

# Fine label -> primary group. 32 labels total; group sizes 9/5/2/7/5/4.
EMOTION_GROUPS: dict[str, str] = {
    "excited": "joy",
    "proud": "joy",
    "grateful": "joy",
    "hopeful": "joy",
    "confident": "joy",
    "joyful": "joy",
    "content": "joy",
    "prepared": "joy",
    "anticipating": "joy",
    "caring": "love",
    "sentimental": "love",
    "trusting": "love",
    "faithful": "love",
    "nostalgic": "love",
    "surprised": "surprise",
    "impressed": "surprise",
    "sad": "sadness",
    "lonely": "sadness",
    "guilty": "sadness",
    "disappointed": "sadness",
    "devastated": "sadness",
    "embarrassed": "sadness",
    "ashamed": "sadness",
    "angry": "anger",
    "annoyed": "anger",
    "furious": "anger",
    "disgusted": "anger",
    "jealous": "anger",
    "afraid": "fear",
    "terrified": "fear",
    "anxious": "fear",
    "apprehensive": "fear",
}

FINE_LABELS = tuple(EMOTION_GROUPS)


class DatasetError(ValueError):
    pass


def group_emotion(fine: str) -> str:
    """Map a fine emotion label (case-insensitive) to its primary group."""
    key = fine.strip().lower()
    try:
        return EMOTION_GROUPS[key]
    except KeyError:
        raise DatasetError(f"unknown emotion label: {fine!r}") from None


def group_token(group: str) -> str:
    if group not in GROUPS:
        raise DatasetError(f"unknown emotion group: {group!r}")
    return f"<{group}>"


@dataclass(frozen=True)
class EmotionLabel:
    fine: str
    group: str

    @classmethod
    def from_fine(cls, fine: str) -> "EmotionLabel":
        fine = fine.strip().lower()
        return cls(fine=fine, group=group_emotion(fine))


@dataclass(frozen=True)
class DialogueSample:
    emotion: EmotionLabel
    utterance: str
    response: str


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.90
    val_fraction: float = 0.05
    test_fraction: float = 0.05
    seed: int = 42

    def __post_init__(self):
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise DatasetError(f"split fractions must sum to 1, got {total}")


def load_dataset(path: str | Path, delimiter: str = ",") -> list[DialogueSample]:
    """Read one sample per row; any malformed row raises with its line number."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    samples: list[DialogueSample] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        expected = {"emotion", "utterance", "response"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise DatasetError(
                f"{path}: header must contain emotion,utterance,response, got {reader.fieldnames}"
            )
        for row in reader:
            line = reader.line_num
            emotion = (row.get("emotion") or "").strip()
            utterance = (row.get("utterance") or "").strip()
            response = (row.get("response") or "").strip()
            if not utterance:
                raise DatasetError(f"{path}:{line}: empty utterance")
            if not response:
                raise DatasetError(f"{path}:{line}: empty response")
            try:
                label = EmotionLabel.from_fine(emotion)
            except DatasetError:
                raise DatasetError(f"{path}:{line}: unknown emotion label: {emotion!r}") from None
            samples.append(DialogueSample(emotion=label, utterance=utterance, response=response))
    return samples


def _fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded Fisher-Yates shuffle of range(n)."""
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def split_dataset(
    samples: list[DialogueSample], cfg: SplitConfig = SplitConfig()
) -> tuple[list[DialogueSample], list[DialogueSample], list[DialogueSample]]:
    """Deterministic shuffle then contiguous cut.

    |train| = floor(train_fraction * N), |val| = floor(val_fraction * N),
    test takes the remainder; the three parts partition the input.
    """
    n = len(samples)
    if n < 3:
        raise DatasetError(f"need at least 3 samples to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    order = _fisher_yates(n, rng)
    n_train = int(np.floor(cfg.train_fraction * n))
    n_val = int(np.floor(cfg.val_fraction * n))
    train_idx = order[:n_train]
    val_idx = order[n_train : n_train + n_val]
    test_idx = order[n_train + n_val :]
    pick = lambda idx: [samples[i] for i in idx]
    return pick(train_idx), pick(val_idx), pick(test_idx)


def split_indices(n: int, cfg: SplitConfig = SplitConfig()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index-level view of split_dataset, for writing audit manifests."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    order = _fisher_yates(n, rng)
    n_train = int(np.floor(cfg.train_fraction * n))
    n_val = int(np.floor(cfg.val_fraction * n))
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def write_split_manifests(n: int, cfg: SplitConfig, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, idx in zip(("train", "val", "test"), split_indices(n, cfg)):
        (out_dir / f"{name}_indices.txt").write_text(
            "\n".join(str(i) for i in idx) + "\n", encoding="utf-8"
        )


def emo_prepend(
    sample: DialogueSample,
    predicted_group: str | None = None,
    at_inference: bool = False,
) -> str:
    """Prefix the utterance with its emotion-group token.

    Training and validation use the gold label carried by the sample; at
    inference the group must come from an external classifier prediction.
    """
    if at_inference:
        if not predicted_group:
            raise DatasetError("inference-time emotion prepending requires a predicted group")
        group = predicted_group
    else:
        group = predicted_group or sample.emotion.group
    return f"{group_token(group)} {sample.utterance}"
