"""Closed-vocabulary whitespace tokenizer over pre-segmented text.

Text arrives already segmented into whitespace-delimited units carrying affix
markers: a trailing "+" glues a token to the next one, a leading "+" glues it
to the previous one. The vocabulary is built over those units, which is what
collapses the inflected surface vocabulary.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
EMOTION_TOKENS = ("<joy>", "<love>", "<surprise>", "<sadness>", "<anger>", "<fear>")
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK) + EMOTION_TOKENS

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = 0, 1, 2, 3, 4
# Structural specials are dropped when decoding; emotion tokens render as text
# so emotion-prepended inputs survive an encode/decode round trip.
_STRUCTURAL_IDS = frozenset((PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID))


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        if idx < 0 or idx >= len(self.id_to_token):
            raise TokenizerError(f"token id {idx} out of range (size {len(self)})")
        return self.id_to_token[idx]

    @property
    def first_regular_id(self) -> int:
        return len(SPECIAL_TOKENS)


def build_vocab(corpus: Iterable[str], min_freq: int = 2) -> Vocab:
    """Collect tokens with frequency >= min_freq on top of the special set.

    Ordering is deterministic: frequency descending, then lexicographic.
    """
    counts: Counter[str] = Counter()
    saw_any = False
    specials = set(SPECIAL_TOKENS)
    for line in corpus:
        saw_any = True
        for tok in line.split():
            if tok not in specials:
                counts[tok] += 1
    if not saw_any:
        raise TokenizerError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    id_to_token = tuple(SPECIAL_TOKENS) + tuple(kept)
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocab(token_to_id=token_to_id, id_to_token=id_to_token)


def encode(
    text: str, vocab: Vocab, max_len: int, add_specials: bool = True
) -> list[int]:
    """Tokenize to ids; unknowns map to [UNK]; truncate keeping a final [SEP]."""
    if add_specials and max_len < 2:
        raise TokenizerError("max_len must be >= 2 when adding specials")
    ids = [vocab.lookup(tok) for tok in text.split()]
    if add_specials:
        body = ids[: max_len - 2]
        # Truncation preserves [SEP] as the final token.
        return [CLS_ID] + body + [SEP_ID]
    return ids[:max_len]


def decode(ids: Sequence[int], vocab: Vocab) -> str:
    """Render ids back to text; stops at the first [SEP], drops structural specials."""
    out: list[str] = []
    for idx in ids:
        if idx < 0 or idx >= len(vocab):
            raise TokenizerError(f"token id {idx} out of range (size {len(vocab)})")
        if idx == SEP_ID:
            break
        if idx in _STRUCTURAL_IDS:
            continue
        out.append(vocab.id_to_token[idx])
    return " ".join(out)


def desegment(text: str) -> str:
    """Join marker-carrying segments back into surface words.

    A trailing "+" glues a segment to the next one; a leading "+" glues it to
    the previous one. Idempotent on marker-free text.
    """
    out: list[str] = []
    glue_next = False
    for word in text.split():
        glue_prev = word.startswith("+")
        glue_after = word.endswith("+")
        core = word.strip("+")
        if (glue_prev or glue_next) and out:
            out[-1] += core
        else:
            out.append(core)
        glue_next = glue_after
    return " ".join(tok for tok in out if tok)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    """One token per line; the line number is the id."""
    Path(path).write_text("\n".join(vocab.id_to_token) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    path = Path(path)
    if not path.exists():
        raise TokenizerError(f"vocabulary file not found: {path}")
    tokens = path.read_text(encoding="utf-8").splitlines()
    if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
        raise TokenizerError(f"vocabulary file {path} does not start with the special tokens")
    token_to_id = {tok: i for i, tok in enumerate(tokens)}
    if len(token_to_id) != len(tokens):
        raise TokenizerError(f"vocabulary file {path} contains duplicate tokens")
    return Vocab(token_to_id=token_to_id, id_to_token=tuple(tokens))
