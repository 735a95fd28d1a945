"""Text cleaning, lexicon sentiment labeling, vocabulary building, encoding.

Cleaning normalizes raw social/news text into a lowercase [a-z0-9 space]
alphabet; labeling scores cleaned tokens against positive/negative word
lists; the vocabulary assigns dense ids with 0 reserved for padding and 1
for unknown tokens.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataValidationError

PAD_ID = 0
UNK_ID = 1

CLASS_NAMES = ("negative", "neutral", "positive")
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

NEGATIVE, NEUTRAL, POSITIVE = 0, 1, 2

# scheme://... or www.-prefixed runs, consumed to the next whitespace
_URL_RE = re.compile(r"[a-z][a-z0-9+.\-]*://\S+|\bwww\.\S+")
_NON_ALPHABET_RE = re.compile(r"[^a-z0-9\s$]")
_WS_RE = re.compile(r"\s+")


def clean_text(raw: str) -> str:
    """Lowercase, strip URLs, keep only [a-z0-9 space $], drop '$', collapse.

    '$TICKER' therefore normalizes to 'ticker'. Idempotent: a cleaned string
    contains no characters a second pass could remove.
    """
    s = raw.lower()
    s = _URL_RE.sub(" ", s)
    s = _NON_ALPHABET_RE.sub("", s)
    s = s.replace("$", "")
    return _WS_RE.sub(" ", s).strip()


@dataclass(frozen=True)
class Lexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    @classmethod
    def from_files(cls, positive_path: str | Path, negative_path: str | Path) -> "Lexicon":
        return cls(
            positive=_load_wordlist(Path(positive_path)),
            negative=_load_wordlist(Path(negative_path)),
        )

    @classmethod
    def bundled(cls) -> "Lexicon":
        pkg = resources.files("sentirisk.lexicons")
        return cls(
            positive=_parse_wordlist((pkg / "positive.txt").read_text(encoding="utf-8")),
            negative=_parse_wordlist((pkg / "negative.txt").read_text(encoding="utf-8")),
        )


def _load_wordlist(path: Path) -> frozenset[str]:
    if not path.is_file():
        raise DataValidationError(f"lexicon file not found: {path}")
    return _parse_wordlist(path.read_text(encoding="utf-8"))


def _parse_wordlist(text: str) -> frozenset[str]:
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def label_sentiment(cleaned: str, lexicon: Lexicon,
                    presupplied: str | None = None) -> str:
    """(#positive tokens - #negative tokens) > 0 → positive, < 0 → negative.

    A pre-supplied label bypasses the lexicon entirely.
    """
    if presupplied is not None:
        if presupplied not in CLASS_INDEX:
            raise DataValidationError(f"unknown sentiment label {presupplied!r}")
        return presupplied
    score = 0
    for tok in cleaned.split():
        if tok in lexicon.positive:
            score += 1
        if tok in lexicon.negative:
            score -= 1
    if score > 0:
        return "positive"
    if score < 0:
        return "negative"
    return "neutral"


@dataclass
class Vocabulary:
    """Dense token→id map; id 0 is padding, id 1 is unknown."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = sorted(self.token_to_id.values())
        if ids != list(range(2, 2 + len(ids))):
            raise DataValidationError("vocabulary ids must be dense starting at 2")

    @property
    def size(self) -> int:
        """Total id count including the reserved pad and unknown slots."""
        return len(self.token_to_id) + 2

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def to_lines(self) -> list[str]:
        """Line i holds the token with id i+2."""
        by_id = sorted(self.token_to_id.items(), key=lambda kv: kv[1])
        return [tok for tok, _ in by_id]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Vocabulary":
        mapping: dict[str, int] = {}
        for i, tok in enumerate(lines):
            tok = tok.rstrip("\n")
            if not tok:
                raise DataValidationError(f"empty vocab token at line {i + 1}")
            if tok in mapping:
                raise DataValidationError(f"duplicate vocab token {tok!r} at line {i + 1}")
            mapping[tok] = i + 2
        return cls(token_to_id=mapping)


def build_vocab(corpus: Iterable[str], min_freq: int = 1,
                max_size: int = 20000) -> Vocabulary:
    """Frequency-desc then lexicographic-asc ranking, ids assigned from 2."""
    if min_freq < 1:
        raise DataValidationError(f"min_freq must be >= 1, got {min_freq}")
    if max_size < 2:
        raise DataValidationError(f"max_size must be >= 2 (pad + unk), got {max_size}")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(doc.split())
    kept = [(tok, c) for tok, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    kept = kept[: max_size - 2]
    return Vocabulary(token_to_id={tok: i + 2 for i, (tok, _) in enumerate(kept)})


def encode_doc(cleaned: str, vocab: Vocabulary, max_len: int) -> list[int]:
    """Whitespace tokens → ids (unknown → 1), truncated/right-padded to max_len."""
    from .layers import pad_or_truncate

    if max_len < 1:
        raise DataValidationError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.id_for(tok) for tok in cleaned.split()]
    return pad_or_truncate(ids, max_len)
