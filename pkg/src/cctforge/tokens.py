"""Tokenizer, special-token registry and vocabulary.

The tokenizer splits on whitespace, keeps runs of word characters
(alphanumerics and ``_``) together, and emits every other character as a
token of its own. Special tokens such as ``[CLS]`` are never split.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

CLS = "[CLS]"
MSG = "[MSG]"
SEP = "[SEP]"
EDGE = "[EDGE]"
ADD = "[ADD]"
DEL = "[DEL]"
KEEP = "[KEEP]"
MASK = "[MASK]"
PAD = "[PAD]"
UNK = "[UNK]"
BOS = "[BOS]"
EOS = "[EOS]"

# Registry order fixes the vocabulary ids 0..11.
SPECIAL_TOKENS: tuple[str, ...] = (CLS, MSG, SEP, EDGE, ADD, DEL, KEEP, MASK, PAD, UNK, BOS, EOS)
SPECIAL_SET = frozenset(SPECIAL_TOKENS)
LINE_MARKERS = frozenset({ADD, DEL, KEEP})

_SPECIAL_ALT = "|".join(re.escape(t) for t in SPECIAL_TOKENS)
_TOKEN_RE = re.compile(rf"{_SPECIAL_ALT}|\w+|\S")
_CHUNK_RE = re.compile(r"(\s*)(\S+)")


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    """Split ``text`` into tokens.

    ``lowercase=True`` is the case-insensitive mode used by the metrics and
    for commit-message text; special tokens keep their case either way.
    """
    tokens = _TOKEN_RE.findall(text)
    if lowercase:
        tokens = [t if t in SPECIAL_SET else t.lower() for t in tokens]
    return tokens


def tokenize_with_whitespace(text: str) -> tuple[list[str], list[str]]:
    """Tokenize and record the whitespace needed to rebuild ``text``.

    Returns ``(tokens, spacing)`` with ``len(spacing) == len(tokens) + 1``:
    ``spacing[i]`` precedes ``tokens[i]`` and ``spacing[-1]`` trails the
    last token.
    """
    tokens: list[str] = []
    spacing: list[str] = []
    pos = 0
    for m in _CHUNK_RE.finditer(text):
        pending = m.group(1)
        for tok in _TOKEN_RE.findall(m.group(2)):
            tokens.append(tok)
            spacing.append(pending)
            pending = ""
        pos = m.end()
    spacing.append(text[pos:])
    return tokens, spacing


def detokenize(tokens: Sequence[str], spacing: Sequence[str]) -> str:
    if len(spacing) != len(tokens) + 1:
        raise ValueError("spacing must have exactly one more entry than tokens")
    parts = []
    for ws, tok in zip(spacing, tokens):
        parts.append(ws)
        parts.append(tok)
    parts.append(spacing[-1])
    return "".join(parts)


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token/id map whose first ids are the special tokens."""

    itos: tuple[str, ...]
    min_freq: int = 1
    stoi: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.itos[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens in registry order")
        stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(stoi) != len(self.itos):
            raise ValueError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "stoi", stoi)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id_of(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    @property
    def pad_id(self) -> int:
        return self.stoi[PAD]

    @property
    def regular_tokens(self) -> tuple[str, ...]:
        return self.itos[len(SPECIAL_TOKENS):]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, min_freq: int = 1) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines), min_freq)


def build_vocab(corpus: Iterable[Iterable[str]] | Iterable[str], min_freq: int = 1) -> Vocabulary:
    """Build a vocabulary from a stream of token sequences (or a flat token stream).

    Tokens with frequency >= ``min_freq`` get ids after the special tokens,
    ordered by descending frequency and then lexicographically.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for item in corpus:
        if isinstance(item, str):
            counts[item] += 1
        else:
            counts.update(item)
    kept = [(tok, n) for tok, n in counts.items() if n >= min_freq and tok not in SPECIAL_SET]
    kept.sort(key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(SPECIAL_TOKENS + tuple(tok for tok, _ in kept), min_freq)


def encode(tokens: Iterable[str], vocab: Vocabulary) -> list[int]:
    unk = vocab.stoi[UNK]
    return [vocab.stoi.get(t, unk) for t in tokens]


def decode(ids: Iterable[int], vocab: Vocabulary) -> list[str]:
    out = []
    n = len(vocab.itos)
    for i in ids:
        if not 0 <= i < n:
            raise IndexError(f"token id {i} out of range for vocabulary of size {n}")
        out.append(vocab.itos[i])
    return out
