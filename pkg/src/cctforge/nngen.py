"""Nearest-neighbour commit-message retrieval over bag-of-words diff vectors."""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import CommitRecord
from .diff import DiffLike, serialize_change
from .metrics import bleu_bnorm
from .tokens import LINE_MARKERS, SPECIAL_SET, Vocabulary

log = logging.getLogger(__name__)


def code_tokens(diff: DiffLike) -> list[str]:
    """Code tokens of the change encoding, markers and ``[CLS]`` dropped."""
    return [t for t in serialize_change(diff)[1:] if t not in LINE_MARKERS]


def bow_vector(tokens: Iterable[str], vocab: Vocabulary) -> dict[int, int]:
    """Sparse token-id counts; out-of-vocabulary tokens are ignored."""
    counts = Counter(vocab.stoi[t] for t in tokens if t in vocab.stoi and t not in SPECIAL_SET)
    return dict(counts)


def _norm(vec: dict[int, int]) -> float:
    return math.sqrt(sum(c * c for c in vec.values()))


def cosine(a: dict[int, int], b: dict[int, int], norm_a: float | None = None, norm_b: float | None = None) -> float:
    if len(b) < len(a):
        a, b, norm_a, norm_b = b, a, norm_b, norm_a
    dot = sum(c * b.get(k, 0) for k, c in a.items())
    na = _norm(a) if norm_a is None else norm_a
    nb = _norm(b) if norm_b is None else norm_b
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


@dataclass
class IndexEntry:
    record_id: str
    message: str
    vector: dict[int, int]
    norm: float
    tokens: list[str]


class BowIndex:
    def __init__(self, vocab: Vocabulary, entries: list[IndexEntry] | None = None):
        self.vocab = vocab
        self.entries = sorted(entries or [], key=lambda e: e.record_id)

    def __len__(self) -> int:
        return len(self.entries)

    def scores(self, query: dict[int, int]) -> list[tuple[float, str, IndexEntry]]:
        qn = _norm(query)
        return [(cosine(query, e.vector, qn, e.norm), e.record_id, e) for e in self.entries]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(
                    json.dumps(
                        {
                            "id": e.record_id,
                            "message": e.message,
                            "vector": {str(k): v for k, v in sorted(e.vector.items())},
                            "tokens": e.tokens,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "BowIndex":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                vec = {int(k): v for k, v in obj["vector"].items()}
                entries.append(IndexEntry(obj["id"], obj["message"], vec, _norm(vec), obj["tokens"]))
        return cls(vocab, entries)


def build_index(train_records: Iterable[CommitRecord], vocab: Vocabulary) -> BowIndex:
    entries = []
    for record in train_records:
        toks = code_tokens(record.diffs)
        vec = bow_vector(toks, vocab)
        norm = _norm(vec)
        if norm == 0:
            log.info("skipping %s: empty bag-of-words vector", record.id)
            continue
        entries.append(IndexEntry(record.id, record.message, vec, norm, toks))
    return BowIndex(vocab, entries)


def retrieve(test_diff: DiffLike, index: BowIndex, k: int = 1) -> str:
    """Message of the most similar training diff.

    ``k == 1`` takes the highest cosine (lowest record id on ties). ``k > 1``
    re-ranks the top-k cosine candidates by B-Norm BLEU of their diff tokens
    against the query's diff tokens.
    """
    if not len(index):
        raise ValueError("cannot retrieve from an empty index")
    if k < 1:
        raise ValueError("k must be >= 1")
    toks = code_tokens(test_diff)
    ranked = sorted(index.scores(bow_vector(toks, index.vocab)), key=lambda s: (-s[0], s[1]))
    if k == 1 or not toks:
        return ranked[0][2].message
    _, best = max(enumerate(ranked[:k]), key=lambda p: (bleu_bnorm(p[1][2].tokens, toks), -p[0]))
    return best[2].message
