"""Evaluation metrics: B-Norm BLEU, GLEU, accuracy, F1, AUC and Wilcoxon.

BLEU variant implemented here (B-Norm): both sides lowercased, sentence-level
BLEU-4, unigram precision unsmoothed, +1 added to numerator and denominator
of the 2..4-gram precisions, brevity penalty ``exp(1 - r/h)`` when the
hypothesis is shorter than the reference.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

MAX_ORDER = 4


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _combine(precisions: Sequence[float], hyp_len: int, ref_len: int) -> float:
    if min(precisions) <= 0.0:
        return 0.0
    log_mean = sum(math.log(p) for p in precisions) / len(precisions)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_mean)


def smoothed_bleu(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU-4 with +1/+1 smoothing for n >= 2, case-sensitive."""
    if not reference:
        raise ValueError("reference must be non-empty")
    if not hypothesis:
        return 0.0
    precisions = []
    for n in range(1, MAX_ORDER + 1):
        h = ngram_counts(hypothesis, n)
        r = ngram_counts(reference, n)
        matches = sum(min(c, r[g]) for g, c in h.items())
        total = sum(h.values())
        precisions.append(matches / total if n == 1 else (matches + 1) / (total + 1))
    return _combine(precisions, len(hypothesis), len(reference))


def bleu_bnorm(hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    return smoothed_bleu([t.lower() for t in hypothesis], [t.lower() for t in reference])


def gleu(source: Sequence[str], hypothesis: Sequence[str], reference: Sequence[str]) -> float:
    """Source-penalized single-reference GLEU, case-sensitive.

    N-grams present in the source but absent from the reference are
    penalized when the hypothesis copies them; precisions are floored at 0.
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    if not hypothesis:
        return 0.0
    precisions = []
    for n in range(1, MAX_ORDER + 1):
        h = ngram_counts(hypothesis, n)
        r = ngram_counts(reference, n)
        s = ngram_counts(source, n)
        matches = sum(min(c, r[g]) for g, c in h.items())
        penalty = sum(min(h[g], c) for g, c in s.items() if g not in r)
        numerator = max(0, matches - penalty)
        total = sum(h.values())
        precisions.append(numerator / total if n == 1 else (numerator + 1) / (total + 1))
    return _combine(precisions, len(hypothesis), len(reference))


def exact_match_accuracy(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    if len(hyps) != len(refs):
        raise ValueError(f"length mismatch: {len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        return 0.0
    return sum(1 for h, r in zip(hyps, refs) if list(h) == list(r)) / len(hyps)


def f1_binary(predictions: Sequence[bool], labels: Sequence[bool]) -> float:
    if len(predictions) != len(labels):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    tp = sum(1 for p, y in zip(predictions, labels) if p and y)
    fp = sum(1 for p, y in zip(predictions, labels) if p and not y)
    fn = sum(1 for p, y in zip(predictions, labels) if not p and y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney estimate of the ROC AUC (ties count one half)."""
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    n_pos = sum(1 for y in labels if y)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = average_ranks(scores)
    rank_sum = sum(r for r, y in zip(ranks, labels) if y)
    u = rank_sum - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


EXACT_LIMIT = 25


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of ranks of the positive differences
    p_value: float
    n: int
    method: str


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped. Up to 25 pairs the null distribution is
    enumerated exactly (ties included); beyond that a normal approximation
    with tie and continuity correction is used.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    diffs = [x - y for x, y in zip(a, b) if x != y]
    if not diffs:
        raise ValueError("all differences are zero")
    n = len(diffs)
    if n < 6:
        raise ValueError(f"need at least 6 non-zero differences, got {n}")
    ranks = average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    total = n * (n + 1) / 2

    if n <= EXACT_LIMIT:
        # Ranks are multiples of 1/2, so doubled ranks are integers.
        doubled = [int(round(2 * r)) for r in ranks]
        dist = [0] * (sum(doubled) + 1)
        dist[0] = 1
        reach = 0
        for r2 in doubled:
            for s in range(reach, -1, -1):
                if dist[s]:
                    dist[s + r2] += dist[s]
            reach += r2
        w2 = int(round(2 * w_plus))
        count = 2 ** n
        lower = sum(dist[: w2 + 1]) / count
        upper = sum(dist[w2:]) / count
        p = min(1.0, 2 * min(lower, upper))
        return WilcoxonResult(w_plus, p, n, "exact")

    mean = total / 2
    tie_counts = Counter(ranks)
    var = n * (n + 1) * (2 * n + 1) / 24 - sum(t**3 - t for t in tie_counts.values()) / 48
    dev = abs(w_plus - mean) - 0.5
    z = max(dev, 0.0) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2)))
    return WilcoxonResult(w_plus, p, n, "normal")


@dataclass
class MetricReport:
    metric: str
    example_ids: list[str] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    aggregate: float = float("nan")

    @property
    def count(self) -> int:
        return len(self.scores)

    @classmethod
    def sentence_level(cls, metric: str, example_ids: Sequence[str], scores: Sequence[float]) -> "MetricReport":
        agg = sum(scores) / len(scores) if scores else float("nan")
        return cls(metric, list(example_ids), list(scores), agg)

    def to_json(self) -> dict:
        return {"metric": self.metric, "aggregate": self.aggregate, "count": self.count}


def write_reports(reports: Sequence[MetricReport], csv_path: str | Path, summary_path: str | Path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "metric", "score"])
        for rep in reports:
            for eid, score in zip(rep.example_ids, rep.scores):
                writer.writerow([eid, rep.metric, repr(float(score))])
    summary = {rep.metric: rep.to_json() for rep in reports}
    Path(summary_path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
