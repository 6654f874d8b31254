"""Brute-force reference implementations used as test oracles."""

import itertools
import math
from collections import Counter


def grams(seq, n):
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def count_of(g, seq, n):
    return sum(1 for x in grams(seq, n) if x == g)


def oracle_bleu(hyp, ref, src=None):
    if not hyp:
        return 0.0
    logs = 0.0
    for n in range(1, 5):
        hg = grams(hyp, n)
        distinct = list(dict.fromkeys(hg))
        match = sum(min(count_of(g, hyp, n), count_of(g, ref, n)) for g in distinct)
        if src is not None:
            src_distinct = list(dict.fromkeys(grams(src, n)))
            penalty = sum(min(count_of(g, hyp, n), count_of(g, src, n)) for g in src_distinct if count_of(g, ref, n) == 0)
            match = max(0, match - penalty)
        num, den = (match, len(hg)) if n == 1 else (match + 1, len(hg) + 1)
        if num == 0:
            return 0.0
        logs += math.log(num / den)
    bp = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return 100 * bp * math.exp(logs / 4)


def oracle_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def oracle_wilcoxon_p(diffs):
    mags = sorted(abs(d) for d in diffs)

    def rank(v):
        idx = [i + 1 for i, m in enumerate(mags) if m == v]
        return sum(idx) / len(idx)

    ranks = [rank(abs(d)) for d in diffs]
    observed = sum(r for r, d in zip(ranks, diffs) if d > 0)
    outcomes = [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product([0, 1], repeat=len(diffs))]
    lo = sum(1 for w in outcomes if w <= observed + 1e-12) / len(outcomes)
    hi = sum(1 for w in outcomes if w >= observed - 1e-12) / len(outcomes)
    return observed, min(1.0, 2 * min(lo, hi))


def oracle_cosine(a, b):
    """Cosine of two token lists as bags of words."""
    ca, cb = Counter(a), Counter(b)
    dot = sum(ca[t] * cb[t] for t in ca)
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    return dot / (na * nb) if na and nb else 0.0
