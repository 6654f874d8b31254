import json
import random

import pytest

from cctforge.metrics import (
    MetricReport,
    auc,
    bleu_bnorm,
    exact_match_accuracy,
    f1_binary,
    gleu,
    smoothed_bleu,
    wilcoxon_signed_rank,
    write_reports,
)

from oracles import oracle_auc, oracle_bleu, oracle_wilcoxon_p

WORDS = ["a", "b", "c", "d", "e"]


def rand_seq(rng, lo=1, hi=9):
    return [rng.choice(WORDS) for _ in range(rng.randint(lo, hi))]


# ---- BLEU / B-Norm --------------------------------------------------------

def test_bleu_identity_and_empty():
    ref = "fix null check in parser".split()
    assert bleu_bnorm(ref, ref) == 100.0
    assert bleu_bnorm([], ref) == 0.0


@pytest.mark.parametrize("seed", range(25))
def test_bleu_matches_oracle(seed):
    rng = random.Random(seed)
    hyp, ref = rand_seq(rng), rand_seq(rng)
    assert abs(bleu_bnorm(hyp, ref) - oracle_bleu(hyp, ref)) < 1e-9


def test_bnorm_case_insensitive():
    rng = random.Random(0)
    for _ in range(20):
        hyp, ref = rand_seq(rng), rand_seq(rng)
        base = bleu_bnorm(hyp, ref)
        assert bleu_bnorm([t.upper() for t in hyp], ref) == base
        assert bleu_bnorm(hyp, [t.upper() for t in ref]) == base


def test_bleu_reference_required():
    with pytest.raises(ValueError):
        bleu_bnorm(["a"], [])


# ---- GLEU -----------------------------------------------------------------

def test_gleu_identity_equals_bleu():
    ref = "Returns The Cached Value".split()
    assert gleu(ref, ref, ref) == smoothed_bleu(ref, ref) == 100.0


def test_gleu_copying_source_scores_zero():
    src = "x y z w".split()
    assert gleu(src, src, "a b c d".split()) == 0.0


@pytest.mark.parametrize("seed", range(25))
def test_gleu_matches_oracle(seed):
    rng = random.Random(100 + seed)
    src, hyp, ref = rand_seq(rng), rand_seq(rng), rand_seq(rng)
    assert abs(gleu(src, hyp, ref) - oracle_bleu(hyp, ref, src)) < 1e-9


def test_gleu_source_equal_reference_is_plain_bleu():
    rng = random.Random(7)
    for _ in range(20):
        hyp, ref = rand_seq(rng), rand_seq(rng)
        assert gleu(ref, hyp, ref) == smoothed_bleu(hyp, ref)


def test_gleu_empty_hypothesis():
    assert gleu(["a"], [], ["a"]) == 0.0


# ---- accuracy / F1 / AUC -------------------------------------------------

def test_accuracy():
    a = [["x"], ["y"]]
    assert exact_match_accuracy(a, a) == 1.0
    assert exact_match_accuracy(a, [["q"], ["r"]]) == 0.0
    assert exact_match_accuracy([["X"]], [["x"]]) == 0.0
    with pytest.raises(ValueError):
        exact_match_accuracy(a, a[:1])


def test_accuracy_random_subsets():
    rng = random.Random(3)
    for _ in range(20):
        refs = [rand_seq(rng) for _ in range(15)]
        hyps = [r if rng.random() < 0.4 else rand_seq(rng) for r in refs]
        expected = sum(h == r for h, r in zip(hyps, refs)) / len(refs)
        assert exact_match_accuracy(hyps, refs) == expected


def test_f1_cases():
    labels = [True, False, True]
    assert f1_binary(labels, labels) == 1.0
    assert f1_binary([False] * 3, labels) == 0.0
    preds = [True] * 5 + [False]
    gold = [True] * 4 + [False, True]
    assert abs(f1_binary(preds, gold) - 0.8) < 1e-12
    with pytest.raises(ValueError):
        f1_binary([True], labels)


@pytest.mark.parametrize("seed", range(25))
def test_f1_matches_confusion_oracle(seed):
    rng = random.Random(seed)
    preds = [rng.random() < 0.5 for _ in range(30)]
    gold = [rng.random() < 0.5 for _ in range(30)]
    tp = sum(p and g for p, g in zip(preds, gold))
    fp = sum(p and not g for p, g in zip(preds, gold))
    fn = sum(g and not p for p, g in zip(preds, gold))
    expected = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    assert abs(f1_binary(preds, gold) - expected) < 1e-9
    order = list(range(30))
    rng.shuffle(order)
    assert f1_binary([preds[i] for i in order], [gold[i] for i in order]) == f1_binary(preds, gold)


def test_auc_cases():
    assert auc([0.9, 0.8, 0.1, 0.2], [True, True, False, False]) == 1.0
    assert auc([0.5] * 4, [True, False, True, False]) == 0.5
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [True, True])


@pytest.mark.parametrize("seed", range(25))
def test_auc_matches_pair_oracle(seed):
    rng = random.Random(seed)
    labels = [rng.random() < 0.4 for _ in range(50)]
    labels[0], labels[1] = True, False
    scores = [round(rng.random(), 1) for _ in range(50)]
    assert abs(auc(scores, labels) - oracle_auc(scores, labels)) < 1e-12


# ---- Wilcoxon ---------------------------------------------------------------

def test_wilcoxon_all_zero():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], [1, 2, 3, 4, 5, 6])


def test_wilcoxon_symmetric_is_one():
    d = [1, -1, 2, -2, 3, -3]
    res = wilcoxon_signed_rank(d, [0] * 6)
    assert res.p_value == 1.0
    assert res.statistic == 10.5


@pytest.mark.parametrize("seed", range(25))
def test_wilcoxon_exact_matches_enumeration(seed):
    rng = random.Random(seed)
    a = [rng.choice([0.5, 1.0, 1.5, 2.0, 3.0]) * rng.choice([-1, 1]) for _ in range(8)]
    res = wilcoxon_signed_rank(a, [0.0] * 8)
    w, p = oracle_wilcoxon_p(a)
    assert res.method == "exact"
    assert abs(res.statistic - w) < 1e-9
    assert abs(res.p_value - p) < 1e-9


def test_wilcoxon_normal_matches_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = random.Random(5)
    for _ in range(10):
        a = [rng.gauss(0.3, 1) for _ in range(40)]
        b = [rng.gauss(0, 1) for _ in range(40)]
        ours = wilcoxon_signed_rank(a, b)
        ref = stats.wilcoxon(a, b, method="approx", correction=True)
        assert ours.method == "normal"
        assert abs(ours.p_value - ref.pvalue) < 1e-9


# ---- reports ---------------------------------------------------------------

def test_reports(tmp_path):
    rep = MetricReport.sentence_level("bnorm", ["a", "b"], [50.0, 100.0])
    assert rep.aggregate == 75.0 and rep.count == 2
    write_reports([rep], tmp_path / "s.csv", tmp_path / "s.json")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "example_id,metric,score"
    assert json.loads((tmp_path / "s.json").read_text())["bnorm"]["aggregate"] == 75.0
