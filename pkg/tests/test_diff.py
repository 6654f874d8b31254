import difflib
import random

import pytest

from cctforge.diff import (
    LineKind,
    group_by_markers,
    kind_of_marker,
    message_tokens,
    new_view,
    old_view,
    parse_patch,
    parse_unified_diff,
    serialize_change,
    serialize_change_with_message,
)
from cctforge.errors import BinaryPatchError, DiffParseError, EmptyDiffError, ModeChangeOnlyError
from cctforge.tokens import CLS, LINE_MARKERS, MSG, tokenize

from conftest import GSHEETS_DIFF, GSHEETS_MESSAGE


def random_file(rng, n=20):
    return [f"v{rng.randrange(8)} = {rng.randrange(5)}" for _ in range(n)]


def mutate(rng, lines):
    out = list(lines)
    for _ in range(rng.randint(1, 5)):
        op = rng.random()
        pos = rng.randrange(len(out) + 1)
        if op < 0.4 and out:
            del out[min(pos, len(out) - 1)]
        elif op < 0.7:
            out.insert(pos, f"w{rng.randrange(8)} = {rng.randrange(5)}")
        elif out:
            out[min(pos, len(out) - 1)] += " + 1"
    return out


def make_patch(old, new, n=3):
    return "\n".join(difflib.unified_diff(old, new, "a/f.py", "b/f.py", n=n, lineterm="")) + "\n"


def test_gsheets_diff_parses(gsheets):
    d = parse_unified_diff(GSHEETS_DIFF)
    assert len(d.hunks) == 1
    kinds = [line.kind for line in d.hunks[0].lines]
    assert kinds == [LineKind.KEEP, LineKind.DEL, LineKind.ADD]
    assert d.hunks[0].lines[1].text == "allows_subqueries = False"


def test_no_hunks_is_error():
    with pytest.raises(EmptyDiffError):
        parse_unified_diff("")
    with pytest.raises(DiffParseError):
        parse_unified_diff("--- a/x\n+++ b/x\n")


def test_inconsistent_hunk_length_names_hunk():
    bad = "--- a/x\n+++ b/x\n@@ -1,3 +1,1 @@\n-a\n+b\n"
    with pytest.raises(DiffParseError, match="@@"):
        parse_unified_diff(bad)


def test_binary_and_mode_only():
    with pytest.raises(BinaryPatchError):
        parse_patch("diff --git a/x.png b/x.png\nBinary files a/x.png and b/x.png differ\n")
    with pytest.raises(ModeChangeOnlyError):
        parse_patch("diff --git a/x b/x\nold mode 100644\nnew mode 100755\n")


def test_views_of_gsheets_change():
    d = parse_unified_diff(GSHEETS_DIFF)
    assert "allows_subqueries = False" in old_view(d)
    assert "allows_subqueries = True" in new_view(d)


def test_keep_only_views_equal():
    d = parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n a\n b\n")
    assert old_view(d) == new_view(d) == ["a", "b"]


def test_serialize_gsheets_change():
    expected = '[CLS] [KEEP] engine = " gsheets " [DEL] allows_subqueries = False [ADD] allows_subqueries = True'
    assert serialize_change(parse_unified_diff(GSHEETS_DIFF)) == expected.split()


def test_serialize_single_keep():
    d = parse_unified_diff("--- a/x\n+++ b/x\n@@ -1 +1 @@\n x\n")
    assert serialize_change(d) == ["[CLS]", "[KEEP]", "x"]


def test_with_message_lowercases_message():
    seq = serialize_change_with_message(parse_unified_diff(GSHEETS_DIFF), GSHEETS_MESSAGE)
    assert seq[-5:] == ["[MSG]", "enable", "subqueries", "in", "gsheetsdb"]
    assert serialize_change_with_message(parse_unified_diff(GSHEETS_DIFF), "")[-1] == MSG


def test_blank_changed_line_is_bare_marker():
    d = parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,1 +1,2 @@\n a\n+\n")
    assert serialize_change(d) == ["[CLS]", "[KEEP]", "a", "[ADD]"]


def test_multi_file_concatenation():
    patch = GSHEETS_DIFF + "--- a/y.py\n+++ b/y.py\n@@ -1 +1 @@\n-p = 1\n+p = 2\n"
    diffs = parse_patch(patch)
    assert len(diffs) == 2
    seq = serialize_change(diffs)
    assert seq.count(CLS) == 1 and seq[-4:] == ["[ADD]", "p", "=", "2"]


@pytest.mark.parametrize("seed", range(200))
def test_view_round_trip_and_marker_grouping(seed):
    rng = random.Random(seed)
    old = random_file(rng)
    new = mutate(rng, old)
    if old == new:
        new = old + ["tail = 1"]
    d = parse_unified_diff(make_patch(old, new, n=rng.randint(0, 3)))
    ov, nv = [], []
    for h in d.hunks:
        ov += old[h.old_start - 1 : h.old_start - 1 + h.old_len] if h.old_len else []
        nv += new[h.new_start - 1 : h.new_start - 1 + h.new_len] if h.new_len else []
    assert old_view(d) == ov and new_view(d) == nv
    enc = serialize_change(d)
    assert enc[0] == CLS and enc.count(CLS) == 1
    assert sum(t in LINE_MARKERS for t in enc) == len(d.lines)
    grouped = group_by_markers(enc[1:])
    assert [(kind_of_marker(m), toks) for m, toks in grouped] == [(l.kind, tokenize(l.text)) for l in d.lines]


def test_message_tokens_lowercase():
    assert message_tokens("Fix Bug") == ["fix", "bug"]
