import random
import re

from hypothesis import given
from hypothesis import strategies as st

from cctforge.dataflow import (
    KEYWORDS,
    DataFlowGraph,
    VarOccurrence,
    build_cdg_input,
    extract_dataflow,
    serialize_edges,
)
from cctforge.diff import old_view, parse_unified_diff
from cctforge.synth import random_program
from cctforge.tokens import CLS, EDGE, SEP, tokenize

from conftest import GSHEETS_DIFF


def occ(line, tok, name):
    return VarOccurrence(line, tok, name)


def oracle_edges(lines):
    """Straight re-statement of the rules on plain `NAME = expr` lines."""
    defs = {}
    edges = set()
    for li, line in enumerate(lines):
        toks = re.findall(r"\w+|\S", line)
        assign = len(toks) >= 2 and toks[1] == "=" and re.match(r"[A-Za-z_]\w*$", toks[0]) and toks[0] not in KEYWORDS
        start = 2 if assign else 0
        in_str = False
        for j in range(start, len(toks)):
            t = toks[j]
            if t == '"':
                in_str = not in_str
                continue
            if in_str or t in KEYWORDS or not re.match(r"[A-Za-z_]\w*$", t):
                continue
            if j + 1 < len(toks) and toks[j + 1] == "(":
                continue
            if t in defs:
                edges.add(((li, j, t), defs[t]))
            if assign:
                edges.add(((li, j, t), (li, 0, toks[0])))
        if assign:
            defs[toks[0]] = (li, 0, toks[0])
    return edges


def as_set(graph):
    return {((u.line_index, u.token_index, u.name), (s.line_index, s.token_index, s.name)) for u, s in graph.edges}


def test_simple_chain():
    g = extract_dataflow(["a = 1", "b = a"])
    assert set(g.edges) == {(occ(1, 2, "a"), occ(0, 0, "a")), (occ(1, 2, "a"), occ(1, 0, "b"))}


def test_literal_only():
    assert len(extract_dataflow(["x = 1"])) == 0


def test_use_before_definition():
    g = extract_dataflow(["y = z", "z = 2"])
    assert all(src.name != "z" for _, src in g.edges)


def test_matches_rule_oracle_on_random_programs():
    rng = random.Random(11)
    for _ in range(300):
        lines = random_program(rng, rng.randint(1, 12))
        assert as_set(extract_dataflow(lines)) == oracle_edges(lines)


def test_edges_reference_real_tokens_and_order():
    rng = random.Random(2)
    for _ in range(100):
        lines = random_program(rng, 8)
        for use, src in extract_dataflow(lines).edges:
            assert tokenize(lines[use.line_index])[use.token_index] == use.name
            assert tokenize(lines[src.line_index])[src.token_index] == src.name
            assert src.position < use.position or (src.line_index == use.line_index and src.token_index == 0)


def test_rename_gives_isomorphic_graph():
    rng = random.Random(4)
    for _ in range(50):
        lines = random_program(rng, 8)
        renamed = [re.sub(r"\bcount\b", "tally", l) for l in lines]
        a, b = extract_dataflow(lines).edges, extract_dataflow(renamed).edges
        assert [(u.position, s.position) for u, s in a] == [(u.position, s.position) for u, s in b]


def test_serialize_edges():
    g = extract_dataflow(["a = 1", "b = a"])
    assert serialize_edges(g) == ["a", "a", EDGE, "a", "b"]
    assert serialize_edges(DataFlowGraph()) == []


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("xyz")), max_size=12))
def test_edge_token_count(pairs):
    g = DataFlowGraph(tuple((occ(1, i, u), occ(0, i, s)) for i, (u, s) in enumerate(pairs)))
    k = len(pairs)
    assert len(serialize_edges(g)) == (3 * k - 1 if k else 0)


def test_cdg_input_for_gsheets_change():
    old = old_view(parse_unified_diff(GSHEETS_DIFF))
    old_df = extract_dataflow(old)
    assert len(old_df) == 0
    seq = build_cdg_input(old, old_df, DataFlowGraph())
    assert seq[0] == CLS and seq[-2:] == [SEP, SEP]
    assert "allows_subqueries" in seq


def test_cdg_input_empty():
    assert build_cdg_input([], DataFlowGraph(), DataFlowGraph()) == [CLS, SEP, SEP]
