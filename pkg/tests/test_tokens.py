"""Tokenizer and vocabulary behaviour."""

import string

from hypothesis import given, settings
from hypothesis import strategies as st

from cctforge.tokens import (
    SPECIAL_TOKENS,
    UNK,
    build_vocab,
    decode,
    detokenize,
    encode,
    tokenize,
    tokenize_with_whitespace,
)
import pytest

text_st = st.text(alphabet=string.ascii_letters + string.digits + " \t\n_=+-()\"'.,", max_size=60)


def test_tokenize_code_line():
    assert tokenize("allows_subqueries = False") == ["allows_subqueries", "=", "False"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_special_tokens_kept_whole():
    assert tokenize("[ADD] x=1") == ["[ADD]", "x", "=", "1"]
    assert tokenize("[add]") == ["[", "add", "]"]


@settings(max_examples=300)
@given(text_st)
def test_whitespace_round_trip(text):
    tokens, spacing = tokenize_with_whitespace(text)
    assert tokens == tokenize(text)
    assert detokenize(tokens, spacing) == text


@given(text_st)
def test_tokens_have_no_whitespace(text):
    assert all(not any(c.isspace() for c in t) for t in tokenize(text))


def test_empty_vocab_has_only_specials():
    vocab = build_vocab([])
    assert vocab.itos == tuple(SPECIAL_TOKENS)
    assert len(vocab) == 12


def test_min_freq_threshold():
    vocab = build_vocab(["a", "a", "b"], min_freq=2)
    assert "a" in vocab and "b" not in vocab


def test_frequency_then_lexicographic_order():
    vocab = build_vocab([["b", "c", "a", "c"]])
    assert vocab.regular_tokens == ("c", "a", "b")


def test_vocab_stable_across_builds(tmp_path):
    corpus = [tokenize("x = y + z"), tokenize("y = x * 2")]
    build_vocab(corpus).save(tmp_path / "a.txt")
    build_vocab(corpus).save(tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_vocab_save_load(tmp_path):
    vocab = build_vocab([tokenize("if a then b")])
    vocab.save(tmp_path / "v.txt")
    assert type(vocab).load(tmp_path / "v.txt").itos == vocab.itos


def test_encode_registry_and_unknown():
    vocab = build_vocab([["a"]])
    assert encode(["[CLS]"], vocab) == [0]
    assert encode(["zzz"], vocab) == [vocab.id_of(UNK)]


def test_decode_out_of_range():
    with pytest.raises(IndexError):
        decode([999], build_vocab([]))


@given(st.lists(st.sampled_from(["a", "b", "c", "d", "[MASK]", "[SEP]"]), max_size=30))
def test_decode_encode_identity(seq):
    vocab = build_vocab([["a", "b", "c", "d"]])
    assert decode(encode(seq, vocab), vocab) == seq
