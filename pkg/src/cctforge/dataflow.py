"""Def-use ("where the value comes from") edges for a small assignment language.

Each line is tokenized on its own. A line of the form ``IDENT = expr``
defines ``IDENT``. Every identifier inside the right-hand side (or anywhere
on a non-assignment line) is a use, except call names directly followed by
``(``, keywords/literals and words inside string quotes. A use gets an
edge to the most recent earlier definition of the same name, and every
right-hand-side use also gets an edge to the definition on its own line.
Anything that does not fit the pattern degrades to fewer edges.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .tokens import CLS, EDGE, SEP, tokenize

_IDENT_RE = re.compile(r"[A-Za-z_]\w*$")
_QUOTES = frozenset({'"', "'", "`"})

KEYWORDS = frozenset(
    {
        # literals
        "True", "False", "None", "true", "false", "null", "nil", "undefined",
        # keywords shared by the corpus languages
        "and", "or", "not", "in", "is", "if", "else", "elif", "for", "while",
        "return", "lambda", "new", "def", "class", "import", "from", "as",
        "yield", "await", "async", "function", "var", "let", "const", "typeof",
        "instanceof", "pass", "break", "continue", "del", "global", "nonlocal",
        "try", "except", "finally", "raise", "with", "assert", "func", "go",
        "defer", "switch", "case", "default", "do", "throw", "throws", "catch",
        "public", "private", "protected", "static", "final", "void", "end",
    }
)


@dataclass(frozen=True, order=True)
class VarOccurrence:
    line_index: int
    token_index: int
    name: str

    @property
    def position(self) -> tuple[int, int]:
        return (self.line_index, self.token_index)


@dataclass(frozen=True)
class DataFlowGraph:
    edges: tuple[tuple[VarOccurrence, VarOccurrence], ...] = ()

    def __len__(self) -> int:
        return len(self.edges)


def _is_variable(tokens: list[str], j: int, in_string: bool) -> bool:
    tok = tokens[j]
    if in_string or tok in KEYWORDS or not _IDENT_RE.match(tok):
        return False
    return not (j + 1 < len(tokens) and tokens[j + 1] == "(")


def _uses(tokens: list[str], start: int) -> list[int]:
    """Token indices of variable uses in ``tokens[start:]``."""
    found = []
    quote: str | None = None
    for j in range(start, len(tokens)):
        tok = tokens[j]
        if tok in _QUOTES:
            if quote is None:
                quote = tok
            elif tok == quote:
                quote = None
            continue
        if _is_variable(tokens, j, quote is not None):
            found.append(j)
    return found


def _assignment_target(tokens: list[str]) -> bool:
    return (
        len(tokens) >= 2
        and tokens[1] == "="
        and (len(tokens) == 2 or tokens[2] != "=")
        and tokens[0] not in KEYWORDS
        and bool(_IDENT_RE.match(tokens[0]))
    )


def extract_dataflow(code_lines: Sequence[str]) -> DataFlowGraph:
    last_def: dict[str, VarOccurrence] = {}
    edges: list[tuple[VarOccurrence, VarOccurrence]] = []
    for li, line in enumerate(code_lines):
        tokens = tokenize(line)
        is_assign = _assignment_target(tokens)
        lhs = VarOccurrence(li, 0, tokens[0]) if is_assign else None
        for j in _uses(tokens, 2 if is_assign else 0):
            use = VarOccurrence(li, j, tokens[j])
            prior = last_def.get(use.name)
            if prior is not None:
                edges.append((use, prior))
            if lhs is not None:
                edges.append((use, lhs))
        # The definition takes effect after its right-hand side is evaluated.
        if lhs is not None:
            last_def[lhs.name] = lhs
    edges.sort(key=lambda e: (e[0].position, e[1].position))
    return DataFlowGraph(tuple(edges))


def serialize_edges(graph: DataFlowGraph) -> list[str]:
    out: list[str] = []
    for k, (use, src) in enumerate(graph.edges):
        if k:
            out.append(EDGE)
        out.extend((use.name, src.name))
    return out


def build_cdg_input(old_code: Sequence[str], old_df: DataFlowGraph, new_df: DataFlowGraph) -> list[str]:
    tokens = [CLS]
    for line in old_code:
        tokens.extend(tokenize(line))
    tokens.append(SEP)
    tokens.extend(serialize_edges(old_df))
    tokens.append(SEP)
    tokens.extend(serialize_edges(new_df))
    return tokens
