"""Unified-diff parsing and the marker-token change encoding.

A commit's diff text may cover several files; :func:`parse_patch` returns
one :class:`CodeDiff` per file in export order and every encoding helper
accepts either a single diff or such a list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

from .errors import BinaryPatchError, DiffParseError, EmptyDiffError, ModeChangeOnlyError
from .tokens import ADD, CLS, DEL, KEEP, LINE_MARKERS, MSG, tokenize


class LineKind(str, Enum):
    ADD = "add"
    DEL = "del"
    KEEP = "keep"

    @property
    def marker(self) -> str:
        return _MARKER_OF[self]


_MARKER_OF = {LineKind.ADD: ADD, LineKind.DEL: DEL, LineKind.KEEP: KEEP}
_KIND_OF_MARKER = {v: k for k, v in _MARKER_OF.items()}
_KIND_OF_PREFIX = {"+": LineKind.ADD, "-": LineKind.DEL, " ": LineKind.KEEP}

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$")
_GIT_HEADER_RE = re.compile(r"^diff --git (\S+) (\S+)")
_META_PREFIXES = (
    "index ",
    "similarity index",
    "dissimilarity index",
    "rename from",
    "rename to",
    "copy from",
    "copy to",
    "new file mode",
    "deleted file mode",
)
_MODE_PREFIXES = ("old mode", "new mode")


@dataclass(frozen=True)
class DiffLine:
    kind: LineKind
    text: str


@dataclass(frozen=True)
class DiffHunk:
    old_start: int
    old_len: int
    new_start: int
    new_len: int
    lines: tuple[DiffLine, ...]

    def __post_init__(self):
        if not self.lines:
            raise DiffParseError("hunk has no lines")
        n_keep = sum(1 for ln in self.lines if ln.kind is LineKind.KEEP)
        n_del = sum(1 for ln in self.lines if ln.kind is LineKind.DEL)
        n_add = len(self.lines) - n_keep - n_del
        if n_del + n_keep != self.old_len or n_add + n_keep != self.new_len:
            raise DiffParseError(
                f"hunk {self.header}: body has {n_del + n_keep} old / {n_add + n_keep} new lines"
            )

    @property
    def header(self) -> str:
        return f"@@ -{self.old_start},{self.old_len} +{self.new_start},{self.new_len} @@"


@dataclass(frozen=True)
class CodeDiff:
    old_path: str
    new_path: str
    hunks: tuple[DiffHunk, ...]

    def __post_init__(self):
        for prev, cur in zip(self.hunks, self.hunks[1:]):
            if cur.old_start <= prev.old_start or cur.old_start < prev.old_start + prev.old_len:
                raise DiffParseError(f"hunk {cur.header} overlaps or precedes hunk {prev.header}")

    @property
    def lines(self) -> list[DiffLine]:
        return [ln for h in self.hunks for ln in h.lines]

    @property
    def paths(self) -> set[str]:
        return {p for p in (self.old_path, self.new_path) if p and p != "/dev/null"}


DiffLike = Union[CodeDiff, Sequence[CodeDiff]]


def _as_list(diff: DiffLike) -> Sequence[CodeDiff]:
    return [diff] if isinstance(diff, CodeDiff) else diff


def _strip_prefix(path: str) -> str:
    path = path.split("\t", 1)[0].strip()
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


class _FileSection:
    def __init__(self, old_path: str = "", new_path: str = ""):
        self.old_path = old_path
        self.new_path = new_path
        self.hunks: list[DiffHunk] = []
        self.mode_change = False

    def finish(self) -> CodeDiff:
        name = self.new_path or self.old_path or "<unnamed>"
        if not self.hunks:
            if self.mode_change:
                raise ModeChangeOnlyError(f"{name}: mode change without content hunks")
            raise EmptyDiffError(f"{name}: diff contains no hunks")
        return CodeDiff(self.old_path, self.new_path, tuple(self.hunks))


def parse_patch(text: str) -> list[CodeDiff]:
    """Parse diff text that may span several files.

    Raises :class:`DiffParseError` (or one of its subclasses) for malformed
    headers, inconsistent hunk lengths, binary patches, mode-only changes and
    diffs without any hunk.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    files: list[CodeDiff] = []
    section: _FileSection | None = None
    i = 0
    while i < len(lines):
        line = lines[i]
        git = _GIT_HEADER_RE.match(line)
        if git:
            if section is not None:
                files.append(section.finish())
            section = _FileSection(_strip_prefix(git.group(1)), _strip_prefix(git.group(2)))
            i += 1
            continue
        if line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            raise BinaryPatchError(f"binary patch not supported: {line!r}")
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            old_path = _strip_prefix(line[4:])
            new_path = _strip_prefix(lines[i + 1][4:])
            if section is None or section.hunks:
                if section is not None:
                    files.append(section.finish())
                section = _FileSection(old_path, new_path)
            else:
                section.old_path, section.new_path = old_path, new_path
            i += 2
            continue
        if line.startswith(_MODE_PREFIXES):
            if section is None:
                section = _FileSection()
            section.mode_change = True
            i += 1
            continue
        if line.startswith(_META_PREFIXES):
            i += 1
            continue
        if line.startswith("@@"):
            if section is None:
                section = _FileSection()
            hunk, i = _parse_hunk(lines, i, len(section.hunks))
            section.hunks.append(hunk)
            continue
        if section is not None and section.hunks and line[:1] in ("+", "-", " "):
            raise DiffParseError(
                f"hunk {section.hunks[-1].header}: line {i + 1} lies outside the declared hunk length"
            )
        # Free text before the first header (e.g. a commit preamble) is ignored.
        i += 1

    if section is not None:
        files.append(section.finish())
    if not files:
        raise EmptyDiffError("diff contains no hunks")
    return files


def _parse_hunk(lines: list[str], i: int, index: int) -> tuple[DiffHunk, int]:
    header = lines[i]
    m = _HUNK_RE.match(header)
    if not m:
        raise DiffParseError(f"hunk #{index + 1}: malformed header {header!r}")
    old_start, new_start = int(m.group(1)), int(m.group(3))
    old_len = int(m.group(2)) if m.group(2) is not None else 1
    new_len = int(m.group(4)) if m.group(4) is not None else 1
    old_left, new_left = old_len, new_len
    body: list[DiffLine] = []
    i += 1
    while old_left > 0 or new_left > 0:
        if i >= len(lines):
            raise DiffParseError(f"hunk {header!r}: diff ends before the declared hunk length")
        raw = lines[i]
        if raw.startswith("\\"):
            i += 1
            continue
        # Some tools strip the single space off blank context lines.
        kind = _KIND_OF_PREFIX.get(raw[:1], LineKind.KEEP if raw == "" else None)
        if kind is None:
            raise DiffParseError(f"hunk {header!r}: unexpected line {raw!r}")
        if kind is not LineKind.ADD:
            old_left -= 1
        if kind is not LineKind.DEL:
            new_left -= 1
        if old_left < 0 or new_left < 0:
            raise DiffParseError(f"hunk {header!r}: body longer than declared lengths")
        body.append(DiffLine(kind, raw[1:]))
        i += 1
    while i < len(lines) and lines[i].startswith("\\"):
        i += 1
    if not body:
        raise DiffParseError(f"hunk {header!r}: empty hunk")
    return DiffHunk(old_start, old_len, new_start, new_len, tuple(body)), i


def parse_unified_diff(text: str) -> CodeDiff:
    """Parse a single-file unified diff."""
    files = parse_patch(text)
    if len(files) != 1:
        raise DiffParseError(f"expected a single-file diff, found {len(files)} files")
    return files[0]


def old_view(diff: DiffLike) -> list[str]:
    return [ln.text for d in _as_list(diff) for ln in d.lines if ln.kind is not LineKind.ADD]


def new_view(diff: DiffLike) -> list[str]:
    return [ln.text for d in _as_list(diff) for ln in d.lines if ln.kind is not LineKind.DEL]


def encoded_lines(diff: DiffLike) -> list[tuple[str, list[str]]]:
    """(marker, code tokens) for every diff line, in order."""
    return [(ln.kind.marker, tokenize(ln.text)) for d in _as_list(diff) for ln in d.lines]


def diff_token_count(diff: DiffLike) -> int:
    """Number of code tokens in hunk payload lines (markers and headers excluded)."""
    return sum(len(toks) for _, toks in encoded_lines(diff))


def serialize_change(diff: DiffLike) -> list[str]:
    tokens = [CLS]
    for marker, code in encoded_lines(diff):
        tokens.append(marker)
        tokens.extend(code)
    return tokens


def message_tokens(message: str) -> list[str]:
    """Commit-message tokens; messages are always case-folded."""
    return tokenize(message, lowercase=True)


def serialize_change_with_message(diff: DiffLike, message: str) -> list[str]:
    return serialize_change(diff) + [MSG] + message_tokens(message)


def group_by_markers(tokens: Iterable[str]) -> list[tuple[str, list[str]]]:
    """Split a marker-prefixed token stream back into (marker, code tokens) lines.

    A leading ``[CLS]`` is skipped; anything after a ``[MSG]`` is ignored.
    """
    lines: list[tuple[str, list[str]]] = []
    for tok in tokens:
        if tok == CLS and not lines:
            continue
        if tok == MSG:
            break
        if tok in LINE_MARKERS:
            lines.append((tok, []))
        elif not lines:
            raise ValueError(f"token {tok!r} precedes the first line marker")
        else:
            lines[-1][1].append(tok)
    return lines


def kind_of_marker(marker: str) -> LineKind:
    return _KIND_OF_MARKER[marker]
