"""Commit-record loading, quality filtering and corpus statistics."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .diff import CodeDiff, diff_token_count, message_tokens, parse_patch
from .errors import DiffParseError, RecordParseError

REQUIRED_KEYS = ("id", "project", "language", "message", "diff")
OPTIONAL_KEYS = ("old_file", "new_file", "timestamp", "labels")
LABEL_KEYS = ("defective", "quality", "old_comment", "new_comment", "review")

DEFAULT_LANGUAGES = frozenset({"Python", "Java", "JavaScript", "Go", "PHP", "Ruby", "C#", "C", "C++"})

# Segment named test/tests, stem starting with test_/Test, stem ending with _test/Test/.test.
DEFAULT_TEST_PATTERNS: tuple[str, ...] = (
    r"(?:^|/)tests?(?:/|$)",
    r"(?:^|/)(?:test_|Test)[^/]*$",
    r"(?:_test|Test|\.test)(?:\.[^./]*)?$",
)


@dataclass(frozen=True)
class CommitRecord:
    id: str
    project: str
    language: str
    message: str
    diff_text: str
    old_file: str | None = None
    new_file: str | None = None
    timestamp: float | None = None
    label_defective: bool | None = None
    label_quality: bool | None = None
    label_old_comment: str | None = None
    label_new_comment: str | None = None
    label_review: str | None = None

    @cached_property
    def diffs(self) -> list[CodeDiff]:
        return parse_patch(self.diff_text)

    @property
    def changed_paths(self) -> list[str]:
        paths: list[str] = []
        for d in self.diffs:
            for p in sorted(d.paths):
                if p not in paths:
                    paths.append(p)
        for p in (self.old_file, self.new_file):
            if p and p != "/dev/null" and p not in paths:
                paths.append(p)
        return paths

    def to_json(self) -> dict:
        obj: dict = {
            "id": self.id,
            "project": self.project,
            "language": self.language,
            "message": self.message,
            "diff": self.diff_text,
        }
        if self.old_file is not None:
            obj["old_file"] = self.old_file
        if self.new_file is not None:
            obj["new_file"] = self.new_file
        if self.timestamp is not None:
            obj["timestamp"] = self.timestamp
        labels = {
            key: getattr(self, f"label_{key}")
            for key in LABEL_KEYS
            if getattr(self, f"label_{key}") is not None
        }
        if labels:
            obj["labels"] = labels
        return obj


def serialize_commit_record(record: CommitRecord) -> str:
    return json.dumps(record.to_json(), ensure_ascii=False)


def parse_commit_record(
    line: str,
    line_number: int | None = None,
    languages: Iterable[str] | None = None,
) -> CommitRecord:
    """Parse one JSONL corpus line.

    The diff must parse; ``languages`` restricts the accepted language names.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordParseError(f"invalid JSON: {exc.msg}", line_number) from None
    if not isinstance(obj, dict):
        raise RecordParseError("record is not a JSON object", line_number)
    for key in REQUIRED_KEYS:
        if key not in obj:
            raise RecordParseError(f"missing required key {key!r}", line_number)
        if not isinstance(obj[key], str):
            raise RecordParseError(f"key {key!r} must be a string", line_number)
    unknown = set(obj) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise RecordParseError(f"unknown keys {sorted(unknown)}", line_number)
    if not obj["id"]:
        raise RecordParseError("empty id", line_number)
    if languages is not None and obj["language"] not in set(languages):
        raise RecordParseError(f"unsupported language {obj['language']!r}", line_number)

    labels = obj.get("labels") or {}
    if not isinstance(labels, dict):
        raise RecordParseError("labels must be an object", line_number)
    extra = set(labels) - set(LABEL_KEYS)
    if extra:
        raise RecordParseError(f"unknown label keys {sorted(extra)}", line_number)
    for key in ("defective", "quality"):
        if key in labels and labels[key] is not None and not isinstance(labels[key], bool):
            raise RecordParseError(f"label {key!r} must be a boolean", line_number)

    timestamp = obj.get("timestamp")
    if timestamp is not None and not isinstance(timestamp, (int, float)):
        raise RecordParseError("timestamp must be a number", line_number)

    record = CommitRecord(
        id=obj["id"],
        project=obj["project"],
        language=obj["language"],
        message=obj["message"],
        diff_text=obj["diff"],
        old_file=obj.get("old_file"),
        new_file=obj.get("new_file"),
        timestamp=timestamp,
        label_defective=labels.get("defective"),
        label_quality=labels.get("quality"),
        label_old_comment=labels.get("old_comment"),
        label_new_comment=labels.get("new_comment"),
        label_review=labels.get("review"),
    )
    try:
        record.diffs
    except DiffParseError as exc:
        raise RecordParseError(f"record {record.id!r}: {exc}", line_number) from None
    return record


def read_corpus(path: str | Path, languages: Iterable[str] | None = None) -> Iterator[CommitRecord]:
    """Yield records from a JSONL file; raise on the first bad record or duplicate id."""
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = parse_commit_record(line, n, languages)
            if record.id in seen:
                raise RecordParseError(f"duplicate id {record.id!r}", n)
            seen.add(record.id)
            yield record


def write_corpus(records: Iterable[CommitRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(serialize_commit_record(record) + "\n")
            n += 1
    return n


class RejectReason(str, Enum):
    SHORT_MESSAGE = "ShortMessage"
    LONG_DIFF = "LongDiff"
    TEST_FILE = "TestFile"
    EXCLUDED_PROJECT = "ExcludedProject"


@dataclass(frozen=True)
class FilterConfig:
    min_message_tokens_exclusive: int = 3
    max_diff_tokens: int = 100
    excluded_projects: frozenset[str] = frozenset()
    test_path_patterns: tuple[str, ...] = DEFAULT_TEST_PATTERNS

    def __post_init__(self):
        if self.min_message_tokens_exclusive < 0:
            raise ValueError("min_message_tokens_exclusive must be >= 0")
        if self.max_diff_tokens < 1:
            raise ValueError("max_diff_tokens must be >= 1")
        object.__setattr__(self, "excluded_projects", frozenset(self.excluded_projects))
        object.__setattr__(self, "test_path_patterns", tuple(self.test_path_patterns))


def is_test_file(path: str, patterns: Sequence[str] = DEFAULT_TEST_PATTERNS) -> bool:
    if not path:
        raise ValueError("path must be non-empty")
    path = path.replace("\\", "/")
    return any(re.search(p, path) for p in patterns)


def apply_filters(record: CommitRecord, cfg: FilterConfig) -> RejectReason | None:
    """Return ``None`` to keep the record, otherwise the first violated rule."""
    if len(message_tokens(record.message)) <= cfg.min_message_tokens_exclusive:
        return RejectReason.SHORT_MESSAGE
    if diff_token_count(record.diffs) > cfg.max_diff_tokens:
        return RejectReason.LONG_DIFF
    if any(is_test_file(p, cfg.test_path_patterns) for p in record.changed_paths):
        return RejectReason.TEST_FILE
    if record.project in cfg.excluded_projects:
        return RejectReason.EXCLUDED_PROJECT
    return None


@dataclass
class LanguageStats:
    projects: set[str] = field(default_factory=set)
    commit_count: int = 0
    byte_size: int = 0

    @property
    def project_count(self) -> int:
        return len(self.projects)


@dataclass
class CorpusStats:
    per_language: dict[str, LanguageStats] = field(default_factory=dict)

    def add(self, record: CommitRecord) -> None:
        st = self.per_language.setdefault(record.language, LanguageStats())
        st.projects.add(record.project)
        st.commit_count += 1
        st.byte_size += record_byte_size(record)

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        out = CorpusStats()
        for src in (self, other):
            for lang, st in src.per_language.items():
                dst = out.per_language.setdefault(lang, LanguageStats())
                dst.projects |= st.projects
                dst.commit_count += st.commit_count
                dst.byte_size += st.byte_size
        return out

    @property
    def total_commits(self) -> int:
        return sum(st.commit_count for st in self.per_language.values())

    @property
    def total_bytes(self) -> int:
        return sum(st.byte_size for st in self.per_language.values())

    @property
    def total_projects(self) -> int:
        return sum(st.project_count for st in self.per_language.values())

    def to_json(self) -> dict:
        return {
            "languages": {
                lang: {
                    "project_count": st.project_count,
                    "commit_count": st.commit_count,
                    "byte_size": st.byte_size,
                }
                for lang, st in sorted(self.per_language.items())
            },
            "total": {
                "project_count": self.total_projects,
                "commit_count": self.total_commits,
                "byte_size": self.total_bytes,
            },
        }


def record_byte_size(record: CommitRecord) -> int:
    """UTF-8 size of the commit's diff plus message."""
    return len(record.diff_text.encode("utf-8")) + len(record.message.encode("utf-8"))


def corpus_stats(records: Iterable[CommitRecord]) -> CorpusStats:
    stats = CorpusStats()
    for record in records:
        stats.add(record)
    return stats

