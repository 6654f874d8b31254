"""Synthetic commit corpora for tests, smoke runs and the bundled fixture.

Files are short programs in the assignment language understood by
:mod:`cctforge.dataflow`; each commit edits one file and carries every
downstream label so one corpus can drive all task harnesses.
"""

from __future__ import annotations

import difflib
import random
import re
from dataclasses import replace

from .corpus import CommitRecord

LANGUAGES = {
    "Python": (".py", ""),
    "Java": (".java", ";"),
    "JavaScript": (".js", ";"),
    "Go": (".go", ""),
    "PHP": (".php", ";"),
    "Ruby": (".rb", ""),
}
NAMES = [
    "count", "total", "index", "limit", "offset", "buffer", "result", "value",
    "cache", "size", "width", "height", "score", "delta", "timeout", "retries",
    "engine", "config", "items", "status", "path", "name", "level", "ratio",
]
FUNCS = ["compute", "load", "parse", "fetch", "merge", "clamp", "scale", "lookup"]
MODULES = ["core", "utils", "engine", "loader", "parser", "service", "handler", "model"]


def _expr(rng: random.Random, defined: list[str]) -> str:
    roll = rng.random()
    if defined and roll < 0.35:
        return f"{rng.choice(defined)} + {rng.randint(1, 9)}"
    if len(defined) >= 2 and roll < 0.6:
        a, b = rng.sample(defined, 2)
        return f"{rng.choice(FUNCS)}({a}, {b})"
    if roll < 0.8:
        return str(rng.randint(0, 99))
    return f'"{rng.choice(NAMES)}"'


def random_program(rng: random.Random, n_lines: int, suffix: str = "") -> list[str]:
    defined: list[str] = []
    lines = []
    for _ in range(n_lines):
        name = rng.choice(NAMES)
        lines.append(f"{name} = {_expr(rng, defined)}{suffix}")
        if name not in defined:
            defined.append(name)
    return lines


def unified_diff(old: list[str], new: list[str], path: str, context: int = 1) -> str:
    body = difflib.unified_diff(old, new, f"a/{path}", f"b/{path}", n=context, lineterm="")
    return "\n".join(body) + "\n"


def make_commit(rng: random.Random, index: int, project: str, language: str) -> CommitRecord:
    ext, suffix = LANGUAGES[language]
    module = rng.choice(MODULES)
    path = f"{project}/src/{module}{ext}"
    old = random_program(rng, rng.randint(6, 10), suffix)
    new = list(old)
    pos = rng.randrange(len(old))
    target = old[pos].split(" = ", 1)[0]
    kind = rng.choice(["rename", "update", "insert", "delete", "none"])
    defective = kind == "none"
    if kind == "rename":
        fresh = rng.choice([n for n in NAMES if n != target])
        new = [re.sub(rf"\b{target}\b", fresh, line) for line in old]
        message = f"rename {target} to {fresh} in {module}"
        old_comment, new_comment = f"returns the {target} value", f"returns the {fresh} value"
        review = f"is {fresh} a clearer name than {target} here ?"
    elif kind == "update":
        new[pos] = f"{target} = {_expr(rng, [l.split(' = ')[0] for l in old[:pos]])}{suffix}"
        if new[pos] == old[pos]:
            new[pos] = f"{target} = {rng.randint(100, 999)}{suffix}"
        message = f"update how {target} is computed in {module}"
        old_comment, new_comment = f"computes {target} once", f"computes {target} from its inputs"
        review = f"please double check the new {target} computation"
    elif kind == "insert":
        fresh = rng.choice(NAMES)
        new.insert(pos + 1, f"{fresh} = {target} + {rng.randint(1, 9)}{suffix}")
        message = f"add {fresh} derived from {target} to {module}"
        old_comment, new_comment = f"sets {target}", f"sets {target} and {fresh}"
        review = f"should {fresh} be validated before use ?"
    elif kind == "delete" and len(old) > 1:
        del new[pos]
        message = f"remove unused {target} assignment from {module}"
        old_comment, new_comment = f"keeps {target} around", f"no longer keeps {target}"
        review = f"make sure nothing else still reads {target}"
    else:
        defective = True
        new[pos] = f"{target} = None{suffix}"
        message = f"reset {target} before reuse in {module}"
        old_comment, new_comment = f"initialises {target}", f"clears {target}"
        review = f"setting {target} to None may break callers"
    if new == old:
        new[pos] = f"{target} = None{suffix}"
        defective = True
    return CommitRecord(
        id=f"{project}-{index:05d}",
        project=project,
        language=language,
        message=message,
        diff_text=unified_diff(old, new, path),
        new_file=path,
        timestamp=1_600_000_000 + index * 3600 + rng.randint(0, 1800),
        label_defective=defective,
        label_quality=not defective and kind != "delete",
        label_old_comment=old_comment,
        label_new_comment=new_comment,
        label_review=review,
    )


def synthetic_corpus(n: int, seed: int = 0, n_projects: int = 6) -> list[CommitRecord]:
    rng = random.Random(seed)
    langs = list(LANGUAGES)
    projects = [(f"proj{p}", langs[p % len(langs)]) for p in range(n_projects)]
    records = []
    for i in range(n):
        project, language = projects[i % n_projects]
        records.append(make_commit(rng, i, project, language))
    return records


def with_message(record: CommitRecord, message: str) -> CommitRecord:
    return replace(record, message=message)


def fixture_corpus(n: int = 300, seed: int = 2024) -> list[CommitRecord]:
    """The bundled fixture: a synthetic corpus with a few records the default filters drop."""
    records = synthetic_corpus(n, seed)
    rng = random.Random(seed + 1)
    for j, i in enumerate(rng.sample(range(n), 12)):
        r = records[i]
        slot = j % 3
        if slot == 0:
            records[i] = replace(r, message="fix")
        elif slot == 1:
            path = r.new_file.replace("/src/", "/tests/")
            records[i] = replace(r, diff_text=r.diff_text.replace(r.new_file, path), new_file=path)
        else:
            old = random_program(rng, 40)
            new = [line + " + 1" for line in old]
            records[i] = replace(r, diff_text=unified_diff(old, new, r.new_file))
    return records
