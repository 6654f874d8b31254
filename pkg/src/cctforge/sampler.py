"""Sample generators for the five pre-training objectives.

Every sample is a pure function of (record, config, seed, task): the
per-sample RNG is derived by hashing those values, so regeneration is
reproducible and independent of record order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

from .corpus import CommitRecord
from .dataflow import build_cdg_input, extract_dataflow
from .diff import encoded_lines, message_tokens, new_view, old_view, serialize_change
from .errors import DataError, SampleGenerationError
from .tokens import ADD, CLS, MASK, MSG, SPECIAL_SET, Vocabulary


class Task(str, Enum):
    MLM4CC = "mlm4cc"
    MLM4CM = "mlm4cm"
    NL2PL = "nl2pl"
    PL2NL = "pl2nl"
    CDG = "cdg"

    @classmethod
    def parse(cls, name: str) -> "Task":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown pre-training task {name!r}") from None


ALL_TASKS: tuple[Task, ...] = tuple(Task)


@dataclass(frozen=True)
class SamplerConfig:
    line_mask_rate: float = 0.15
    token_mask_rate: float = 0.15
    replace_mask_p: float = 0.80
    replace_random_p: float = 0.10
    keep_p: float = 0.10
    enabled_tasks: frozenset[Task] = frozenset(ALL_TASKS)
    epoch_reseed: bool = True

    def __post_init__(self):
        for name in ("line_mask_rate", "token_mask_rate"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        probs = (self.replace_mask_p, self.replace_random_p, self.keep_p)
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ValueError("replacement probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "enabled_tasks", frozenset(Task(t) for t in self.enabled_tasks))


@dataclass(frozen=True)
class PretrainSample:
    task: Task
    input_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    record_id: str
    seed: int
    # Positions of perturbed/masked slots in input_tokens, kept for analysis only.
    masked_positions: tuple[int, ...] = field(default=(), compare=False)
    branches: tuple[str, ...] = field(default=(), compare=False)

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "record_id": self.record_id,
            "input": list(self.input_tokens),
            "target": list(self.target_tokens),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PretrainSample":
        return cls(Task(obj["task"]), tuple(obj["input"]), tuple(obj["target"]), obj["record_id"], obj["seed"])


def sample_seed(seed: int, record_id: str, task: Task, epoch: int = 0) -> int:
    """64-bit seed for one (record, task) draw."""
    key = f"{seed}\x1f{record_id}\x1f{task.value}\x1f{epoch}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def mask_count(rate: float, n: int) -> int:
    # Rounding first keeps e.g. 0.15 * 100 from ceiling to 16.
    return math.ceil(round(rate * n, 9))


def _assemble(lines: Sequence[tuple[str, list[str]]], masked: set[int], msg: Sequence[str] | None):
    tokens = [CLS]
    positions = []
    for i, (marker, code) in enumerate(lines):
        tokens.append(marker)
        if i in masked:
            positions.append(len(tokens))
            tokens.append(MASK)
        else:
            tokens.extend(code)
    if msg is not None:
        tokens.append(MSG)
        tokens.extend(msg)
    return tokens, positions


def make_mlm4cc(record: CommitRecord, cfg: SamplerConfig, rng: random.Random, seed: int = 0) -> PretrainSample:
    lines = encoded_lines(record.diffs)
    if not lines:
        raise SampleGenerationError(f"{record.id}: empty diff")
    k = mask_count(cfg.line_mask_rate, len(lines))
    chosen = sorted(rng.sample(range(len(lines)), k))
    tokens, positions = _assemble(lines, set(chosen), message_tokens(record.message))
    target: list[str] = []
    for i in chosen:
        marker, code = lines[i]
        target.append(marker)
        target.extend(code)
    return PretrainSample(Task.MLM4CC, tuple(tokens), tuple(target), record.id, seed, tuple(positions))


def _random_pool(vocab: Vocabulary | None, record: CommitRecord) -> Sequence[str]:
    if vocab is not None and vocab.regular_tokens:
        return vocab.regular_tokens
    # No vocabulary supplied: draw from the record's own tokens.
    pool = sorted({t for t in serialize_change(record.diffs) + message_tokens(record.message) if t not in SPECIAL_SET})
    return pool or ["[UNK]"]


def make_mlm4cm(
    record: CommitRecord,
    cfg: SamplerConfig,
    rng: random.Random,
    vocab: Vocabulary | None = None,
    seed: int = 0,
) -> PretrainSample:
    msg = message_tokens(record.message)
    if not msg:
        raise SampleGenerationError(f"{record.id}: empty commit message")
    prefix = serialize_change(record.diffs) + [MSG]
    k = mask_count(cfg.token_mask_rate, len(msg))
    chosen = sorted(rng.sample(range(len(msg)), k))
    pool = _random_pool(vocab, record)
    perturbed = list(msg)
    branches = []
    for i in chosen:
        u = rng.random()
        if u < cfg.replace_mask_p:
            perturbed[i] = MASK
            branches.append("mask")
        elif u < cfg.replace_mask_p + cfg.replace_random_p:
            perturbed[i] = pool[rng.randrange(len(pool))]
            branches.append("random")
        else:
            branches.append("keep")
    target = tuple(msg[i] for i in chosen)
    positions = tuple(len(prefix) + i for i in chosen)
    return PretrainSample(
        Task.MLM4CM, tuple(prefix + perturbed), target, record.id, seed, positions, tuple(branches)
    )


def make_nl2pl(record: CommitRecord, seed: int = 0) -> PretrainSample:
    lines = encoded_lines(record.diffs)
    added = {i for i, (marker, _) in enumerate(lines) if marker == ADD}
    if not added:
        raise SampleGenerationError(f"{record.id}: diff has no added lines")
    tokens, positions = _assemble(lines, added, message_tokens(record.message))
    target: list[str] = []
    for i in sorted(added):
        target.append(ADD)
        target.extend(lines[i][1])
    return PretrainSample(Task.NL2PL, tuple(tokens), tuple(target), record.id, seed, tuple(positions))


def make_pl2nl(record: CommitRecord, seed: int = 0) -> PretrainSample:
    msg = message_tokens(record.message)
    if not msg:
        raise SampleGenerationError(f"{record.id}: empty commit message")
    return PretrainSample(Task.PL2NL, tuple(serialize_change(record.diffs)), tuple(msg), record.id, seed)


def make_cdg(record: CommitRecord, seed: int = 0) -> PretrainSample:
    old_code = old_view(record.diffs)
    new_code = new_view(record.diffs)
    source = build_cdg_input(old_code, extract_dataflow(old_code), extract_dataflow(new_code))
    target = serialize_change(record.diffs)[1:]
    return PretrainSample(Task.CDG, tuple(source), tuple(target), record.id, seed)


def make_sample(
    record: CommitRecord,
    task: Task,
    cfg: SamplerConfig,
    seed: int,
    vocab: Vocabulary | None = None,
    epoch: int = 0,
) -> PretrainSample:
    s = sample_seed(seed, record.id, task, epoch if cfg.epoch_reseed else 0)
    if task is Task.MLM4CC:
        return make_mlm4cc(record, cfg, random.Random(s), seed=s)
    if task is Task.MLM4CM:
        return make_mlm4cm(record, cfg, random.Random(s), vocab, seed=s)
    if task is Task.NL2PL:
        return make_nl2pl(record, seed=s)
    if task is Task.PL2NL:
        return make_pl2nl(record, seed=s)
    return make_cdg(record, seed=s)


def record_samples(
    record: CommitRecord,
    cfg: SamplerConfig,
    seed: int,
    vocab: Vocabulary | None = None,
    epoch: int = 0,
) -> list[PretrainSample]:
    """One sample per enabled task whose precondition holds, in task order."""
    out = []
    for task in ALL_TASKS:
        if task not in cfg.enabled_tasks:
            continue
        try:
            out.append(make_sample(record, task, cfg, seed, vocab, epoch))
        except DataError:
            continue
    return out


def interleave(per_record: Iterable[Sequence[PretrainSample]]) -> Iterator[PretrainSample]:
    """Round-robin over tasks: one sample of each task in turn until all queues drain."""
    queues: dict[Task, list[PretrainSample]] = {t: [] for t in ALL_TASKS}
    for samples in per_record:
        for s in samples:
            queues[s.task].append(s)
    depth = max((len(q) for q in queues.values()), default=0)
    for i in range(depth):
        for task in ALL_TASKS:
            if i < len(queues[task]):
                yield queues[task][i]


def build_epoch(
    records: Iterable[CommitRecord],
    cfg: SamplerConfig,
    seed: int,
    vocab: Vocabulary | None = None,
    epoch: int = 0,
    workers: int = 1,
) -> Iterator[PretrainSample]:
    records = list(records)
    if workers > 1 and len(records) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_record = list(
                pool.map(_record_samples_job, [(r, cfg, seed, vocab, epoch) for r in records], chunksize=16)
            )
    else:
        per_record = [record_samples(r, cfg, seed, vocab, epoch) for r in records]
    return interleave(per_record)


def _record_samples_job(args) -> list[PretrainSample]:
    return record_samples(*args)


def write_samples(samples: Iterable[PretrainSample], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_samples(path) -> list[PretrainSample]:
    with open(path, encoding="utf-8") as fh:
        return [PretrainSample.from_json(json.loads(line)) for line in fh if line.strip()]
