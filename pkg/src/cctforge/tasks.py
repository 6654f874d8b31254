"""Downstream task datasets, splits, fine-tuning, evaluation and ablation runs."""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import torch

from .corpus import CommitRecord
from .diff import message_tokens, serialize_change
from .errors import DataError
from .metrics import (
    MetricReport,
    auc,
    bleu_bnorm,
    exact_match_accuracy,
    f1_binary,
    gleu,
    write_reports,
)
from .model import (
    CLASSIFICATION_LR,
    EOS_ID,
    PRETRAIN_LR,
    ModelConfig,
    Seq2Seq,
    TrainConfig,
    classification_loss,
    classify,
    greedy_decode,
    make_optimizer,
    seq2seq_loss,
    train_step,
)
from .sampler import ALL_TASKS, SamplerConfig, Task, build_epoch
from .tokens import SEP, Vocabulary, decode, encode, tokenize

log = logging.getLogger(__name__)


class TaskKind(str, Enum):
    GENERATION = "generation"
    CLASSIFICATION = "classification"


class DownstreamTask(str, Enum):
    COMMIT_MSG_GEN = "commit-msg"
    COMMENT_UPDATE = "comment-update"
    DEFECT_PREDICT = "defect"
    QUALITY_ESTIMATE = "quality"
    REVIEW_GEN = "review"

    @classmethod
    def parse(cls, name: str) -> "DownstreamTask":
        aliases = {
            "commit-message": cls.COMMIT_MSG_GEN,
            "commitmsggen": cls.COMMIT_MSG_GEN,
            "commentupdate": cls.COMMENT_UPDATE,
            "defect-predict": cls.DEFECT_PREDICT,
            "defectpredict": cls.DEFECT_PREDICT,
            "quality-estimate": cls.QUALITY_ESTIMATE,
            "qualityestimate": cls.QUALITY_ESTIMATE,
            "review-gen": cls.REVIEW_GEN,
            "reviewgen": cls.REVIEW_GEN,
        }
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown downstream task {name!r}") from None


@dataclass(frozen=True)
class TaskSpec:
    task: DownstreamTask
    kind: TaskKind
    metrics: tuple[str, ...]

    @property
    def default_lr(self) -> float:
        return CLASSIFICATION_LR if self.kind is TaskKind.CLASSIFICATION else PRETRAIN_LR


TASK_SPECS = {
    DownstreamTask.COMMIT_MSG_GEN: TaskSpec(DownstreamTask.COMMIT_MSG_GEN, TaskKind.GENERATION, ("bnorm",)),
    DownstreamTask.COMMENT_UPDATE: TaskSpec(DownstreamTask.COMMENT_UPDATE, TaskKind.GENERATION, ("gleu", "accuracy")),
    DownstreamTask.DEFECT_PREDICT: TaskSpec(DownstreamTask.DEFECT_PREDICT, TaskKind.CLASSIFICATION, ("f1", "auc")),
    DownstreamTask.QUALITY_ESTIMATE: TaskSpec(DownstreamTask.QUALITY_ESTIMATE, TaskKind.CLASSIFICATION, ("f1", "auc")),
    DownstreamTask.REVIEW_GEN: TaskSpec(DownstreamTask.REVIEW_GEN, TaskKind.GENERATION, ("bnorm",)),
}


def task_spec(name: str | DownstreamTask) -> TaskSpec:
    return TASK_SPECS[DownstreamTask.parse(name) if isinstance(name, str) else name]


@dataclass(frozen=True)
class TaskExample:
    record_id: str
    input_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...] | None = None
    label: bool | None = None
    # Text the GLEU penalty compares against (the old comment).
    source_tokens: tuple[str, ...] = ()


@dataclass
class TaskDataset:
    spec: TaskSpec
    examples: list[TaskExample] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)


def build_example(record: CommitRecord, spec: TaskSpec) -> TaskExample:
    """Assemble one example; raise :class:`DataError` when a required label is missing."""
    change = tuple(serialize_change(record.diffs))
    task = spec.task
    if task is DownstreamTask.COMMIT_MSG_GEN:
        target = message_tokens(record.message)
        if not target:
            raise DataError("empty commit message")
        return TaskExample(record.id, change, tuple(target))
    if task is DownstreamTask.COMMENT_UPDATE:
        if record.label_old_comment is None or not record.label_new_comment:
            raise DataError("missing old_comment/new_comment labels")
        old = tuple(tokenize(record.label_old_comment))
        return TaskExample(record.id, change + (SEP,) + old, tuple(tokenize(record.label_new_comment)), source_tokens=old)
    if task is DownstreamTask.REVIEW_GEN:
        if not record.label_review:
            raise DataError("missing review label")
        return TaskExample(record.id, change, tuple(tokenize(record.label_review)))
    label = record.label_defective if task is DownstreamTask.DEFECT_PREDICT else record.label_quality
    if label is None:
        raise DataError(f"missing {'defective' if task is DownstreamTask.DEFECT_PREDICT else 'quality'} label")
    return TaskExample(record.id, change, label=bool(label))


def build_task_dataset(records: Sequence[CommitRecord], spec: TaskSpec) -> TaskDataset:
    ds = TaskDataset(spec)
    for record in records:
        try:
            ds.examples.append(build_example(record, spec))
        except DataError as exc:
            log.info("excluding %s from %s: %s", record.id, spec.task.value, exc)
            ds.excluded.append((record.id, str(exc)))
    return ds


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    mode: str = "by-timestamp"
    seed: int = 0
    train_ids: tuple[str, ...] | None = None
    valid_ids: tuple[str, ...] | None = None
    test_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("random", "by-timestamp"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if any(f < 0 for f in self.fractions) or not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must be non-negative and sum to 1")


def _cut(items: list, fractions: Sequence[float]) -> tuple[list, list, list]:
    n = len(items)
    b1 = int(round(fractions[0] * n, 9) + 0.5)
    b2 = int(round((fractions[0] + fractions[1]) * n, 9) + 0.5)
    b2 = max(b1, min(b2, n))
    return items[:b1], items[b1:b2], items[b2:]


def split_dataset(records: Sequence[CommitRecord], spec: SplitSpec) -> tuple[list, list, list]:
    """Partition records into train/valid/test.

    ``by-timestamp`` cuts each project chronologically; ``random`` shuffles
    the whole set with ``spec.seed`` first. Explicit id lists override both.
    """
    if spec.train_ids is not None or spec.valid_ids is not None or spec.test_ids is not None:
        parts = [set(ids or ()) for ids in (spec.train_ids, spec.valid_ids, spec.test_ids)]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise DataError("explicit split id lists overlap")
        ids = {r.id for r in records}
        if ids != parts[0] | parts[1] | parts[2]:
            raise DataError("explicit split id lists do not cover the dataset exactly")
        return tuple([r for r in records if r.id in part] for part in parts)  # type: ignore[return-value]

    if spec.mode == "random":
        shuffled = list(records)
        random.Random(spec.seed).shuffle(shuffled)
        return _cut(shuffled, spec.fractions)

    missing = [r.id for r in records if r.timestamp is None]
    if missing:
        raise DataError(f"by-timestamp split needs timestamps; missing for {missing[:5]}")
    by_project: dict[str, list[CommitRecord]] = {}
    for r in records:
        by_project.setdefault(r.project, []).append(r)
    train, valid, test = [], [], []
    for project in sorted(by_project):
        ordered = sorted(by_project[project], key=lambda r: (r.timestamp, r.id))
        a, b, c = _cut(ordered, spec.fractions)
        train += a
        valid += b
        test += c
    return train, valid, test


def _ids(ex: TaskExample, vocab: Vocabulary) -> list[int]:
    return encode(ex.input_tokens, vocab)


def _strip_eos(ids: list[int]) -> list[int]:
    return ids[:-1] if ids and ids[-1] == EOS_ID else ids


def predict(model: Seq2Seq, spec: TaskSpec, examples: Sequence[TaskExample], vocab: Vocabulary) -> list:
    """Decoded token lists (generation) or positive-class probabilities (classification)."""
    if spec.kind is TaskKind.CLASSIFICATION:
        return [classify(model, _ids(ex, vocab)) for ex in examples]
    limit = model.cfg.max_tgt_len
    return [decode(_strip_eos(greedy_decode(model, _ids(ex, vocab), limit)), vocab) for ex in examples]


def score_predictions(spec: TaskSpec, examples: Sequence[TaskExample], predictions: Sequence) -> list[MetricReport]:
    ids = [ex.record_id for ex in examples]
    if spec.kind is TaskKind.CLASSIFICATION:
        labels = [bool(ex.label) for ex in examples]
        decisions = [p >= 0.5 for p in predictions]
        reports = [MetricReport("f1", ids, list(predictions), f1_binary(decisions, labels))]
        try:
            area = auc(predictions, labels)
        except ValueError as exc:
            log.warning("AUC undefined: %s", exc)
            area = float("nan")
        reports.append(MetricReport("auc", ids, list(predictions), area))
        return reports
    refs = [list(ex.target_tokens or ()) for ex in examples]
    if spec.task is DownstreamTask.COMMENT_UPDATE:
        g = [gleu(list(ex.source_tokens), h, r) for ex, h, r in zip(examples, predictions, refs)]
        hits = [1.0 if list(h) == r else 0.0 for h, r in zip(predictions, refs)]
        acc = MetricReport("accuracy", ids, hits, exact_match_accuracy(predictions, refs))
        return [MetricReport.sentence_level("gleu", ids, g), acc]
    scores = [bleu_bnorm(h, r) for h, r in zip(predictions, refs)]
    return [MetricReport.sentence_level("bnorm", ids, scores)]


def evaluate_task(
    model: Seq2Seq,
    spec: TaskSpec,
    test_set: Sequence[TaskExample],
    vocab: Vocabulary,
    out_dir: str | Path | None = None,
) -> dict[str, MetricReport]:
    if not test_set:
        raise DataError("empty test set")
    preds = predict(model, spec, test_set, vocab)
    reports = score_predictions(spec, test_set, preds)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_reports(reports, out / "scores.csv", out / "summary.json")
        if spec.kind is TaskKind.GENERATION:
            with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
                for ex, p in zip(test_set, preds):
                    fh.write(json.dumps({"id": ex.record_id, "prediction": p, "reference": list(ex.target_tokens or ())}) + "\n")
    return {r.metric: r for r in reports}


def _validation_score(model, spec, valid_set, vocab) -> tuple[float, float]:
    """(primary metric, negative validation loss); larger is better."""
    with torch.no_grad():
        model.eval()
        loss = _batch_loss(model, spec, valid_set, vocab).item()
    if spec.kind is TaskKind.CLASSIFICATION:
        metric = score_predictions(spec, valid_set, predict(model, spec, valid_set, vocab))[0].aggregate
    else:
        metric = evaluate_task(model, spec, valid_set, vocab)[spec.metrics[0]].aggregate
    return (metric, -loss)


def _batch_loss(model, spec, batch, vocab):
    inputs = [_ids(ex, vocab) for ex in batch]
    if spec.kind is TaskKind.CLASSIFICATION:
        return classification_loss(model, inputs, [bool(ex.label) for ex in batch])
    return seq2seq_loss(model, inputs, [encode(ex.target_tokens, vocab) for ex in batch])


@dataclass
class FinetuneResult:
    model: Seq2Seq
    best_step: int
    best_score: tuple[float, float] | None
    steps_run: int
    history: list[tuple[int, float, float]] = field(default_factory=list)


def finetune(
    model: Seq2Seq,
    spec: TaskSpec,
    train_set: Sequence[TaskExample],
    valid_set: Sequence[TaskExample],
    vocab: Vocabulary,
    train_cfg: TrainConfig | None = None,
    patience: int = 3,
    eval_every: int = 50,
) -> FinetuneResult:
    """Fine-tune ``model`` in place and return the best-validation snapshot.

    Without an explicit ``train_cfg`` the learning rate defaults by task kind
    (2e-5 classification, 5e-5 generation). Validation runs every
    ``eval_every`` steps; training stops after ``patience`` evaluations
    without improvement.
    """
    if not train_set:
        raise DataError("empty training set")
    cfg = train_cfg or TrainConfig(learning_rate=spec.default_lr)
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    optimizer = make_optimizer(model, cfg.learning_rate)
    order: list[int] = []
    best_state = copy.deepcopy(model.state_dict())
    best_score = _validation_score(model, spec, valid_set, vocab) if valid_set else None
    best_step, stale = 0, 0
    history = []
    step = 0
    for step in range(1, cfg.max_steps + 1):
        if len(order) < cfg.batch_size:
            fresh = list(range(len(train_set)))
            rng.shuffle(fresh)
            order += fresh
        idx, order = order[: cfg.batch_size], order[cfg.batch_size :]
        batch = [train_set[i] for i in idx]
        loss = train_step(model, optimizer, lambda m: _batch_loss(m, spec, batch, vocab))
        if not valid_set:
            best_state, best_step = copy.deepcopy(model.state_dict()), step
            continue
        if step % eval_every == 0 or step == cfg.max_steps:
            score = _validation_score(model, spec, valid_set, vocab)
            history.append((step, loss, score[0]))
            if best_score is None or score > best_score:
                best_score, best_state, best_step, stale = score, copy.deepcopy(model.state_dict()), step, 0
            else:
                stale += 1
                if stale >= patience:
                    log.info("early stop at step %d (best %d)", step, best_step)
                    break
    model.load_state_dict(best_state)
    return FinetuneResult(model, best_step, best_score, step if cfg.max_steps else 0, history)


@dataclass
class AblationSettings:
    model: ModelConfig | None = None
    pretrain_steps: int = 200
    pretrain_lr: float = 1e-3
    finetune_steps: int = 200
    finetune_lr: float = 1e-3
    batch_size: int = 16
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)


@dataclass
class AblationReport:
    task: DownstreamTask
    excluded: Task
    rows: list[dict] = field(default_factory=list)

    def to_markdown(self) -> str:
        metrics = sorted({k for row in self.rows for k in row["metrics"]})
        lines = [
            "| configuration | pre-training tasks | " + " | ".join(metrics) + " |",
            "|---|---|" + "---|" * len(metrics),
        ]
        for row in self.rows:
            vals = " | ".join(f"{row['metrics'][m]:.4f}" for m in metrics)
            lines.append(f"| {row['name']} | {', '.join(row['tasks'])} | {vals} |")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"task": self.task.value, "excluded": self.excluded.value, "rows": self.rows}


def run_ablation(
    pretrain_records: Sequence[CommitRecord],
    task_records: Sequence[CommitRecord],
    excluded_task: Task | str,
    downstream: TaskSpec | str = DownstreamTask.COMMENT_UPDATE,
    settings: AblationSettings | None = None,
    vocab: Vocabulary | None = None,
) -> AblationReport:
    """Pre-train with all tasks and with one task removed, then fine-tune and evaluate both."""
    from .pretrain import corpus_vocab, pretrain

    excluded = Task.parse(excluded_task) if isinstance(excluded_task, str) else excluded_task
    spec = downstream if isinstance(downstream, TaskSpec) else task_spec(downstream)
    settings = settings or AblationSettings()
    vocab = vocab or corpus_vocab(list(pretrain_records) + list(task_records))
    mcfg = settings.model or ModelConfig(vocab_size=len(vocab))
    train_r, valid_r, test_r = split_dataset(task_records, settings.split)
    train = build_task_dataset(train_r, spec).examples
    valid = build_task_dataset(valid_r, spec).examples
    test = build_task_dataset(test_r, spec).examples

    report = AblationReport(spec.task, excluded)
    variants = [("full", frozenset(ALL_TASKS)), (f"minus-{excluded.value}", frozenset(ALL_TASKS) - {excluded})]
    for name, tasks in variants:
        samples = list(build_epoch(pretrain_records, SamplerConfig(enabled_tasks=tasks), settings.seed, vocab))
        model = Seq2Seq(mcfg, seed=settings.seed)
        trace = pretrain(
            model,
            samples,
            vocab,
            TrainConfig(learning_rate=settings.pretrain_lr, batch_size=settings.batch_size,
                        max_steps=settings.pretrain_steps, seed=settings.seed),
        )
        finetune(
            model,
            spec,
            train,
            valid,
            vocab,
            TrainConfig(learning_rate=settings.finetune_lr, batch_size=settings.batch_size,
                        max_steps=settings.finetune_steps, seed=settings.seed),
        )
        reports = evaluate_task(model, spec, test, vocab)
        final = [row.loss for row in trace if row.task == "combined"][-1] if trace else float("nan")
        report.rows.append(
            {
                "name": name,
                "tasks": [t.value for t in ALL_TASKS if t in tasks],
                "samples": len(samples),
                "task_counts": {t.value: sum(1 for s in samples if s.task is t) for t in ALL_TASKS},
                "final_pretrain_loss": final,
                "metrics": {k: r.aggregate for k, r in reports.items()},
            }
        )
    return report
