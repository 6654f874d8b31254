"""Pre-training loop over generated samples with the summed multi-task loss."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import torch

from .corpus import CommitRecord
from .diff import message_tokens, serialize_change
from .model import Seq2Seq, TrainConfig, combined_pretrain_loss, make_optimizer, seq2seq_loss, train_step
from .sampler import ALL_TASKS, PretrainSample
from .tokens import Vocabulary, build_vocab, encode, tokenize

log = logging.getLogger(__name__)


def corpus_tokens(record: CommitRecord) -> Iterator[str]:
    yield from serialize_change(record.diffs)
    yield from message_tokens(record.message)
    for text in (record.label_old_comment, record.label_new_comment, record.label_review):
        if text:
            yield from tokenize(text)


def corpus_vocab(records: Iterable[CommitRecord], min_freq: int = 1) -> Vocabulary:
    return build_vocab((list(corpus_tokens(r)) for r in records), min_freq)


def encode_sample(sample: PretrainSample, vocab: Vocabulary) -> tuple[list[int], list[int]]:
    return encode(sample.input_tokens, vocab), encode(sample.target_tokens, vocab)


def group_batch(samples: Sequence[PretrainSample], vocab: Vocabulary) -> dict[str, tuple[list, list]]:
    batch: dict[str, tuple[list, list]] = {}
    for s in samples:
        src, tgt = encode_sample(s, vocab)
        inputs, targets = batch.setdefault(s.task.value, ([], []))
        inputs.append(src)
        targets.append(tgt)
    return {t.value: batch[t.value] for t in ALL_TASKS if t.value in batch}


@dataclass
class TraceRow:
    step: int
    task: str
    loss: float


def pretrain(
    model: Seq2Seq,
    samples: Sequence[PretrainSample],
    vocab: Vocabulary,
    train_cfg: TrainConfig,
    trace_path: str | Path | None = None,
    log_every: int = 50,
) -> list[TraceRow]:
    """Run ``train_cfg.max_steps`` updates, cycling through ``samples`` in order.

    Each step takes ``batch_size`` consecutive samples, groups them by task
    and minimises the sum of the per-task losses. Returns the loss trace
    (a ``combined`` row plus one row per task present, each measured before
    the update).
    """
    if not samples:
        raise ValueError("no pre-training samples")
    torch.manual_seed(train_cfg.seed)
    optimizer = make_optimizer(model, train_cfg.learning_rate)
    trace: list[TraceRow] = []
    n = len(samples)
    for step in range(train_cfg.max_steps):
        start = (step * train_cfg.batch_size) % n
        chunk = list(islice(_cycle_from(samples, start), train_cfg.batch_size))
        batch = group_batch(chunk, vocab)
        per_task: dict[str, float] = {}

        def loss_fn(m, batch=batch, per_task=per_task):
            total = None
            for task, (inputs, targets) in batch.items():
                loss = seq2seq_loss(m, inputs, targets)
                per_task[task] = loss.item()
                total = loss if total is None else total + loss
            return total

        combined = train_step(model, optimizer, loss_fn)
        trace.append(TraceRow(step, "combined", combined))
        trace.extend(TraceRow(step, task, value) for task, value in per_task.items())
        if log_every and step % log_every == 0:
            log.info("step %d combined loss %.4f", step, combined)
    if trace_path is not None:
        write_trace(trace, trace_path)
    return trace


def _cycle_from(samples: Sequence, start: int) -> Iterator:
    n = len(samples)
    i = start
    while True:
        yield samples[i % n]
        i += 1


@torch.no_grad()
def evaluate_combined(model: Seq2Seq, samples: Sequence[PretrainSample], vocab: Vocabulary) -> float:
    model.eval()
    return combined_pretrain_loss(model, group_batch(samples, vocab)).item()


def write_trace(trace: Iterable[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "task", "loss"])
        for row in trace:
            writer.writerow([row.step, row.task, repr(row.loss)])
