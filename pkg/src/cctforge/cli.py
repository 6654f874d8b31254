"""Command-line entry point: ``cctforge <subcommand> [options]``.

Settings resolve with precedence flags > ``--config`` JSON file >
``CCTFORGE_*`` environment variables > built-in defaults. Every subcommand
writes the resolved settings next to its outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import DataError, NumericError, RecordParseError

log = logging.getLogger("cctforge")

ENV_PREFIX = "CCTFORGE_"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _csv(value: str | Sequence[str]) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def _bool(value: str | bool) -> bool:
    if isinstance(value, bool):
        return value
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[Any], Any] = str
    default: Any = None
    help: str = ""
    flag: bool = False  # boolean switch with --name / --no-name

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = [
    Opt("in", str, None, "input file"),
    Opt("out", str, None, "output file or directory"),
    Opt("seed", int, 0, "random seed"),
    Opt("workers", int, 1, "parallel worker processes"),
]
MODEL_OPTS = [
    Opt("layers", int, 2, "encoder/decoder layers"),
    Opt("heads", int, 2, "attention heads"),
    Opt("d-model", int, 64, "model width"),
    Opt("d-ff", int, 128, "feed-forward width"),
    Opt("max-src-len", int, 256, "maximum source length"),
    Opt("max-tgt-len", int, 128, "maximum target length"),
]
SPLIT_OPTS = [
    Opt("split-mode", str, "by-timestamp", "random | by-timestamp"),
    Opt("split", _csv, ["0.6", "0.2", "0.2"], "train,valid,test fractions"),
]

COMMANDS: dict[str, list[Opt]] = {
    "ingest": COMMON + [
        Opt("rejects", str, None, "JSONL of unparseable lines"),
        Opt("languages", _csv, None, "accepted languages (comma separated)"),
    ],
    "filter": COMMON + [
        Opt("rejects", str, None, "JSONL of {id, reason} for removed records"),
        Opt("min-message-tokens", int, 3, "remove messages with at most this many tokens"),
        Opt("max-diff-tokens", int, 100, "remove diffs with more code tokens"),
        Opt("exclude-projects", _csv, [], "projects removed to avoid leakage"),
        Opt("test-patterns", _csv, None, "regexes marking test-file paths"),
    ],
    "stats": COMMON,
    "build-samples": COMMON + [
        Opt("tasks", _csv, ["mlm4cc", "mlm4cm", "nl2pl", "pl2nl", "cdg"], "pre-training tasks"),
        Opt("exclude", _csv, [], "pre-training tasks to drop"),
        Opt("epochs", int, 1, "epochs of samples to emit"),
        Opt("epoch-reseed", _bool, True, "draw fresh masks every epoch", flag=True),
        Opt("vocab", str, None, "vocabulary file to write (default <out>.vocab.txt)"),
        Opt("min-freq", int, 1, "vocabulary frequency threshold"),
    ],
    "pretrain": COMMON + MODEL_OPTS + [
        Opt("vocab", str, None, "vocabulary file (default <in>.vocab.txt)"),
        Opt("lr", float, 5e-5, "learning rate"),
        Opt("batch-size", int, 32, "batch size"),
        Opt("max-steps", int, 1000, "optimizer steps"),
    ],
    "finetune": COMMON + MODEL_OPTS + SPLIT_OPTS + [
        Opt("task", str, "commit-msg", "downstream task"),
        Opt("checkpoint", str, None, "pre-trained checkpoint (random init if absent)"),
        Opt("vocab", str, None, "vocabulary file when no checkpoint is given"),
        Opt("lr", float, None, "learning rate (default by task kind)"),
        Opt("batch-size", int, 32, "batch size"),
        Opt("max-steps", int, 500, "optimizer steps"),
        Opt("patience", int, 3, "early-stopping patience in evaluations"),
        Opt("eval-every", int, 50, "steps between validation runs"),
    ],
    "eval": COMMON + SPLIT_OPTS + [
        Opt("task", str, "commit-msg", "downstream task"),
        Opt("checkpoint", str, None, "fine-tuned checkpoint"),
        Opt("subset", str, "test", "which split to score: train | valid | test | all"),
    ],
    "nngen": COMMON + SPLIT_OPTS + [
        Opt("query", str, None, "JSONL of query records (default: the test split of --in)"),
        Opt("rerank-k", int, 1, "BLEU re-rank among the top-k cosine neighbours"),
        Opt("min-freq", int, 1, "vocabulary frequency threshold"),
    ],
    "ablate": COMMON + MODEL_OPTS + SPLIT_OPTS + [
        Opt("exclude", str, None, "pre-training task to remove"),
        Opt("task", str, "comment-update", "downstream task"),
        Opt("pretrain-in", str, None, "pre-training corpus (default: --in)"),
        Opt("pretrain-steps", int, 200, "pre-training steps per variant"),
        Opt("max-steps", int, 200, "fine-tuning steps per variant"),
        Opt("lr", float, 1e-3, "learning rate for both stages"),
        Opt("batch-size", int, 16, "batch size"),
    ],
    "grad-check": COMMON + [
        Opt("epsilon", float, 1e-5, "finite-difference step"),
        Opt("d-model", int, 8, "model width"),
        Opt("layers", int, 1, "layers"),
        Opt("heads", int, 2, "attention heads"),
        Opt("fraction", float, 0.01, "fraction of parameters checked"),
        Opt("tolerance", float, 1e-4, "maximum accepted relative error"),
    ],
}
COMMON_NAMES = {"config"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cctforge", description="code-change pre-training pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, help="JSON settings file")
        for opt in opts:
            if opt.flag:
                p.add_argument(f"--{opt.name}", dest=opt.dest, action=argparse.BooleanOptionalAction, default=None, help=opt.help)
            else:
                p.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.type, default=None, help=opt.help)
    return parser


def resolve_config(command: str, args: argparse.Namespace, env: dict[str, str] | None = None) -> dict[str, Any]:
    """Merge flags, config file, environment and defaults for ``command``."""
    env = os.environ if env is None else env
    file_cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        # Flat keys apply everywhere; a nested object keyed by subcommand overrides them.
        file_cfg = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        file_cfg.update(raw.get(command, {}))
    resolved: dict[str, Any] = {"command": command}
    for opt in COMMANDS[command]:
        value = getattr(args, opt.dest, None)
        try:
            if value is None and (opt.name in file_cfg or opt.dest in file_cfg):
                raw_value = file_cfg.get(opt.name, file_cfg.get(opt.dest))
                value = None if raw_value is None else opt.type(raw_value)
            env_key = ENV_PREFIX + opt.dest.upper()
            if value is None and env_key in env:
                value = opt.type(env[env_key])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {opt.name}: {exc}") from None
        resolved[opt.dest] = opt.default if value is None else value
    return resolved


def sidecar_path(out: str | Path) -> Path:
    out = Path(out)
    if out.is_dir():
        return out / "run_config.json"
    return out.with_name(out.name + ".run_config.json")


def write_run_config(cfg: dict[str, Any], out: str | Path) -> Path:
    path = sidecar_path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _need(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k.replace("-", "_")) in (None, "")]
    if missing:
        raise UsageError(f"{cfg['command']}: missing required option(s): " + ", ".join("--" + k for k in missing))


def _model_config(cfg: dict, vocab_size: int):
    from .model import ModelConfig

    try:
        return ModelConfig(
            vocab_size=vocab_size,
            num_layers=cfg["layers"],
            num_heads=cfg["heads"],
            d_model=cfg["d_model"],
            d_ff=cfg["d_ff"],
            max_src_len=cfg["max_src_len"],
            max_tgt_len=cfg["max_tgt_len"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _split_spec(cfg: dict):
    from .tasks import SplitSpec

    try:
        fractions = tuple(float(x) for x in cfg["split"])
        if len(fractions) != 3:
            raise ValueError("--split needs three fractions")
        return SplitSpec(fractions=fractions, mode=cfg["split_mode"], seed=cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_records(path: str) -> list:
    from .corpus import read_corpus

    try:
        return list(read_corpus(path))
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


def cmd_ingest(cfg: dict) -> int:
    from .corpus import parse_commit_record, serialize_commit_record

    _need(cfg, "in", "out")
    kept = bad = 0
    seen: set[str] = set()
    rejects = open(cfg["rejects"], "w", encoding="utf-8") if cfg["rejects"] else None
    try:
        with open(cfg["in"], encoding="utf-8") as src, open(cfg["out"], "w", encoding="utf-8") as dst:
            for n, line in enumerate(src, start=1):
                if not line.strip():
                    continue
                try:
                    record = parse_commit_record(line, n, cfg["languages"])
                    if record.id in seen:
                        raise RecordParseError(f"duplicate id {record.id!r}", n)
                except RecordParseError as exc:
                    bad += 1
                    if rejects:
                        rejects.write(json.dumps({"line": n, "reason": str(exc)}) + "\n")
                    continue
                seen.add(record.id)
                dst.write(serialize_commit_record(record) + "\n")
                kept += 1
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    finally:
        if rejects:
            rejects.close()
    print(f"ingested {kept} records, rejected {bad} lines")
    write_run_config(cfg, cfg["out"])
    return EXIT_OK


def cmd_filter(cfg: dict) -> int:
    from .corpus import DEFAULT_TEST_PATTERNS, FilterConfig, apply_filters, serialize_commit_record

    _need(cfg, "in", "out")
    try:
        fcfg = FilterConfig(
            min_message_tokens_exclusive=cfg["min_message_tokens"],
            max_diff_tokens=cfg["max_diff_tokens"],
            excluded_projects=frozenset(cfg["exclude_projects"]),
            test_path_patterns=tuple(cfg["test_patterns"] or DEFAULT_TEST_PATTERNS),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = _read_records(cfg["in"])
    kept = 0
    reasons: dict[str, int] = {}
    rejects = open(cfg["rejects"], "w", encoding="utf-8") if cfg["rejects"] else None
    try:
        with open(cfg["out"], "w", encoding="utf-8") as dst:
            for record in records:
                reason = apply_filters(record, fcfg)
                if reason is None:
                    dst.write(serialize_commit_record(record) + "\n")
                    kept += 1
                else:
                    reasons[reason.value] = reasons.get(reason.value, 0) + 1
                    if rejects:
                        rejects.write(json.dumps({"id": record.id, "reason": reason.value}) + "\n")
    finally:
        if rejects:
            rejects.close()
    detail = ", ".join(f"{k}={v}" for k, v in sorted(reasons.items()))
    print(f"kept {kept}, rejected {len(records) - kept}" + (f" ({detail})" if detail else ""))
    write_run_config(cfg, cfg["out"])
    return EXIT_OK


def cmd_stats(cfg: dict) -> int:
    from .corpus import corpus_stats

    _need(cfg, "in")
    stats = corpus_stats(_read_records(cfg["in"])).to_json()
    text = json.dumps(stats, indent=2, sort_keys=True) + "\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text, encoding="utf-8")
        write_run_config(cfg, cfg["out"])
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_build_samples(cfg: dict) -> int:
    from .pretrain import corpus_vocab
    from .sampler import SamplerConfig, Task, build_epoch, write_samples

    _need(cfg, "in", "out")
    try:
        tasks = {Task.parse(t) for t in cfg["tasks"]} - {Task.parse(t) for t in cfg["exclude"]}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not tasks:
        raise UsageError("no pre-training task enabled")
    records = _read_records(cfg["in"])
    vocab = corpus_vocab(records, cfg["min_freq"])
    vocab_path = cfg["vocab"] or str(Path(cfg["out"]).with_name(Path(cfg["out"]).name + ".vocab.txt"))
    cfg["vocab"] = vocab_path
    vocab.save(vocab_path)
    scfg = SamplerConfig(enabled_tasks=frozenset(tasks), epoch_reseed=cfg["epoch_reseed"])

    def stream():
        for epoch in range(cfg["epochs"]):
            yield from build_epoch(records, scfg, cfg["seed"], vocab, epoch=epoch, workers=cfg["workers"])

    n = write_samples(stream(), cfg["out"])
    print(f"wrote {n} samples from {len(records)} records; vocabulary of {len(vocab)} tokens")
    write_run_config(cfg, cfg["out"])
    return EXIT_OK


def cmd_pretrain(cfg: dict) -> int:
    from .model import Seq2Seq, TrainConfig, save_checkpoint
    from .pretrain import pretrain
    from .sampler import read_samples
    from .tokens import Vocabulary

    _need(cfg, "in", "out")
    vocab_path = cfg["vocab"] or cfg["in"] + ".vocab.txt"
    cfg["vocab"] = vocab_path
    try:
        samples = read_samples(cfg["in"])
        vocab = Vocabulary.load(vocab_path)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    if not samples:
        raise DataError(f"{cfg['in']}: no samples")
    model = Seq2Seq(_model_config(cfg, len(vocab)), seed=cfg["seed"])
    try:
        tcfg = TrainConfig(cfg["lr"], cfg["batch_size"], cfg["max_steps"], cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    trace_path = cfg["out"] + ".trace.csv"
    trace = pretrain(model, samples, vocab, tcfg, trace_path=trace_path)
    combined = [r.loss for r in trace if r.task == "combined"]
    save_checkpoint(model, cfg["out"], vocab.itos, {"truncations": model.truncations})
    if combined:
        print(f"pre-trained {len(combined)} steps: loss {combined[0]:.4f} -> {combined[-1]:.4f}")
    write_run_config(cfg, cfg["out"])
    return EXIT_OK


def _load_or_init(cfg: dict, records: list):
    from .model import Seq2Seq, load_checkpoint
    from .pretrain import corpus_vocab
    from .tokens import Vocabulary

    if cfg.get("checkpoint"):
        try:
            model, blob = load_checkpoint(cfg["checkpoint"])
        except FileNotFoundError as exc:
            raise DataError(str(exc)) from None
        if blob.get("vocab") is None:
            raise DataError(f"{cfg['checkpoint']}: checkpoint carries no vocabulary")
        return model, Vocabulary(tuple(blob["vocab"]))
    vocab = Vocabulary.load(cfg["vocab"]) if cfg.get("vocab") else corpus_vocab(records)
    return Seq2Seq(_model_config(cfg, len(vocab)), seed=cfg["seed"]), vocab


def cmd_finetune(cfg: dict) -> int:
    from .model import TrainConfig, save_checkpoint
    from .tasks import build_task_dataset, finetune, split_dataset, task_spec

    _need(cfg, "in", "out")
    try:
        spec = task_spec(cfg["task"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = _read_records(cfg["in"])
    model, vocab = _load_or_init(cfg, records)
    train_r, valid_r, _ = split_dataset(records, _split_spec(cfg))
    train = build_task_dataset(train_r, spec).examples
    valid = build_task_dataset(valid_r, spec).examples
    lr = cfg["lr"] if cfg["lr"] is not None else spec.default_lr
    cfg["lr"] = lr
    result = finetune(
        model, spec, train, valid, vocab,
        TrainConfig(lr, cfg["batch_size"], cfg["max_steps"], cfg["seed"]),
        patience=cfg["patience"], eval_every=cfg["eval_every"],
    )
    save_checkpoint(model, cfg["out"], vocab.itos, {"task": spec.task.value, "best_step": result.best_step})
    print(f"fine-tuned {spec.task.value} for {result.steps_run} steps; best step {result.best_step}")
    write_run_config(cfg, cfg["out"])
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    from .tasks import build_task_dataset, evaluate_task, split_dataset, task_spec

    _need(cfg, "in", "out", "checkpoint")
    try:
        spec = task_spec(cfg["task"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = _read_records(cfg["in"])
    model, vocab = _load_or_init(cfg, records)
    parts = dict(zip(("train", "valid", "test"), split_dataset(records, _split_spec(cfg))))
    if cfg["subset"] == "all":
        chosen = records
    elif cfg["subset"] in parts:
        chosen = parts[cfg["subset"]]
    else:
        raise UsageError(f"unknown subset {cfg['subset']!r}")
    examples = build_task_dataset(chosen, spec).examples
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    reports = evaluate_task(model, spec, examples, vocab, out)
    for name, rep in reports.items():
        print(f"{name}: {rep.aggregate:.4f} over {rep.count} examples")
    write_run_config(cfg, out)
    return EXIT_OK


def cmd_nngen(cfg: dict) -> int:
    from .metrics import MetricReport, bleu_bnorm, write_reports
    from .diff import message_tokens
    from .nngen import build_index, retrieve
    from .pretrain import corpus_vocab
    from .tasks import split_dataset

    _need(cfg, "in", "out")
    records = _read_records(cfg["in"])
    if cfg["query"]:
        train, queries = records, _read_records(cfg["query"])
    else:
        train, valid, queries = split_dataset(records, _split_spec(cfg))
        train = train + valid
    vocab = corpus_vocab(train, cfg["min_freq"])
    index = build_index(train, vocab)
    if not len(index):
        raise DataError("empty retrieval index")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    index.save(out / "index.jsonl")
    ids, scores = [], []
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for q in queries:
            msg = retrieve(q.diffs, index, cfg["rerank_k"])
            score = bleu_bnorm(message_tokens(msg), message_tokens(q.message))
            ids.append(q.id)
            scores.append(score)
            fh.write(json.dumps({"id": q.id, "prediction": msg, "reference": q.message}) + "\n")
    rep = MetricReport.sentence_level("bnorm", ids, scores)
    write_reports([rep], out / "scores.csv", out / "summary.json")
    print(f"nngen: {len(queries)} queries against {len(index)} indexed diffs, B-Norm {rep.aggregate:.2f}")
    write_run_config(cfg, out)
    return EXIT_OK


def cmd_ablate(cfg: dict) -> int:
    from .pretrain import corpus_vocab
    from .sampler import Task
    from .tasks import AblationSettings, run_ablation, task_spec

    _need(cfg, "in", "out", "exclude")
    try:
        excluded = Task.parse(cfg["exclude"])
        spec = task_spec(cfg["task"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    task_records = _read_records(cfg["in"])
    pre_records = _read_records(cfg["pretrain_in"]) if cfg["pretrain_in"] else task_records
    vocab = corpus_vocab(list(pre_records) + list(task_records))
    settings = AblationSettings(
        model=_model_config(cfg, len(vocab)),
        pretrain_steps=cfg["pretrain_steps"],
        pretrain_lr=cfg["lr"],
        finetune_steps=cfg["max_steps"],
        finetune_lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        split=_split_spec(cfg),
    )
    report = run_ablation(pre_records, task_records, excluded, spec, settings, vocab)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    (out / "ablation.md").write_text(report.to_markdown(), encoding="utf-8")
    sys.stdout.write(report.to_markdown())
    write_run_config(cfg, out)
    return EXIT_OK


def cmd_grad_check(cfg: dict) -> int:
    from .model import ModelConfig, Seq2Seq, combined_pretrain_loss, grad_check

    vocab_size = 24
    mcfg = ModelConfig(vocab_size=vocab_size, num_layers=cfg["layers"], num_heads=cfg["heads"],
                       d_model=cfg["d_model"], d_ff=2 * cfg["d_model"], max_src_len=16, max_tgt_len=8)
    model = Seq2Seq(mcfg, seed=cfg["seed"]).double()
    batch = tiny_task_batch(vocab_size, cfg["seed"])
    result = grad_check(model, lambda m: combined_pretrain_loss(m, batch), cfg["epsilon"], cfg["fraction"], seed=cfg["seed"])
    summary = {
        "max_rel_error": result.max_rel_error,
        "max_abs_error": result.max_abs_error,
        "checked": result.checked,
        "grad_norm": result.grad_norm,
        "tolerance": cfg["tolerance"],
    }
    print(json.dumps(summary))
    if cfg["out"]:
        Path(cfg["out"]).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        write_run_config(cfg, cfg["out"])
    if not result.max_rel_error < cfg["tolerance"]:
        raise NumericError(f"gradient check failed: relative error {result.max_rel_error:.3g}")
    return EXIT_OK


def tiny_task_batch(vocab_size: int, seed: int, per_task: int = 2) -> dict:
    """Random five-task batch over ids 12.. for gradient checks."""
    from .model import CLS_ID
    from .sampler import ALL_TASKS

    rng = random.Random(seed)
    lo = 12
    batch = {}
    for task in ALL_TASKS:
        inputs = [[CLS_ID] + [rng.randrange(lo, vocab_size) for _ in range(rng.randint(2, 8))] for _ in range(per_task)]
        targets = [[rng.randrange(lo, vocab_size) for _ in range(rng.randint(1, 5))] for _ in range(per_task)]
        batch[task.value] = (inputs, targets)
    return batch


HANDLERS = {
    "ingest": cmd_ingest,
    "filter": cmd_filter,
    "stats": cmd_stats,
    "build-samples": cmd_build_samples,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "nngen": cmd_nngen,
    "ablate": cmd_ablate,
    "grad-check": cmd_grad_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args.command, args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
