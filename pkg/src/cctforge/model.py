"""Encoder-decoder transformer, losses, trainer step, decoding and gradient checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import NumericError
from .tokens import BOS, CLS, EOS, PAD, SPECIAL_TOKENS

CLS_ID = SPECIAL_TOKENS.index(CLS)
PAD_ID = SPECIAL_TOKENS.index(PAD)
BOS_ID = SPECIAL_TOKENS.index(BOS)
EOS_ID = SPECIAL_TOKENS.index(EOS)

CHECKPOINT_FORMAT = "cctforge-checkpoint/1"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_layers: int = 2
    num_heads: int = 2
    d_model: int = 64
    d_ff: int = 128
    max_src_len: int = 256
    max_tgt_len: int = 128
    dropout_rate: float = 0.0
    tie_output: bool = False

    def __post_init__(self):
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if min(self.max_src_len, self.max_tgt_len, self.num_layers, self.num_heads, self.vocab_size) < 1:
            raise ValueError("lengths, layer/head counts and vocab size must be >= 1")


# T5-base shape with the CodeT5 vocabulary; output projection tied to the embedding as in T5.
T5_BASE_SHAPE = ModelConfig(
    vocab_size=32100,
    num_layers=12,
    num_heads=12,
    d_model=768,
    d_ff=3072,
    max_src_len=512,
    max_tgt_len=512,
    tie_output=True,
)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 32
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


PRETRAIN_LR = 5e-5
CLASSIFICATION_LR = 2e-5


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, num_heads: int, dropout: float):
        super().__init__()
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)
        self.keep_weights = False
        self.last_weights: Tensor | None = None

    def forward(self, x: Tensor, memory: Tensor, mask: Tensor) -> Tensor:
        # mask: (B, Tq or 1, Tk), True where attention is allowed
        b, tq, d = x.shape
        tk = memory.shape[1]
        q = self.q(x).view(b, tq, self.num_heads, self.d_head).transpose(1, 2)
        k = self.k(memory).view(b, tk, self.num_heads, self.d_head).transpose(1, 2)
        v = self.v(memory).view(b, tk, self.num_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        if self.keep_weights:
            self.last_weights = weights.detach()
        out = (self.dropout(weights) @ v).transpose(1, 2).reshape(b, tq, d)
        return self.o(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.wi = nn.Linear(d_model, d_ff)
        self.wo = nn.Linear(d_ff, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.wo(self.dropout(F.gelu(self.wi(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.dropout(self.attn(h, h, mask))
        return x + self.dropout(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.num_heads, cfg.dropout_rate)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def forward(self, y: Tensor, memory: Tensor, self_mask: Tensor, cross_mask: Tensor) -> Tensor:
        h = self.norm1(y)
        y = y + self.dropout(self.self_attn(h, h, self_mask))
        y = y + self.dropout(self.cross_attn(self.norm2(y), memory, cross_mask))
        return y + self.dropout(self.ff(self.norm3(y)))


class Seq2Seq(nn.Module):
    """Pre-LN transformer encoder-decoder with a linear head on the ``[CLS]`` state."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.src_pos = nn.Embedding(cfg.max_src_len, cfg.d_model)
        self.tgt_pos = nn.Embedding(cfg.max_tgt_len, cfg.d_model)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers))
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.lm_head = None if cfg.tie_output else nn.Linear(cfg.d_model, cfg.vocab_size)
        self.cls_head = nn.Linear(cfg.d_model, 1)
        self.dropout = nn.Dropout(cfg.dropout_rate)
        self.truncations = {"source": 0, "target": 0}
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        # Unit-variance embeddings, fan-in scaled projections, zero classification head.
        gen = torch.Generator().manual_seed(seed)
        for name, p in self.named_parameters():
            if name.startswith("cls_head") or name.endswith("bias") and "norm" not in name:
                nn.init.zeros_(p)
            elif "norm" in name:
                nn.init.ones_(p) if name.endswith("weight") else nn.init.zeros_(p)
            elif p.dim() == 2 and not name.startswith(("embed", "src_pos", "tgt_pos")):
                nn.init.normal_(p, 0.0, p.shape[1] ** -0.5, generator=gen)
            else:
                nn.init.normal_(p, 0.0, 1.0, generator=gen)

    def encode(self, src: Tensor, src_mask: Tensor) -> Tensor:
        pos = torch.arange(src.shape[1], device=src.device)
        x = self.dropout(self.embed(src) + self.src_pos(pos))
        attn_mask = src_mask.unsqueeze(1)
        for layer in self.encoder:
            x = layer(x, attn_mask)
        return self.enc_norm(x)

    def decode(self, tgt_in: Tensor, memory: Tensor, src_mask: Tensor, tgt_mask: Tensor) -> Tensor:
        t = tgt_in.shape[1]
        pos = torch.arange(t, device=tgt_in.device)
        y = self.dropout(self.embed(tgt_in) + self.tgt_pos(pos))
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_in.device).tril()
        self_mask = causal.unsqueeze(0) & tgt_mask.unsqueeze(1)
        cross_mask = src_mask.unsqueeze(1)
        for layer in self.decoder:
            y = layer(y, memory, self_mask, cross_mask)
        return self.dec_norm(y)

    def project(self, hidden: Tensor) -> Tensor:
        if self.lm_head is None:
            return hidden @ self.embed.weight.t()
        return self.lm_head(hidden)

    def forward(self, src: Tensor, src_mask: Tensor, tgt_in: Tensor, tgt_mask: Tensor) -> Tensor:
        memory = self.encode(src, src_mask)
        return self.project(self.decode(tgt_in, memory, src_mask, tgt_mask))

    def classify_logits(self, src: Tensor, src_mask: Tensor) -> Tensor:
        return self.cls_head(self.encode(src, src_mask)[:, 0]).squeeze(-1)

    def attention_modules(self) -> list[MultiHeadAttention]:
        return [m for m in self.modules() if isinstance(m, MultiHeadAttention)]


def _dtype(model: Seq2Seq) -> torch.dtype:
    return model.embed.weight.dtype


def collate_sources(model: Seq2Seq, inputs: Sequence[Sequence[int]]) -> tuple[Tensor, Tensor]:
    """Pad (and if needed truncate) source id lists into a batch plus attention mask."""
    limit = model.cfg.max_src_len
    rows = []
    for ids in inputs:
        if not ids:
            raise ValueError("empty source sequence")
        if len(ids) > limit:
            model.truncations["source"] += 1
            warnings.warn(f"source of length {len(ids)} truncated to {limit}", stacklevel=3)
            ids = ids[:limit]
        rows.append(list(ids))
    width = max(len(r) for r in rows)
    src = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for i, r in enumerate(rows):
        src[i, : len(r)] = torch.tensor(r, dtype=torch.long)
    mask = torch.zeros_like(src, dtype=torch.bool)
    for i, r in enumerate(rows):
        mask[i, : len(r)] = True
    return src, mask


def frame_targets(model: Seq2Seq, targets: Sequence[Sequence[int]]) -> tuple[Tensor, Tensor, Tensor]:
    """Teacher-forcing frame: decoder input ``[BOS] t``, labels ``t [EOS]``, PAD elsewhere."""
    limit = model.cfg.max_tgt_len - 1
    rows = []
    for ids in targets:
        if not ids:
            raise ValueError("empty target sequence")
        if len(ids) > limit:
            model.truncations["target"] += 1
            warnings.warn(f"target of length {len(ids)} truncated to {limit}", stacklevel=3)
            ids = ids[:limit]
        rows.append(list(ids))
    width = max(len(r) for r in rows) + 1
    tgt_in = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    labels = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for i, r in enumerate(rows):
        tgt_in[i, : len(r) + 1] = torch.tensor([BOS_ID] + r, dtype=torch.long)
        labels[i, : len(r) + 1] = torch.tensor(r + [EOS_ID], dtype=torch.long)
    return tgt_in, labels, labels != PAD_ID


def encode(model: Seq2Seq, input_ids: Sequence[int]) -> tuple[Tensor, Tensor]:
    """Hidden states (len, d_model) of one source sequence and its ``[CLS]`` vector."""
    if not input_ids or input_ids[0] != CLS_ID:
        raise ValueError("input must start with [CLS]")
    src, mask = collate_sources(model, [input_ids])
    hidden = model.encode(src, mask)[0]
    return hidden, hidden[0]


def token_nll(model: Seq2Seq, inputs: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> Tensor:
    """Per-example summed negative log-likelihood, shape (batch,)."""
    if len(inputs) != len(targets):
        raise ValueError("inputs and targets differ in batch size")
    src, src_mask = collate_sources(model, inputs)
    tgt_in, labels, tgt_mask = frame_targets(model, targets)
    logits = model(src, src_mask, tgt_in, tgt_mask)
    nll = F.cross_entropy(logits.transpose(1, 2), labels, reduction="none")
    return (nll * tgt_mask).sum(dim=1)


def seq2seq_loss(model: Seq2Seq, inputs: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]) -> Tensor:
    """Teacher-forced NLL summed over target positions, averaged over the batch."""
    return token_nll(model, inputs, targets).mean()


Batch = Mapping[str, tuple[Sequence[Sequence[int]], Sequence[Sequence[int]]]]


def combined_pretrain_loss(model: Seq2Seq, batch_per_task: Batch) -> Tensor:
    """Unweighted sum of the per-task losses present in the batch."""
    present = [(task, pair) for task, pair in batch_per_task.items() if pair[0]]
    if not present:
        raise ValueError("batch contains no task")
    total = seq2seq_loss(model, *present[0][1])
    for _, (inputs, targets) in present[1:]:
        total = total + seq2seq_loss(model, inputs, targets)
    return total


def classification_loss(model: Seq2Seq, inputs: Sequence[Sequence[int]], labels: Sequence[bool]) -> Tensor:
    src, mask = collate_sources(model, inputs)
    logits = model.classify_logits(src, mask)
    y = torch.tensor([float(v) for v in labels], dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, y)


def make_optimizer(model: Seq2Seq, learning_rate: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=learning_rate)


def train_step(model: Seq2Seq, optimizer: torch.optim.Optimizer, loss_fn: Callable[[Seq2Seq], Tensor]) -> float:
    """One Adam update; returns the loss measured before the update."""
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = loss_fn(model)
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.item()}")
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NumericError(f"non-finite gradient in {name}")
    optimizer.step()
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise NumericError(f"non-finite parameter {name} after update")
    return loss.item()


@torch.no_grad()
def greedy_decode(model: Seq2Seq, input_ids: Sequence[int], max_tgt_len: int | None = None) -> list[int]:
    """Argmax decoding from ``[BOS]``; the returned ids include a final ``[EOS]`` if one was produced."""
    model.eval()
    limit = model.cfg.max_tgt_len if max_tgt_len is None else min(max_tgt_len, model.cfg.max_tgt_len)
    src, src_mask = collate_sources(model, [input_ids])
    memory = model.encode(src, src_mask)
    out: list[int] = []
    for _ in range(limit):
        tgt_in = torch.tensor([[BOS_ID] + out], dtype=torch.long)
        hidden = model.decode(tgt_in, memory, src_mask, torch.ones_like(tgt_in, dtype=torch.bool))
        logits = model.project(hidden[0, -1])
        logits[PAD_ID] = float("-inf")
        logits[BOS_ID] = float("-inf")
        nxt = int(torch.argmax(logits))  # first maximum, i.e. lowest id on ties
        out.append(nxt)
        if nxt == EOS_ID:
            break
    return out


@torch.no_grad()
def classify(model: Seq2Seq, input_ids: Sequence[int]) -> float:
    if not input_ids or input_ids[0] != CLS_ID:
        raise ValueError("input must start with [CLS]")
    model.eval()
    src, mask = collate_sources(model, [input_ids])
    return torch.sigmoid(model.classify_logits(src, mask))[0].item()


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count of :class:`Seq2Seq` for ``cfg``."""
    d, ff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    attn = 4 * (d * d + d)
    ffn = d * ff + ff + ff * d + d
    norm = 2 * d
    enc_layer = attn + ffn + 2 * norm
    dec_layer = 2 * attn + ffn + 3 * norm
    total = v * d + (cfg.max_src_len + cfg.max_tgt_len) * d
    total += cfg.num_layers * (enc_layer + dec_layer) + 2 * norm
    if not cfg.tie_output:
        total += d * v + v
    return total + d + 1


@dataclass
class GradCheckResult:
    max_rel_error: float
    max_abs_error: float
    checked: int
    grad_norm: float


def grad_check(
    model: Seq2Seq,
    loss_fn: Callable[[Seq2Seq], Tensor],
    epsilon: float = 1e-5,
    fraction: float = 0.01,
    min_checked: int = 32,
    seed: int = 0,
    abs_floor: float = 1e-8,
) -> GradCheckResult:
    """Compare autograd gradients with central finite differences.

    A random ``fraction`` of scalar parameters (at least ``min_checked``) is
    perturbed by ``±epsilon``. Relative error is ``|a - n| / max(|a|, |n|)``;
    entries where both magnitudes are below ``abs_floor`` count as exact.
    Run the model in float64 with dropout disabled.
    """
    model.eval()
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad(set_to_none=True)
    loss = loss_fn(model)
    loss.backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    grad_norm = math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads))

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    n_check = min(total, max(min_checked, math.ceil(fraction * total)))
    gen = torch.Generator().manual_seed(seed)
    picks = torch.randperm(total, generator=gen)[:n_check].tolist()
    offsets = []
    acc = 0
    for s in sizes:
        offsets.append(acc)
        acc += s

    max_rel = max_abs = 0.0
    with torch.no_grad():
        for flat in sorted(picks):
            pi = max(i for i, off in enumerate(offsets) if off <= flat)
            j = flat - offsets[pi]
            view = params[pi].view(-1)
            orig = view[j].item()
            view[j] = orig + epsilon
            plus = loss_fn(model).item()
            view[j] = orig - epsilon
            minus = loss_fn(model).item()
            view[j] = orig
            numeric = (plus - minus) / (2 * epsilon)
            analytic = grads[pi].view(-1)[j].item()
            err = abs(analytic - numeric)
            scale = max(abs(analytic), abs(numeric))
            max_abs = max(max_abs, err)
            if scale >= abs_floor:
                max_rel = max(max_rel, err / scale)
    model.zero_grad(set_to_none=True)
    return GradCheckResult(max_rel, max_abs, n_check, grad_norm)


def save_checkpoint(model: Seq2Seq, path: str | Path, vocab_tokens: Sequence[str] | None = None, extra: dict | None = None) -> None:
    tensors = {name: t.detach().to(torch.float32).clone() for name, t in model.state_dict().items()}
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "config": asdict(model.cfg),
            "vocab": list(vocab_tokens) if vocab_tokens is not None else None,
            "tensors": tensors,
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[Seq2Seq, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    model = Seq2Seq(ModelConfig(**blob["config"]))
    model.load_state_dict(blob["tensors"])
    return model, blob
