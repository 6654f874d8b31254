import math
import random

import pytest
import torch

from cctforge.cli import tiny_task_batch
from cctforge.errors import NumericError
from cctforge.model import (
    BOS_ID,
    CLS_ID,
    EOS_ID,
    PAD_ID,
    T5_BASE_SHAPE,
    ModelConfig,
    Seq2Seq,
    classify,
    collate_sources,
    combined_pretrain_loss,
    count_parameters,
    encode,
    frame_targets,
    grad_check,
    greedy_decode,
    load_checkpoint,
    make_optimizer,
    parameter_count,
    save_checkpoint,
    seq2seq_loss,
    token_nll,
    train_step,
)

V = 30


def small(seed=0, **kw):
    cfg = dict(vocab_size=V, num_layers=1, num_heads=2, d_model=16, d_ff=32, max_src_len=24, max_tgt_len=12)
    cfg.update(kw)
    return Seq2Seq(ModelConfig(**cfg), seed=seed)


def rand_pairs(rng, n):
    ins = [[CLS_ID] + [rng.randrange(12, V) for _ in range(rng.randint(1, 10))] for _ in range(n)]
    outs = [[rng.randrange(12, V) for _ in range(rng.randint(1, 6))] for _ in range(n)]
    return ins, outs


def test_encode_shape_and_truncation():
    m = small()
    hidden, cls = encode(m, [CLS_ID, 13, 14])
    assert hidden.shape == (3, 16) and torch.equal(cls, hidden[0])
    with pytest.warns(UserWarning, match="truncated"):
        hidden, _ = encode(m, [CLS_ID] + [13] * 40)
    assert hidden.shape[0] == 24 and m.truncations["source"] == 1


def test_pad_content_is_invisible():
    m = small()
    src, mask = collate_sources(m, [[CLS_ID, 13, 14], [CLS_ID, 15, 16, 17, 18]])
    base = m.encode(src, mask)[0, 0]
    src[0, 3:] = 20
    assert torch.allclose(m.encode(src, mask)[0, 0], base, atol=0, rtol=0)


def test_embedding_scale_changes_cls():
    m = small()
    _, before = encode(m, [CLS_ID, 13, 14])
    with torch.no_grad():
        m.embed.weight.mul_(2)
    _, after = encode(m, [CLS_ID, 13, 14])
    assert not torch.allclose(before, after)


def test_uniform_logits_loss():
    m = small().double()
    with torch.no_grad():
        m.lm_head.weight.zero_()
        m.lm_head.bias.zero_()
    rng = random.Random(0)
    ins, outs = rand_pairs(rng, 4)
    nll = token_nll(m, ins, outs)
    for o, value in zip(outs, nll.tolist()):
        k = len(o) + 1  # the appended [EOS] is also scored
        assert abs(value - k * math.log(V)) < 1e-6


def test_loss_matches_float64_oracle():
    rng = random.Random(1)
    for case in range(10):
        m = small(seed=case).double()
        ins, outs = rand_pairs(rng, 3)
        src, smask = collate_sources(m, ins)
        tgt_in, labels, tmask = frame_targets(m, outs)
        with torch.no_grad():
            logits = m(src, smask, tgt_in, tmask).tolist()
        expected = 0.0
        for b, o in enumerate(outs):
            for t, gold in enumerate(o + [EOS_ID]):
                row = logits[b][t]
                mx = max(row)
                lse = mx + math.log(sum(math.exp(x - mx) for x in row))
                expected += lse - row[gold]
        expected /= len(outs)
        assert abs(seq2seq_loss(m, ins, outs).item() - expected) < 1e-8


def test_empty_target_rejected():
    with pytest.raises(ValueError):
        seq2seq_loss(small(), [[CLS_ID, 13]], [[]])


def test_combined_is_sum_of_tasks():
    m = small().double()
    batch = tiny_task_batch(V, seed=3)
    total = combined_pretrain_loss(m, batch).item()
    parts = sum(seq2seq_loss(m, *pair).item() for pair in batch.values())
    assert abs(total - parts) < 1e-9
    only = {"pl2nl": batch["pl2nl"]}
    assert combined_pretrain_loss(m, only).item() == seq2seq_loss(m, *batch["pl2nl"]).item()


def test_padding_invariance():
    m = small().double()
    rng = random.Random(5)
    ins, outs = rand_pairs(rng, 1)
    alone = token_nll(m, ins, outs)[0].item()
    long_in = [[CLS_ID] + [14] * 20]
    long_out = [[15] * 10]
    together = token_nll(m, ins + long_in, outs + long_out)[0].item()
    assert abs(alone - together) < 1e-6


def test_attention_rows_normalised():
    m = small()
    for mod in m.attention_modules():
        mod.keep_weights = True
    ins, outs = rand_pairs(random.Random(2), 3)
    seq2seq_loss(m, ins, outs)
    for mod in m.attention_modules():
        sums = mod.last_weights.sum(-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


def test_zero_learning_rate_keeps_params():
    m = small()
    before = {k: v.clone() for k, v in m.state_dict().items()}
    ins, outs = rand_pairs(random.Random(0), 2)
    train_step(m, make_optimizer(m, 0.0), lambda mm: seq2seq_loss(mm, ins, outs))
    assert all(torch.equal(before[k], v) for k, v in m.state_dict().items())


def test_non_finite_loss_aborts():
    m = small()
    with pytest.raises(NumericError):
        train_step(m, make_optimizer(m, 1e-3), lambda mm: seq2seq_loss(mm, [[CLS_ID, 13]], [[14]]) * float("nan"))


def test_identical_seeds_identical_traces():
    def trace():
        m = small(seed=4)
        opt = make_optimizer(m, 1e-3)
        ins, outs = rand_pairs(random.Random(9), 4)
        return [train_step(m, opt, lambda mm: seq2seq_loss(mm, ins, outs)) for _ in range(5)]

    assert trace() == trace()


def test_greedy_decode_contract():
    m = small()
    out = greedy_decode(m, [CLS_ID, 13, 14], max_tgt_len=1)
    assert len(out) == 1
    out = greedy_decode(m, [CLS_ID, 13, 14], max_tgt_len=12)
    assert PAD_ID not in out and BOS_ID not in out


def test_overfit_pair_reproduced():
    torch.manual_seed(0)
    m = small(seed=1)
    opt = make_optimizer(m, 3e-3)
    src, tgt = [CLS_ID, 13, 20, 21], [22, 23, 24]
    for _ in range(300):
        loss = train_step(m, opt, lambda mm: seq2seq_loss(mm, [src], [tgt]))
    assert loss < 0.05
    assert greedy_decode(m, src) == tgt + [EOS_ID]
    m.zero_grad()
    seq2seq_loss(m, [src], [tgt]).backward()
    norm = math.sqrt(sum(float((p.grad ** 2).sum()) for p in m.parameters() if p.grad is not None))
    assert norm < 1.0


def test_classify_zero_head_and_monotone():
    m = small()
    inputs = [[CLS_ID, 13], [CLS_ID, 20, 21, 22]]
    assert all(classify(m, x) == 0.5 for x in inputs)
    with torch.no_grad():
        m.cls_head.bias.add_(0.7)
    assert all(classify(m, x) > 0.5 for x in inputs)


def test_head_separates_linear_data():
    torch.manual_seed(0)
    x = torch.randn(50, 16)
    w = torch.randn(16)
    y = (x @ w > 0).float()
    head = small().cls_head
    opt = torch.optim.Adam(head.parameters(), lr=0.05)
    for _ in range(500):
        opt.zero_grad()
        loss = torch.nn.functional.binary_cross_entropy_with_logits(head(x).squeeze(-1), y)
        loss.backward()
        opt.step()
    acc = ((head(x).squeeze(-1) > 0).float() == y).float().mean().item()
    assert acc == 1.0


@pytest.mark.parametrize(
    "cfg",
    [
        dict(vocab_size=50, num_layers=1, num_heads=1, d_model=8, d_ff=8),
        dict(vocab_size=77, num_layers=3, num_heads=4, d_model=32, d_ff=48, max_src_len=40, max_tgt_len=9),
        dict(vocab_size=40, num_layers=2, num_heads=2, d_model=16, d_ff=16, tie_output=True),
    ],
)
def test_parameter_count_closed_form(cfg):
    c = ModelConfig(**cfg)
    assert parameter_count(c) == count_parameters(Seq2Seq(c))


def test_t5_base_shape_near_220m():
    assert abs(parameter_count(T5_BASE_SHAPE) - 220e6) / 220e6 < 0.15


def test_grad_error_shrinks_with_epsilon():
    m = small(d_model=8, d_ff=16, num_heads=2).double()
    batch = tiny_task_batch(V, seed=0)
    errs = [grad_check(m, lambda mm: combined_pretrain_loss(mm, batch), eps, fraction=0.02).max_rel_error for eps in (1e-3, 1e-4, 1e-5)]
    assert errs[0] > errs[1] and errs[2] < 1e-4


def test_checkpoint_round_trip(tmp_path):
    m = small(seed=3)
    save_checkpoint(m, tmp_path / "m.pt", ["[CLS]"], {"note": 1})
    m2, blob = load_checkpoint(tmp_path / "m.pt")
    assert blob["vocab"] == ["[CLS]"] and blob["extra"] == {"note": 1}
    for (k, a), (_, b) in zip(m.state_dict().items(), m2.state_dict().items()):
        assert torch.equal(a, b), k


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=10, num_heads=3, d_model=8)
