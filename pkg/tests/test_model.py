import dataclasses

import numpy as np
import pytest

from clora_lab import adapter as lora
from clora_lab.grad import finite_difference_check
from clora_lab.linalg import make_rng
from clora_lab.model import (
    TinyModelConfig,
    accuracy,
    build_model,
    collect_layer_inputs,
    collect_layer_io,
    forward_logits,
    loss_and_grads,
    predict,
    total_loss,
)

MLP = TinyModelConfig(input_dim=6, hidden_dim=5, num_classes=3, rank=2, alpha=4.0, init_std=0.5,
                      reg_variant="random", k=2, lam=0.7)
TRANSFORMER = TinyModelConfig(kind="transformer", vocab_size=7, seq_len=4, embed_dim=5, hidden_dim=6,
                              num_classes=3, rank=2, alpha=4.0, init_std=0.5, reg_variant="random", k=2)
LM = dataclasses.replace(TRANSFORMER, task="lm")


def _inputs(cfg, batch, seed):
    rng = make_rng(seed, 50)
    if cfg.kind == "mlp":
        return rng.normal(size=(batch, cfg.input_dim)), rng.integers(0, cfg.num_classes, size=batch)
    x = rng.integers(0, cfg.vocab_size, size=(batch, cfg.seq_len))
    if cfg.task == "lm":
        return x, rng.integers(0, cfg.vocab_size, size=(batch, cfg.seq_len))
    return x, rng.integers(0, cfg.num_classes, size=batch)


def _trained(cfg, seed):
    model = build_model(cfg, seed=seed)
    rng = make_rng(seed, 60)
    for ad in model.adapters.values():
        ad.b = rng.normal(size=ad.b.shape)
    return model


def _objective(model, x, y, l2):
    parts = total_loss(model, x, y)
    return parts.total + l2 * sum(np.sum(ad.a ** 2) + np.sum(ad.b ** 2) for ad in model.adapters.values())


@pytest.mark.parametrize("cfg", [MLP, TRANSFORMER, LM], ids=["mlp", "transformer", "lm"])
@pytest.mark.parametrize("seed", [0, 1])
def test_composite_gradient_matches_finite_differences(cfg, seed):
    model = _trained(cfg, seed)
    x, y = _inputs(cfg, 3, seed)
    l2 = 0.05
    _, grads = loss_and_grads(model, x, y, use_reg=True, l2_weight=l2)
    for name, ad in model.adapters.items():
        for idx, attr in enumerate(("a", "b")):
            original = getattr(ad, attr)

            def f(m, ad=ad, attr=attr):
                setattr(ad, attr, m)
                return _objective(model, x, y, l2)

            err = finite_difference_check(f, original, grads[name][idx])
            setattr(ad, attr, original)
            assert err < 1e-5, (name, attr, err)


@pytest.mark.parametrize("cfg", [MLP, TRANSFORMER, LM], ids=["mlp", "transformer", "lm"])
def test_fresh_model_matches_base_exactly(cfg):
    model = build_model(cfg, seed=3)
    bare = build_model(dataclasses.replace(cfg, adapter_targets=None), seed=3)
    x, _ = _inputs(cfg, 4, 0)
    base_only = dataclasses.replace(bare, adapters={})
    np.testing.assert_array_equal(forward_logits(model, x), forward_logits(base_only, x))


def test_output_shapes():
    x, _ = _inputs(MLP, 4, 0)
    assert forward_logits(build_model(MLP), x).shape == (4, 3)
    x, _ = _inputs(TRANSFORMER, 4, 0)
    assert forward_logits(build_model(TRANSFORMER), x).shape == (4, 3)
    assert forward_logits(build_model(LM), x).shape == (4, 4, 7)
    assert predict(build_model(LM), x).shape == (4, 4)


def test_loss_parts_split():
    model = _trained(MLP, 0)
    x, y = _inputs(MLP, 5, 0)
    parts = total_loss(model, x, y)
    reg = sum(lora.clora_reg_loss(ad) for ad in model.adapters.values())
    assert parts.reg == pytest.approx(reg)
    assert parts.total == pytest.approx(parts.task + 0.7 * reg)
    lp, _ = loss_and_grads(model, x, y)
    assert lp.task == pytest.approx(parts.task, rel=1e-12)
    assert lp.total == pytest.approx(parts.total, rel=1e-12)


def test_lambda_zero_gradients_equal_plain_lora_bitwise():
    cfg = dataclasses.replace(MLP, lam=0.0)
    model = _trained(cfg, 2)
    plain = dataclasses.replace(model, adapters={n: dataclasses.replace(ad, reg=None) for n, ad in model.adapters.items()})
    x, y = _inputs(cfg, 6, 2)
    _, g_reg = loss_and_grads(model, x, y, use_reg=True)
    _, g_plain = loss_and_grads(plain, x, y, use_reg=False)
    for name in g_reg:
        for a, b in zip(g_reg[name], g_plain[name]):
            assert np.array_equal(a, b)


def test_build_is_deterministic_and_base_ignores_training_seed():
    a, b, c = build_model(MLP, seed=4), build_model(MLP, seed=4), build_model(MLP, seed=5)
    for name in a.base:
        assert np.array_equal(a.base[name], c.base[name])
    assert np.array_equal(a.adapters["mlp_up"].a, b.adapters["mlp_up"].a)
    assert not np.array_equal(a.adapters["mlp_up"].a, c.adapters["mlp_up"].a)
    # sites draw independent regularization matrices
    assert not np.allclose(a.adapters["mlp_up"].reg.p_a, a.adapters["mlp_down"].reg.p_b)


def test_base_weights_are_frozen():
    model = build_model(MLP)
    with pytest.raises(ValueError):
        model.base["head"][0, 0] = 1.0


def test_adapter_targets_limit_sites():
    cfg = dataclasses.replace(MLP, adapter_targets=["mlp_up"])
    assert cfg.adapter_targets == ("mlp_up",)
    assert list(build_model(cfg).adapters) == ["mlp_up"]


@pytest.mark.parametrize("kwargs", [
    {"kind": "cnn"}, {"task": "lm"}, {"lam": -1.0}, {"dropout": 1.0},
    {"adapter_targets": ("query",)}, {"adapter_targets": ()}, {"reg_variant": "random", "k": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        dataclasses.replace(MLP, **kwargs)


def test_input_validation():
    model = build_model(MLP)
    with pytest.raises(ValueError):
        forward_logits(model, np.ones((2, 5)))
    tmodel = build_model(TRANSFORMER)
    with pytest.raises(ValueError):
        forward_logits(tmodel, np.full((2, 4), 7))
    with pytest.raises(ValueError):
        forward_logits(tmodel, np.full((2, 4), 0.5))
    with pytest.raises(ValueError):
        total_loss(model, np.ones((2, 6)), [0])


def test_collect_layer_inputs_shapes_and_values():
    model = _trained(MLP, 0)
    x, _ = _inputs(MLP, 4, 0)
    rows = collect_layer_inputs(model, x)
    np.testing.assert_array_equal(rows["mlp_up"], x)
    assert rows["mlp_down"].shape == (4, 5)
    io = collect_layer_io(model, x)
    inp, out = io["mlp_up"]
    ad = model.adapters["mlp_up"]
    np.testing.assert_allclose(out, (lora.merge(ad) @ inp.T).T, atol=1e-12)


def test_transformer_collects_every_token():
    model = build_model(TRANSFORMER)
    x, _ = _inputs(TRANSFORMER, 3, 0)
    rows = collect_layer_inputs(model, x)
    assert set(rows) == {"query", "key", "value", "mlp_up", "mlp_down"}
    assert rows["query"].shape == (12, 5)


def test_causal_lm_ignores_future_tokens():
    model = _trained(LM, 1)
    x, _ = _inputs(LM, 2, 1)
    changed = x.copy()
    changed[:, -1] = (changed[:, -1] + 1) % LM.vocab_size
    a, b = forward_logits(model, x), forward_logits(model, changed)
    np.testing.assert_allclose(a[:, :-1], b[:, :-1], atol=1e-12)


def test_batch_samples_do_not_attend_to_each_other():
    model = _trained(TRANSFORMER, 1)
    x, _ = _inputs(TRANSFORMER, 3, 1)
    np.testing.assert_allclose(forward_logits(model, x)[:1], forward_logits(model, x[:1]), atol=1e-12)


def test_dropout_changes_gradients_only_when_enabled():
    cfg = dataclasses.replace(MLP, dropout=0.5)
    model = _trained(cfg, 0)
    x, y = _inputs(cfg, 4, 0)
    _, g1 = loss_and_grads(model, x, y, dropout_rng=make_rng(1))
    _, g2 = loss_and_grads(model, x, y, dropout_rng=make_rng(1))
    _, g3 = loss_and_grads(model, x, y, dropout_rng=make_rng(2))
    _, g0 = loss_and_grads(model, x, y)
    assert np.array_equal(g1["mlp_up"][0], g2["mlp_up"][0])
    assert not np.array_equal(g1["mlp_up"][0], g3["mlp_up"][0])
    assert not np.array_equal(g1["mlp_up"][0], g0["mlp_up"][0])


def test_accuracy_range():
    model = build_model(MLP)
    x, y = _inputs(MLP, 20, 0)
    acc = accuracy(model, x, y)
    assert 0.0 <= acc <= 1.0
    assert acc == np.mean(predict(model, x) == y)
