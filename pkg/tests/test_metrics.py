import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from clora_lab import adapter as lora
from clora_lab.linalg import make_rng, spectral_norm
from clora_lab.metrics import forgetting_of, forgetting_rows, measure
from clora_lab.model import TinyModelConfig, build_model, collect_layer_inputs

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=10)
CFG = TinyModelConfig(input_dim=6, hidden_dim=5, rank=2, alpha=4.0, init_std=0.5)


def test_forgetting_hand_value():
    # ||diag(1, 2) [1, 1]|| / ||[1, 1]|| = sqrt(5) / sqrt(2)
    assert forgetting_of(np.diag([1.0, 2.0]), [1.0, 1.0]) == pytest.approx(np.sqrt(2.5), rel=1e-15)


def test_forgetting_of_zero_input_is_none():
    assert forgetting_of(np.eye(2), np.zeros(2)) is None
    np.testing.assert_array_equal(forgetting_rows(np.eye(2), np.zeros((3, 2))), np.empty(0))


@given(m=dims, n=dims, seed=seeds)
def test_forgetting_matches_loop_oracle(m, n, seed):
    rng = make_rng(seed)
    dw, x = rng.normal(size=(m, n)), rng.normal(size=n)
    assert forgetting_of(dw, x) == pytest.approx(oracles.forgetting(dw, x), rel=1e-10)


def test_forgetting_rows_agree_with_single():
    rng = make_rng(1)
    dw, xs = rng.normal(size=(4, 3)), rng.normal(size=(6, 3))
    xs[2] = 0.0
    rows = forgetting_rows(dw, xs)
    expected = [forgetting_of(dw, x) for x in xs if forgetting_of(dw, x) is not None]
    np.testing.assert_allclose(rows, expected, rtol=1e-14)


@given(m=dims, n=dims, seed=seeds, c=st.floats(min_value=1e-3, max_value=1e3))
def test_forgetting_bounded_and_scale_behaviour(m, n, seed, c):
    rng = make_rng(seed)
    dw, x = rng.normal(size=(m, n)), rng.normal(size=n)
    f = forgetting_of(dw, x)
    cap = spectral_norm(dw, tol=1e-12)
    assert f <= cap * (1 + 1e-8)
    assert forgetting_of(dw, c * x) == pytest.approx(f, rel=1e-12)
    assert forgetting_of(c * dw, x) == pytest.approx(c * f, rel=1e-12)
    assert spectral_norm(c * dw, tol=1e-12) == pytest.approx(c * cap, rel=1e-9)


def test_fresh_model_has_zero_capacity_and_forgetting():
    model = build_model(CFG, seed=0)
    record = measure(model, make_rng(0).normal(size=(10, 6)))
    assert record.model_capacity == 0.0 and record.model_forgetting == 0.0
    assert all(m.capacity == 0.0 and m.forgetting == 0.0 for m in record.per_adapter.values())
    assert record.reference_forgetting > 0.0


def test_measure_matches_manual_computation():
    model = build_model(CFG, seed=2)
    rng = make_rng(3)
    for ad in model.adapters.values():
        ad.b = rng.normal(size=ad.b.shape)
    x = rng.normal(size=(12, 6))
    record = measure(model, x)
    inputs = collect_layer_inputs(model, x)
    for name, ad in model.adapters.items():
        dw = lora.delta(ad)
        site = record.per_adapter[name]
        rows = [oracles.forgetting(dw, v) for v in inputs[name] if np.any(v)]
        assert site.forgetting == pytest.approx(np.mean(rows), rel=1e-10)
        assert site.capacity == pytest.approx(oracles.spectral_norm(dw), rel=1e-10)
        assert site.n_inputs == len(rows)
    sites = list(record.per_adapter.values())
    assert record.model_capacity == pytest.approx(np.mean([s.capacity for s in sites]))
    assert record.model_forgetting == pytest.approx(np.mean([s.forgetting for s in sites]))


def test_sites_without_inputs_are_reported_absent():
    model = build_model(CFG, seed=0)
    record = measure(model, np.zeros((4, 6)))
    assert record.absent == ["mlp_down", "mlp_up"]
    assert record.per_adapter == {}
    assert record.model_capacity == 0.0


def test_only_targeted_sites_are_measured():
    model = build_model(dataclasses.replace(CFG, adapter_targets=("mlp_down",)), seed=0)
    record = measure(model, make_rng(0).normal(size=(4, 6)))
    assert list(record.per_adapter) == ["mlp_down"]
