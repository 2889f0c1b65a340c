"""Desk-scale networks with named adapter sites.

Two architectures share one code path:

* ``mlp``: one residual block and a frozen linear head,
  ``logits = W_head (x + W_down relu(W_up x))``; sites ``mlp_up``, ``mlp_down``.
* ``transformer``: one pre-residual block with a single attention head,
  sites ``query``, ``key``, ``value``, ``mlp_up``, ``mlp_down``. It runs as a
  classifier (bidirectional attention, mean-pooled head) or as a next-token
  language model (causal attention, per-position head).

Activations are stored feature-major (features x tokens) so every site is
``y = W @ x`` with ``x`` a column, the same convention as the adapters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adapter as lora
from .grad import Tape, Var
from .linalg import make_rng

MLP_SITES = ("mlp_up", "mlp_down")
TRANSFORMER_SITES = ("query", "key", "value", "mlp_up", "mlp_down")

# sub-stream ids under a model seed
_BASE_STREAM, _INIT_STREAM, _REG_STREAM = 0, 1, 2


@dataclass
class TinyModelConfig:
    kind: str = "mlp"
    input_dim: int = 64
    hidden_dim: int = 64
    num_classes: int = 2
    # transformer only
    vocab_size: int = 16
    seq_len: int = 8
    embed_dim: int = 16
    task: str = "classify"  # "classify" or "lm"
    # adapters; None means every site the architecture has
    adapter_targets: Optional[tuple] = None
    rank: int = 8
    alpha: float = 16.0
    init_std: float = 0.02
    lam: float = 1.0
    reg_variant: Optional[str] = None
    k: int = 0
    dropout: float = 0.0
    base_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("mlp", "transformer"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.task not in ("classify", "lm"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.kind == "mlp" and self.task != "classify":
            raise ValueError("the MLP only supports classification")
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.adapter_targets is not None:
            self.adapter_targets = tuple(self.adapter_targets)
            unknown = set(self.adapter_targets) - set(self.sites)
            if unknown:
                raise ValueError(f"{self.kind} has no sites {sorted(unknown)}")
            if not self.adapter_targets:
                raise ValueError("adapter_targets must be nonempty")
        if self.reg_variant is not None and self.k < 1:
            raise ValueError("a regularization variant needs k >= 1")

    @property
    def sites(self) -> tuple:
        return MLP_SITES if self.kind == "mlp" else TRANSFORMER_SITES

    @property
    def targets(self) -> tuple:
        return self.sites if self.adapter_targets is None else self.adapter_targets

    @property
    def uses_reg(self) -> bool:
        return self.reg_variant is not None and self.k > 0


@dataclass
class TinyModel:
    config: TinyModelConfig
    base: dict
    adapters: dict = field(default_factory=dict)

    def copy(self) -> "TinyModel":
        adapters = {name: ad.copy() for name, ad in self.adapters.items()}
        return TinyModel(self.config, self.base, adapters)


@dataclass(frozen=True)
class LossParts:
    task: float
    reg: float
    total: float


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def base_shapes(config: TinyModelConfig) -> dict:
    c = config
    if c.kind == "mlp":
        return {
            "mlp_up": (c.hidden_dim, c.input_dim),
            "mlp_down": (c.input_dim, c.hidden_dim),
            "head": (c.num_classes, c.input_dim),
        }
    d = c.embed_dim
    out = c.num_classes if c.task == "classify" else c.vocab_size
    return {
        "embed": (d, c.vocab_size),
        "pos": (d, c.seq_len),
        "query": (d, d),
        "key": (d, d),
        "value": (d, d),
        "attn_out": (d, d),
        "mlp_up": (c.hidden_dim, d),
        "mlp_down": (d, c.hidden_dim),
        "head": (out, d),
    }


def init_base(config: TinyModelConfig) -> dict:
    """Frozen base weights, a function of ``config.base_seed`` only."""
    rng = make_rng(config.base_seed, _BASE_STREAM)
    base = {}
    for name, (rows, cols) in base_shapes(config).items():
        std = 1.0 if name == "embed" else 0.5 if name == "pos" else 1.0 / np.sqrt(cols)
        base[name] = _readonly(rng.normal(0.0, std, size=(rows, cols)))
    return base


def attach_adapters(config: TinyModelConfig, base: dict, seed: int) -> dict:
    """Fresh adapters for every target; each site gets its own init and reg streams."""
    adapters = {}
    for i, name in enumerate(config.targets):
        w = base[name]
        reg = None
        if config.uses_reg:
            reg = lora.init_reg(config.reg_variant, w, config.k, make_rng(seed, _REG_STREAM, i))
        adapters[name] = lora.init_adapter(
            w, config.rank, config.alpha, config.init_std, make_rng(seed, _INIT_STREAM, i), reg=reg
        )
    return adapters


def build_model(config: TinyModelConfig, seed: int = 0, base: Optional[dict] = None) -> TinyModel:
    base = init_base(config) if base is None else base
    return TinyModel(config, base, attach_adapters(config, base, seed))


# -- forward graph --------------------------------------------------------------


class _Graph:
    """One forward pass recorded on a tape."""

    def __init__(self, model: TinyModel, tape: Tape, trainable: bool, record: Optional[dict],
                 dropout_rng: Optional[np.random.Generator]):
        self.model = model
        self.tape = tape
        self.record = record
        self.dropout_rng = dropout_rng
        self.params: dict[str, tuple[Var, Var]] = {}
        for name, ad in model.adapters.items():
            self.params[name] = (tape.leaf(ad.a, trainable), tape.leaf(ad.b, trainable))

    def site(self, name: str, h: Var) -> Var:
        if self.record is not None:
            self.record.setdefault(name, []).append(h.value)
        t = self.tape
        y = t.matmul(t.constant(self.model.base[name]), h)
        if name not in self.params:
            return y
        a, b = self.params[name]
        hx = h
        if self.dropout_rng is not None:
            hx = t.dropout(h, self.model.config.dropout, self.dropout_rng)
        low = t.matmul(a, t.matmul(t.transpose(b), hx))
        return t.add(y, t.scale(low, self.model.adapters[name].scaling))


def _check_inputs(config: TinyModelConfig, inputs) -> np.ndarray:
    if config.kind == "mlp":
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != config.input_dim or x.shape[0] < 1:
            raise ValueError(f"expected inputs of shape (batch, {config.input_dim}), got {x.shape}")
        return x
    x = np.asarray(inputs)
    if x.ndim != 2 or x.shape[1] != config.seq_len or x.shape[0] < 1:
        raise ValueError(f"expected token ids of shape (batch, {config.seq_len}), got {x.shape}")
    if not np.issubdtype(x.dtype, np.integer) or x.min() < 0 or x.max() >= config.vocab_size:
        raise ValueError(f"token ids must be integers in [0, {config.vocab_size})")
    return x.astype(np.intp)


def _attention_mask(batch: int, seq_len: int, causal: bool) -> np.ndarray:
    sample = np.repeat(np.arange(batch), seq_len)
    pos = np.tile(np.arange(seq_len), batch)
    mask = sample[:, None] == sample[None, :]  # [key, query]
    if causal:
        mask &= pos[:, None] <= pos[None, :]
    return mask


def _forward(graph: _Graph, x: np.ndarray) -> Var:
    """Logits, classes x batch (classify) or vocab x tokens (lm)."""
    cfg = graph.model.config
    base = graph.model.base
    t = graph.tape
    if cfg.kind == "mlp":
        h0 = t.constant(x.T)
        h = t.add(h0, graph.site("mlp_down", t.relu(graph.site("mlp_up", h0))))
        return t.matmul(t.constant(base["head"]), h)

    batch, seq = x.shape
    h0 = t.take_columns(t.constant(base["embed"]), x.ravel())
    h0 = t.add(h0, t.constant(np.tile(base["pos"], (1, batch))))
    q = graph.site("query", h0)
    k = graph.site("key", h0)
    v = graph.site("value", h0)
    scores = t.scale(t.matmul(t.transpose(k), q), 1.0 / np.sqrt(cfg.embed_dim))
    probs = t.softmax_columns(scores, _attention_mask(batch, seq, cfg.task == "lm"))
    h1 = t.add(h0, t.matmul(t.constant(base["attn_out"]), t.matmul(v, probs)))
    up = t.relu(graph.site("mlp_up", h1))
    h2 = t.add(h1, graph.site("mlp_down", up))
    if cfg.task == "lm":
        return t.matmul(t.constant(base["head"]), h2)
    pool = np.kron(np.eye(batch), np.full((seq, 1), 1.0 / seq))
    return t.matmul(t.constant(base["head"]), t.matmul(h2, t.constant(pool)))


def forward_logits(model: TinyModel, inputs) -> np.ndarray:
    """Logits as (batch, classes), or (batch, seq_len, vocab) in lm mode."""
    x = _check_inputs(model.config, inputs)
    out = _forward(_Graph(model, Tape(), False, None, None), x).value
    if model.config.task == "lm":
        return out.T.reshape(x.shape[0], x.shape[1], -1).copy()
    return out.T.copy()


def predict(model: TinyModel, inputs) -> np.ndarray:
    return np.argmax(forward_logits(model, inputs), axis=-1)


def _flat_labels(config: TinyModelConfig, labels, batch: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.intp)
    expected = (batch, config.seq_len) if config.task == "lm" else (batch,)
    if y.shape != expected:
        raise ValueError(f"expected labels of shape {expected}, got {y.shape}")
    return y.ravel()


def _reg_term(graph: _Graph) -> Optional[Var]:
    t = graph.tape
    terms = []
    for name, ad in graph.model.adapters.items():
        if ad.reg is None:
            continue
        a, b = graph.params[name]
        terms.append(t.sum_squares(t.matmul(t.transpose(a), t.constant(ad.reg.p_a))))
        terms.append(t.sum_squares(t.matmul(t.transpose(b), t.constant(ad.reg.p_b))))
    if not terms:
        return None
    total = terms[0]
    for term in terms[1:]:
        total = t.add(total, term)
    return total


def loss_and_grads(model: TinyModel, inputs, labels, *, use_reg: bool = True, l2_weight: float = 0.0,
                   dropout_rng: Optional[np.random.Generator] = None):
    """Composite loss and its gradient for every adapter factor.

    The objective is ``task + lam * reg`` (reg only when ``use_reg`` and the
    adapters carry RegPairs) plus ``l2_weight * sum ||A||^2 + ||B||^2``.
    Returns ``(LossParts, {site: (grad_a, grad_b)})``; ``LossParts.total``
    excludes the L2 term, which is reported by the trainer.
    """
    x = _check_inputs(model.config, inputs)
    y = _flat_labels(model.config, labels, x.shape[0])
    tape = Tape()
    graph = _Graph(model, tape, True, None, dropout_rng if model.config.dropout > 0 else None)
    task = tape.cross_entropy(_forward(graph, x), y)
    objective = task
    reg = _reg_term(graph) if use_reg else None
    reg_value = 0.0 if reg is None else float(reg.value[0, 0])
    lam = model.config.lam
    # lam == 0 leaves the reg branch off the tape, so gradients match plain LoRA bitwise
    if reg is not None and lam != 0.0:
        objective = tape.add(objective, tape.scale(reg, lam))
    if l2_weight:
        for a, b in graph.params.values():
            objective = tape.add(objective, tape.scale(tape.add(tape.sum_squares(a), tape.sum_squares(b)), l2_weight))
    wrt = [v for pair in graph.params.values() for v in pair]
    adj = tape.backward(objective, wrt=wrt)
    grads = {name: (adj[a], adj[b]) for name, (a, b) in graph.params.items()}
    task_value = float(task.value[0, 0])
    return LossParts(task_value, reg_value, task_value + lam * reg_value), grads


def total_loss(model: TinyModel, inputs, labels) -> LossParts:
    x = _check_inputs(model.config, inputs)
    y = _flat_labels(model.config, labels, x.shape[0])
    tape = Tape()
    graph = _Graph(model, tape, False, None, None)
    task = float(tape.cross_entropy(_forward(graph, x), y).value[0, 0])
    reg = sum((lora.clora_reg_loss(ad) for ad in model.adapters.values() if ad.reg is not None), 0.0)
    return LossParts(task, reg, task + model.config.lam * reg)


def collect_layer_inputs(model: TinyModel, sample_inputs) -> dict:
    """Per-site activations entering each adapter site, one row per vector.

    For the transformer every token position of every sample is one row.
    """
    x = _check_inputs(model.config, sample_inputs)
    record: dict = {}
    _forward(_Graph(model, Tape(), False, record, None), x)
    return {name: np.hstack(cols).T.copy() for name, cols in record.items() if name in model.config.sites}


def collect_layer_io(model: TinyModel, sample_inputs) -> dict:
    """Like :func:`collect_layer_inputs` but returns ``{site: (inputs, outputs)}``."""
    x = _check_inputs(model.config, sample_inputs)
    tape = Tape()
    graph = _Graph(model, tape, False, {}, None)
    outputs: dict = {}
    original = graph.site

    def spy(name, h):
        y = original(name, h)
        outputs.setdefault(name, []).append(y.value)
        return y

    graph.site = spy
    _forward(graph, x)
    return {name: (np.hstack(graph.record[name]).T.copy(), np.hstack(outputs[name]).T.copy())
            for name in outputs}


def accuracy(model: TinyModel, inputs, labels) -> float:
    pred = predict(model, inputs)
    return float(np.mean(pred == np.asarray(labels)))
