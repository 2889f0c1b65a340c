"""Versioned binary checkpoints.

Layout (all integers and floats little-endian)::

    magic        8 bytes  b"CLORACKP"
    version      u8       FORMAT_VERSION
    config hash  32 bytes SHA-256 of the experiment config (see config_hash)
    seed         u64      training seed
    step         u64      optimizer steps taken
    n_records    u32
    records      n_records x {name_len u16, name utf-8, rows u32, cols u32,
                              rows*cols f64 row-major}

Record names: ``base/<name>``, ``adapter/<site>/{a,b}``,
``reg/<site>/{p_a,p_b}``, ``opt/{m,v}/<site>/{a,b}``, ``train/epoch_losses``
and ``train/running`` (1 x n rows). Shuffle and dropout streams are keyed by
(seed, epoch) and (seed, step), so seed and step are the whole RNG state.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..adapter import LoraAdapter, RegPair
from ..errors import CheckpointError
from ..model import TinyModel
from ..trainer import AdamState, TrainState
from .config import ExperimentConfig, config_hash
from .experiment import model_config_for

MAGIC = b"CLORACKP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sB32sQQI")


def _records(model: TinyModel, state: TrainState):
    for name in sorted(model.base):
        yield f"base/{name}", model.base[name]
    for site in sorted(model.adapters):
        ad = model.adapters[site]
        yield f"adapter/{site}/a", ad.a
        yield f"adapter/{site}/b", ad.b
        if ad.reg is not None:
            yield f"reg/{site}/p_a", ad.reg.p_a
            yield f"reg/{site}/p_b", ad.reg.p_b
    for moment, table in (("m", state.optimizer.m), ("v", state.optimizer.v)):
        for (site, factor) in sorted(table):
            yield f"opt/{moment}/{site}/{factor}", table[(site, factor)]
    yield "train/epoch_losses", np.asarray(state.epoch_losses, dtype=np.float64).reshape(1, -1)
    yield "train/running", np.asarray(state.running, dtype=np.float64).reshape(1, -1)


def dumps(cfg: ExperimentConfig, model: TinyModel, state: TrainState) -> bytes:
    records = list(_records(model, state))
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, config_hash(cfg), cfg.train.seed, state.step, len(records))]
    for name, arr in records:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def save(path, cfg: ExperimentConfig, model: TinyModel, state: TrainState) -> None:
    Path(path).write_bytes(dumps(cfg, model, state))


def _parse(blob: bytes):
    if len(blob) < _HEADER.size:
        raise CheckpointError("checkpoint truncated")
    magic, version, digest, seed, step, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEADER.size
    records = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode()
            pos += nlen
            rows, cols = struct.unpack_from("<II", blob, pos)
            pos += 8
            size = rows * cols * 8
            if pos + size > len(blob):
                raise CheckpointError("checkpoint truncated")
            records[name] = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
            pos += size
    except struct.error as exc:
        raise CheckpointError("checkpoint truncated") from exc
    if pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint records")
    return digest, seed, step, records


def loads(blob: bytes, cfg: ExperimentConfig):
    """Rebuild ``(model, state)``; fails if the checkpoint came from another config."""
    digest, seed, step, rec = _parse(blob)
    if digest != config_hash(cfg):
        raise CheckpointError("checkpoint was written under a different config")
    if seed != cfg.train.seed:
        raise CheckpointError("checkpoint seed does not match the config")
    mcfg = model_config_for(cfg)
    base = {}
    for name, arr in rec.items():
        if name.startswith("base/"):
            arr.flags.writeable = False
            base[name[len("base/"):]] = arr
    adapters = {}
    for site in mcfg.targets:
        try:
            a, b = rec[f"adapter/{site}/a"], rec[f"adapter/{site}/b"]
        except KeyError as exc:
            raise CheckpointError(f"missing record {exc.args[0]}") from exc
        reg = None
        if f"reg/{site}/p_a" in rec:
            reg = RegPair(rec[f"reg/{site}/p_a"], rec[f"reg/{site}/p_b"], mcfg.reg_variant)
        adapters[site] = LoraAdapter(w=base[site], a=a, b=b, alpha=mcfg.alpha, reg=reg)
    opt = AdamState()
    for name, arr in rec.items():
        if name.startswith("opt/"):
            _, moment, site, factor = name.split("/")
            getattr(opt, moment)[(site, factor)] = arr
    state = TrainState(
        step=int(step),
        optimizer=opt,
        epoch_losses=[float(v) for v in rec["train/epoch_losses"].ravel()],
        running=[float(v) for v in rec["train/running"].ravel()],
    )
    return TinyModel(mcfg, base, adapters), state


def load(path, cfg: ExperimentConfig):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(blob, cfg)
