"""Synthetic task generators for single-task and continual experiments.

Three kinds:

* ``gaussian_classes``: isotropic Gaussian clouds, one per class. Class
  means sit on orthonormal directions, centred, with every pair of means
  ``displacement`` noise-standard-deviations apart. Each task in a sequence
  gets its own directions.
* ``rotated_features``: one gaussian_classes dataset reused for every task,
  task ``t`` seeing its inputs rotated by ``t * rotation`` degrees in every
  plane of a fixed random orthogonal frame. Later tasks move the class means
  across earlier decision boundaries. ``rotation = 0`` repeats one task.
* ``char_lm``: token sequences from a random sparse Markov chain over the
  vocabulary; labels are the next token at every position.

Train and test splits always come from different random streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..linalg import make_rng

KINDS = ("gaussian_classes", "rotated_features", "char_lm")

# sub-streams under task_seed
_TRAIN, _TEST, _GEOMETRY, _FRAME = 0, 1, 2, 3


@dataclass
class SyntheticTaskSpec:
    kind: str = "rotated_features"
    input_dim: int = 64
    num_classes: int = 2
    train_size: int = 512
    test_size: int = 256
    task_seed: int = 0
    displacement: float = 3.0
    rotation: float = 45.0  # degrees between consecutive tasks
    noise: float = 1.0
    # shared component added to every input, along a fixed random direction
    offset: float = 0.0
    # char_lm only
    vocab_size: int = 16
    seq_len: int = 8
    branching: int = 2

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}; expected one of {KINDS}")
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("split sizes must be positive")
        if self.kind == "char_lm":
            if self.vocab_size < 2 or self.seq_len < 1 or not 1 <= self.branching <= self.vocab_size:
                raise ConfigError("char_lm needs vocab_size >= 2, seq_len >= 1, 1 <= branching <= vocab_size")
        else:
            if self.num_classes < 2:
                raise ConfigError("need at least two classes")
            if self.num_classes > self.input_dim:
                raise ConfigError("num_classes cannot exceed input_dim")
            if self.noise <= 0:
                raise ConfigError("noise must be positive")


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.x)

    def head(self, n: int) -> "Dataset":
        return Dataset(self.x[:n], self.y[:n])


@dataclass
class Task:
    train: Dataset
    test: Dataset
    name: str


def balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Class counts differ by at most one."""
    return rng.permutation(np.arange(n) % num_classes)


def class_means(spec: SyntheticTaskSpec, rng: np.random.Generator) -> np.ndarray:
    """num_classes x input_dim, centred, pairwise distance ``displacement * noise``."""
    g = rng.normal(size=(spec.input_dim, spec.num_classes))
    q, _ = np.linalg.qr(g)
    means = q.T * (spec.displacement * spec.noise / np.sqrt(2.0))
    return means - means.mean(axis=0)


def _sample(spec: SyntheticTaskSpec, means: np.ndarray, n: int, rng: np.random.Generator,
            offset_dir: np.ndarray) -> Dataset:
    y = balanced_labels(n, spec.num_classes, rng)
    x = means[y] + spec.noise * rng.normal(size=(n, spec.input_dim)) + spec.offset * offset_dir
    return Dataset(x, y)


def rotation_matrix(dim: int, degrees: float, frame: np.ndarray) -> np.ndarray:
    """Rotate by ``degrees`` in each consecutive column pair of the orthogonal ``frame``."""
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    block = np.eye(dim)
    for i in range(0, dim - 1, 2):
        block[i, i] = block[i + 1, i + 1] = c
        block[i, i + 1] = -s
        block[i + 1, i] = s
    return frame @ block @ frame.T


def _markov_chain(spec: SyntheticTaskSpec, rng: np.random.Generator) -> np.ndarray:
    v = spec.vocab_size
    trans = np.zeros((v, v))
    for i in range(v):
        nxt = rng.choice(v, size=spec.branching, replace=False)
        trans[i, nxt] = rng.dirichlet(np.ones(spec.branching))
    return trans


def _sample_chain(trans: np.ndarray, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
    v = trans.shape[0]
    cdf = np.cumsum(trans, axis=1)
    seq = np.empty((n, length), dtype=np.int64)
    seq[:, 0] = rng.integers(0, v, size=n)
    for t in range(1, length):
        u = rng.random(n)
        seq[:, t] = np.minimum((u[:, None] > cdf[seq[:, t - 1]]).sum(axis=1), v - 1)
    return seq


def generate_tasks(spec: SyntheticTaskSpec, count: int) -> list:
    """``count`` tasks, a deterministic function of ``spec``."""
    spec.validate()
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    seed = spec.task_seed

    if spec.kind == "char_lm":
        tasks = []
        for t in range(count):
            trans = _markov_chain(spec, make_rng(seed, _GEOMETRY, t))
            splits = []
            for stream, n in ((_TRAIN, spec.train_size), (_TEST, spec.test_size)):
                seq = _sample_chain(trans, n, spec.seq_len + 1, make_rng(seed, stream, t))
                splits.append(Dataset(seq[:, :-1], seq[:, 1:]))
            tasks.append(Task(splits[0], splits[1], f"char_lm_{t}"))
        return tasks

    offset_dir = make_rng(seed, _FRAME, 1).normal(size=spec.input_dim)
    offset_dir /= np.linalg.norm(offset_dir)

    if spec.kind == "gaussian_classes":
        tasks = []
        for t in range(count):
            means = class_means(spec, make_rng(seed, _GEOMETRY, t))
            train = _sample(spec, means, spec.train_size, make_rng(seed, _TRAIN, t), offset_dir)
            test = _sample(spec, means, spec.test_size, make_rng(seed, _TEST, t), offset_dir)
            tasks.append(Task(train, test, f"gaussian_{t}"))
        return tasks

    means = class_means(spec, make_rng(seed, _GEOMETRY, 0))
    train = _sample(spec, means, spec.train_size, make_rng(seed, _TRAIN, 0), np.zeros(spec.input_dim))
    test = _sample(spec, means, spec.test_size, make_rng(seed, _TEST, 0), np.zeros(spec.input_dim))
    frame, _ = np.linalg.qr(make_rng(seed, _FRAME, 0).normal(size=(spec.input_dim, spec.input_dim)))
    tasks = []
    for t in range(count):
        rot = rotation_matrix(spec.input_dim, t * spec.rotation, frame)
        tasks.append(Task(
            Dataset(train.x @ rot.T + spec.offset * offset_dir, train.y.copy()),
            Dataset(test.x @ rot.T + spec.offset * offset_dir, test.y.copy()),
            f"rotated_{t}",
        ))
    return tasks
