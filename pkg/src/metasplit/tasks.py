"""Task distributions: the noiseless Gaussian linear model and the 1-D two-point counterexample."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, as_vector


@dataclass(frozen=True)
class RealizableModel:
    """Tasks ``y = X w_t`` with ``X`` standard Gaussian and ``w_t = centroid + param_std * g``.

    ``param_std`` defaults to ``1/sqrt(d)``, which makes the task variance
    ``R^2 = E||w_t - centroid||^2`` equal to 1.
    """

    d: int
    n: int
    centroid: np.ndarray = None
    param_std: float = None

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError(f"d and n must be >= 1, got d={self.d}, n={self.n}")
        centroid = np.zeros(self.d) if self.centroid is None else as_vector(self.centroid, "centroid")
        if centroid.shape != (self.d,):
            raise ValueError(f"centroid must have length {self.d}")
        std = 1.0 / math.sqrt(self.d) if self.param_std is None else float(self.param_std)
        if not (std >= 0 and math.isfinite(std)):
            raise ValueError(f"param_std must be finite and >= 0, got {std}")
        object.__setattr__(self, "centroid", centroid)
        object.__setattr__(self, "param_std", std)

    @property
    def r_sq(self) -> float:
        return self.d * self.param_std**2


@dataclass(frozen=True)
class CounterexampleModel:
    """Rows ``(x, y)`` are ``(1, 3)`` or ``(3, -1)`` with probability 1/2 each; ``d = 1``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class TaskSample:
    X: np.ndarray
    y: np.ndarray
    w_true: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"inconsistent task shapes X{self.X.shape}, y{self.y.shape}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SplitConfig:
    """First ``n1`` rows train the inner solver, the remaining ``n2`` validate."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 1:
            raise ValueError(f"need n1 >= 0 and n2 >= 1, got ({self.n1}, {self.n2})")

    @property
    def n(self) -> int:
        return self.n1 + self.n2


# Tasks are drawn in fixed-size blocks: task i is row i % TASK_BLOCK of the
# block drawn from rng.derive(i // TASK_BLOCK). The first T tasks are the same
# whatever total is requested, and one generator serves many tasks.
TASK_BLOCK = 256


def _realizable_block(model: RealizableModel, rng: Rng, block: int):
    gen = rng.derive(block).generator()
    W = model.centroid + model.param_std * gen.standard_normal((TASK_BLOCK, model.d))
    X = gen.standard_normal((TASK_BLOCK, model.n, model.d))
    return W, X


def _counterexample_block(model: CounterexampleModel, rng: Rng, block: int):
    gen = rng.derive(block).generator()
    return gen.integers(0, 2, size=(TASK_BLOCK, model.n)).astype(bool)


def _gather(block_fn, count: int):
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    nblocks = -(-count // TASK_BLOCK)
    parts = [block_fn(b) for b in range(nblocks)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p)[:count] for p in zip(*parts))
    return np.concatenate(parts)[:count]


def sample_realizable_tasks(model: RealizableModel, rng: Rng, count: int):
    """Stacks ``(W, X, Y)`` of shapes (count, d), (count, n, d), (count, n) for tasks ``0..count-1``."""
    W, X = _gather(lambda b: _realizable_block(model, rng, b), count)
    return W, X, np.einsum("tnd,td->tn", X, W)


def sample_counterexample_tasks(model: CounterexampleModel, rng: Rng, count: int):
    """Stacks ``(X, Y)`` of shapes (count, n, 1) and (count, n) for tasks ``0..count-1``."""
    flip = _gather(lambda b: _counterexample_block(model, rng, b), count)
    X = np.where(flip, 3.0, 1.0)[..., None]
    Y = np.where(flip, -1.0, 3.0)
    return X, Y


def sample_realizable_task(model: RealizableModel, rng: Rng, task_index: int) -> TaskSample:
    W, X = _realizable_block(model, rng, task_index // TASK_BLOCK)
    i = task_index % TASK_BLOCK
    return TaskSample(X[i], X[i] @ W[i], W[i])


def sample_counterexample_task(model: CounterexampleModel, rng: Rng, task_index: int) -> TaskSample:
    flip = _counterexample_block(model, rng, task_index // TASK_BLOCK)[task_index % TASK_BLOCK]
    x = np.where(flip, 3.0, 1.0)
    y = np.where(flip, -1.0, 3.0)
    return TaskSample(x[:, None], y)


def split_task(task: TaskSample, split: SplitConfig) -> tuple[TaskSample, TaskSample]:
    """Prefix split: rows are exchangeable, so no shuffling is needed."""
    if split.n != task.n:
        raise ValueError(f"split ({split.n1}, {split.n2}) does not match task with n={task.n}")
    k = split.n1
    return (
        TaskSample(task.X[:k], task.y[:k], task.w_true),
        TaskSample(task.X[k:], task.y[k:], task.w_true),
    )
