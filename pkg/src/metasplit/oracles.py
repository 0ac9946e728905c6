"""Independent ground truth: exact minimizers of the 1-D counterexample and Gaussian quadratic-form moments."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import Rng, as_matrix, _check_symmetric
from .solvers import (
    QuadraticAccumulator,
    erm_solve,
    nonsplit_quadratic_stack,
    sandwich_from_parts,
    sandwich_parts_stack,
    split_quadratic_stack,
)
from .tasks import CounterexampleModel, SplitConfig, sample_counterexample_tasks

MAX_ENUM_N = 30
MAX_BRUTE_N = 12


@dataclass(frozen=True)
class CounterexampleMinimizers:
    w_trtr_star: float
    w_test_star: float

    @property
    def gap(self) -> float:
        return abs(self.w_trtr_star - self.w_test_star)


def _minimizers(weights, s, m, lam) -> CounterexampleMinimizers:
    # s = sum x^2 / n and m = sum x y / n for each outcome; weights sum to 1
    cross = math.fsum(w * mi / (si + lam) ** 2 for w, si, mi in zip(weights, s, m))
    curv = math.fsum(w * si / (si + lam) ** 2 for w, si in zip(weights, s))
    flat = math.fsum(w * lam / (si + lam) ** 2 for w, si in zip(weights, s))
    return CounterexampleMinimizers(cross / curv, -cross / flat)


def _check_lam(lam: float) -> None:
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be finite and > 0, got {lam}")


def counterexample_minimizers_exact(n: int, lam: float) -> CounterexampleMinimizers:
    """Population minimizers of the non-split and test losses for the two-point task law.

    With ``k`` rows equal to ``(3, -1)``, ``k ~ Binomial(n, 1/2)``, every
    task statistic depends on ``k`` only, so the expectations are exact sums
    over ``k = 0..n``.
    """
    if not 1 <= n <= MAX_ENUM_N:
        raise ValueError(f"n must be in [1, {MAX_ENUM_N}], got {n}")
    _check_lam(lam)
    ks = range(n + 1)
    weights = [math.comb(n, k) / 2**n for k in ks]
    s = [(n + 8 * k) / n for k in ks]
    m = [3 * (n - 2 * k) / n for k in ks]
    return _minimizers(weights, s, m, lam)


def counterexample_minimizers_bruteforce(n: int, lam: float) -> CounterexampleMinimizers:
    """Same minimizers by summing over all ``2^n`` row assignments (test oracle, ``n <= 12``)."""
    if not 1 <= n <= MAX_BRUTE_N:
        raise ValueError(f"n must be in [1, {MAX_BRUTE_N}], got {n}")
    _check_lam(lam)
    rows = ((1.0, 3.0), (3.0, -1.0))
    s, m = [], []
    for assignment in itertools.product(rows, repeat=n):
        s.append(sum(x * x for x, _ in assignment) / n)
        m.append(sum(x * y for x, y in assignment) / n)
    weights = [0.5**n] * len(s)
    return _minimizers(weights, s, m, lam)


class Moment(NamedTuple):
    value: float
    stderr: float


def quadratic_form_moments(A, samples: int, rng: Rng) -> tuple[Moment, Moment]:
    """Monte-Carlo ``E[(v^T A v)^2]`` and ``E[(v^T A u)^2]`` for independent standard Gaussian ``v, u``.

    Exact values are ``2 ||A||_F^2 + tr(A)^2`` and ``||A||_F^2``.
    """
    A = as_matrix(A, "A")
    _check_symmetric(A)
    if samples < 10_000:
        raise ValueError(f"need at least 1e4 samples, got {samples}")
    gen = rng.generator()
    d = A.shape[0]
    v = gen.standard_normal((samples, d))
    u = gen.standard_normal((samples, d))
    Av = v @ A
    same = np.einsum("si,si->s", Av, v) ** 2
    cross = np.einsum("si,si->s", Av, u) ** 2

    def moment(x):
        return Moment(float(x.mean()), float(x.std(ddof=1) / math.sqrt(samples)))

    return moment(same), moment(cross)


@dataclass(frozen=True)
class CounterexampleFit:
    """Non-split and split ERM on the same counterexample tasks, with sandwich stderrs.

    ``gap_to_test_star`` compares the non-split ERM with the test minimizer at
    sample size ``n``. The split ERM trains its inner solver on ``n1`` rows,
    so its target is the test minimizer at ``n1`` (``split_target``).
    """

    w_hat: float
    stderr: float
    gap_to_test_star: float
    w_split: float
    split_stderr: float
    split_target: float
    exact: CounterexampleMinimizers

    @property
    def split_distance(self) -> float:
        return abs(self.w_split - self.split_target)


def _fit_1d(A, c):
    acc = QuadraticAccumulator.from_stacks(A, c)
    w = erm_solve(acc)
    cov = sandwich_from_parts(*sandwich_parts_stack(A, c, w))
    return float(w[0]), math.sqrt(cov[0, 0] / A.shape[0])


def counterexample_erm_gap(n: int, lam: float, T: int, rng: Rng, n1: int | None = None) -> CounterexampleFit:
    """Fit both ERMs on ``T`` counterexample tasks with ``n`` rows each.

    The split ERM uses the first ``n1`` rows (default ``n - 1``) for the inner
    solver and the rest for validation.
    """
    _check_lam(lam)
    if T < 100:
        raise ValueError(f"T must be >= 100, got {T}")
    if n < 2:
        raise ValueError("need n >= 2 so that the split has a training row")
    n1 = n - 1 if n1 is None else n1
    split = SplitConfig(n1, n - n1)
    if n1 < 1:
        raise ValueError("split needs n1 >= 1")
    exact = counterexample_minimizers_exact(n, lam)
    X, Y = sample_counterexample_tasks(CounterexampleModel(n), rng, T)
    w_hat, se = _fit_1d(*nonsplit_quadratic_stack(X, Y, lam))
    w_split, se_split = _fit_1d(*split_quadratic_stack(X, Y, split, lam))
    target = counterexample_minimizers_exact(n1, lam).w_test_star
    return CounterexampleFit(
        w_hat, se, abs(w_hat - exact.w_test_star), w_split, se_split, target, exact
    )


# short alias kept for existing callers
claim1_moments = quadratic_form_moments
