"""Biased ridge inner solver, the split / non-split outer losses, and their ERM.

Both outer losses are exact quadratics in the centroid ``w0``::

    loss(w0) = 0.5 * ||A w0 - c||^2

so ERM over many tasks reduces to accumulating ``M = sum A^T A`` and
``b = sum A^T c`` and solving ``M w0 = b``.

Two independent routes are kept on purpose. ``ridge_solve`` and the
``*_loss`` functions evaluate the losses directly with a primal solve,
while the ``assemble_*`` functions build ``(A, c)`` through the ridge
operator ``P`` (the dual ``n x n`` form when ``n < d``). Tests check one
against the other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .numerics import (
    NotPositiveDefiniteError,
    as_matrix,
    as_vector,
    min_norm_interpolate,
    solve_spd,
)
from .tasks import SplitConfig, TaskSample, split_task


@dataclass(frozen=True)
class RidgeConfig:
    """Inner ridge strength; ``lam = 0`` selects the min-norm interpolation limit."""

    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class QuadraticForm:
    A: np.ndarray
    c: np.ndarray

    def loss(self, w0) -> float:
        r = self.A @ w0 - self.c
        return 0.5 * float(r @ r)

    def gradient(self, w0) -> np.ndarray:
        return self.A.T @ (self.A @ w0 - self.c)

    def hessian(self) -> np.ndarray:
        return self.A.T @ self.A


@dataclass(frozen=True)
class QuadraticAccumulator:
    """Running sums ``M = sum A^T A``, ``b = sum A^T c`` over ``count`` tasks."""

    M: np.ndarray
    b: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, d: int) -> "QuadraticAccumulator":
        return cls(np.zeros((d, d)), np.zeros(d), 0)

    @classmethod
    def from_forms(cls, forms: Iterable[QuadraticForm]) -> "QuadraticAccumulator":
        acc = None
        for form in forms:
            acc = (acc or cls.empty(form.A.shape[1])).add(form)
        if acc is None:
            raise ValueError("no forms to accumulate")
        return acc

    @classmethod
    def from_stacks(cls, A: np.ndarray, c: np.ndarray) -> "QuadraticAccumulator":
        """Sum a stack of forms with ``A`` of shape (T, m, d) and ``c`` of shape (T, m)."""
        M = np.einsum("tmi,tmj->ij", A, A)
        b = np.einsum("tmi,tm->i", A, c)
        return cls(0.5 * (M + M.T), b, A.shape[0])

    def add(self, form: QuadraticForm) -> "QuadraticAccumulator":
        H = form.A.T @ form.A
        return QuadraticAccumulator(
            self.M + 0.5 * (H + H.T), self.b + form.A.T @ form.c, self.count + 1
        )

    def merge(self, other: "QuadraticAccumulator") -> "QuadraticAccumulator":
        return QuadraticAccumulator(self.M + other.M, self.b + other.b, self.count + other.count)

    def gradient(self, w0) -> np.ndarray:
        return self.M @ w0 - self.b


# --- inner solver ---------------------------------------------------------


def ridge_solve(w0, X, y, cfg: RidgeConfig) -> np.ndarray:
    """Ridge regression shrunk towards ``w0``.

    Returns ``w0 + (X^T X + n lam I)^{-1} X^T (y - X w0)``; with ``lam = 0``
    this becomes the closest interpolator to ``w0``. An empty ``X`` returns
    ``w0``.
    """
    w0 = as_vector(w0, "w0")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != w0.shape[0] or y.shape != (X.shape[0],):
        raise ValueError(f"dimension mismatch: w0{w0.shape}, X{X.shape}, y{y.shape}")
    n, d = X.shape
    if n == 0:
        return w0.copy()
    resid = y - X @ w0
    if cfg.lam == 0:
        return w0 + min_norm_interpolate(X, resid)
    return w0 + solve_spd(X.T @ X + n * cfg.lam * np.eye(d), X.T @ resid)


def split_loss(w0, task: TaskSample, split: SplitConfig, cfg: RidgeConfig) -> float:
    _check_split_args(split, cfg)
    train, val = split_task(task, split)
    w = ridge_solve(w0, train.X, train.y, cfg)
    r = val.y - val.X @ w
    return float(r @ r) / (2 * split.n2)


def nonsplit_loss(w0, task: TaskSample, cfg: RidgeConfig) -> float:
    _check_nonsplit_args(cfg)
    w = ridge_solve(w0, task.X, task.y, cfg)
    r = task.y - task.X @ w
    return float(r @ r) / (2 * task.n)


def _check_split_args(split: SplitConfig, cfg: RidgeConfig) -> None:
    if cfg.lam == 0 and split.n1 == 0:
        raise ValueError("split loss with lam = 0 needs at least one training row")


def _check_nonsplit_args(cfg: RidgeConfig) -> None:
    if cfg.lam <= 0:
        raise ValueError("non-split loss requires lam > 0; it is identically 0 at lam = 0")


# --- quadratic forms --------------------------------------------------------


def _apply_ridge_operator(Xtr: np.ndarray, lam: float, Xv: np.ndarray) -> np.ndarray:
    """Return ``Xv @ P`` for stacks, where ``P`` is the ridge operator of ``Xtr``.

    ``P = (Xtr^T Xtr + n1 lam I)^{-1} Xtr^T``, so the inner solution is
    ``w0 + P (ytr - Xtr w0)``. Shapes: ``Xtr`` (..., n1, d), ``Xv`` (..., m, d),
    result (..., m, n1).
    """
    n1, d = Xtr.shape[-2:]
    XtrT = np.swapaxes(Xtr, -1, -2)
    if lam == 0:
        P = np.linalg.pinv(Xtr, rcond=1e-10)
        return Xv @ P
    if n1 < d:
        # dual form: P = Xtr^T (Xtr Xtr^T + n1 lam I)^{-1}
        K = Xtr @ XtrT + n1 * lam * np.eye(n1)
        Z = np.linalg.solve(K, Xtr @ np.swapaxes(Xv, -1, -2))
        return np.swapaxes(Z, -1, -2)
    G = XtrT @ Xtr + n1 * lam * np.eye(d)
    P = np.linalg.solve(G, XtrT)
    return Xv @ P


def split_quadratic_stack(X: np.ndarray, y: np.ndarray, split: SplitConfig, lam: float):
    """Build ``(A, c)`` of the split loss for a stack of tasks.

    ``X`` is (T, n, d) and ``y`` is (T, n); returns ``A`` (T, n2, d) and
    ``c`` (T, n2).
    """
    _check_split_args(split, RidgeConfig(lam))
    if X.shape[-2] != split.n:
        raise ValueError(f"split ({split.n1}, {split.n2}) does not match n={X.shape[-2]}")
    k = split.n1
    Xtr, ytr, Xv, yv = X[..., :k, :], y[..., :k], X[..., k:, :], y[..., k:]
    scale = 1.0 / math.sqrt(split.n2)
    if k == 0:
        return Xv * scale, yv * scale
    XvP = _apply_ridge_operator(Xtr, lam, Xv)
    A = Xv - XvP @ Xtr
    c = yv - np.einsum("...mk,...k->...m", XvP, ytr)
    return A * scale, c * scale


def nonsplit_quadratic_stack(X: np.ndarray, y: np.ndarray, lam: float):
    _check_nonsplit_args(RidgeConfig(lam))
    n = X.shape[-2]
    XP = _apply_ridge_operator(X, lam, X)
    A = X - XP @ X
    c = y - np.einsum("...mk,...k->...m", XP, y)
    scale = 1.0 / math.sqrt(n)
    return A * scale, c * scale


def assemble_split_quadratic(task: TaskSample, split: SplitConfig, cfg: RidgeConfig) -> QuadraticForm:
    A, c = split_quadratic_stack(task.X, task.y, split, cfg.lam)
    return QuadraticForm(A, c)


def assemble_nonsplit_quadratic(task: TaskSample, cfg: RidgeConfig) -> QuadraticForm:
    A, c = nonsplit_quadratic_stack(task.X, task.y, cfg.lam)
    return QuadraticForm(A, c)


# --- ERM and its sandwich covariance -----------------------------------------


def erm_solve(acc: QuadraticAccumulator) -> np.ndarray:
    """Minimizer ``M^{-1} b`` of the accumulated empirical risk.

    A singular ``M`` (too few informative rows) is reported, never regularized.
    """
    try:
        return solve_spd(acc.M, acc.b)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"accumulated Hessian over {acc.count} tasks is singular; add tasks"
        ) from exc


def sandwich_parts_stack(A: np.ndarray, c: np.ndarray, w_hat) -> tuple[np.ndarray, np.ndarray]:
    """Mean Hessian and mean gradient outer product of stacked losses at ``w_hat``.

    ``A`` is (T, m, d) and ``c`` is (T, m).
    """
    w_hat = as_vector(w_hat, "w_hat")
    if A.ndim != 3 or A.shape[0] == 0:
        raise ValueError(f"expected a nonempty (T, m, d) stack, got {A.shape}")
    T = A.shape[0]
    H = np.einsum("tmi,tmj->ij", A, A) / T
    r = np.einsum("tmd,d->tm", A, w_hat) - c
    g = np.einsum("tmi,tm->ti", A, r)
    C = g.T @ g / T
    return 0.5 * (H + H.T), 0.5 * (C + C.T)


def sandwich_parts(forms: Sequence[QuadraticForm], w_hat) -> tuple[np.ndarray, np.ndarray]:
    """Mean Hessian and mean gradient outer product of the per-task losses at ``w_hat``."""
    forms = list(forms)
    if not forms:
        raise ValueError("no forms given")
    A = np.stack([f.A for f in forms])
    c = np.stack([f.c for f in forms])
    return sandwich_parts_stack(A, c, w_hat)


def sandwich_from_parts(H: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Plug-in estimate ``H^{-1} C H^{-1}`` of the asymptotic covariance of the ERM.

    Its trace estimates the T-scaled mean squared error of the ERM.
    """
    left = solve_spd(H, C)
    cov = solve_spd(H, left.T).T
    return 0.5 * (cov + cov.T)


def sandwich_covariance(forms: Sequence[QuadraticForm], w_hat) -> np.ndarray:
    return sandwich_from_parts(*sandwich_parts(forms, w_hat))
