"""Asymptotic estimation rates of the split and non-split centroid estimators.

Finite ``(n, d)`` rates are ratios of expectations over the spectrum of the
per-task Gram matrix ``X^T X / n`` and are estimated by Monte Carlo. In the
proportional limit ``d / n -> gamma`` they have closed forms built from the
Marchenko-Pastur Stieltjes transform.

All rates are per unit ``R^2`` unless an ``r_sq`` argument says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .numerics import Rng, gaussian_matrix, gram_eigvals

CLOSED_FORM = "closed_form"
MONTE_CARLO = "monte_carlo"

LAMBDA_BRACKET = (1e-4, 1e4)
_INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class RateEstimate:
    value: float
    stderr: float
    method: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.method not in (CLOSED_FORM, MONTE_CARLO):
            raise ValueError(f"unknown method tag {self.method!r}")
        if (self.stderr == 0) != (self.method == CLOSED_FORM):
            raise ValueError("stderr must be 0 exactly for closed forms and only for them")
        if not (self.value >= 0 and self.stderr >= 0):
            raise ValueError(f"negative rate or stderr: {self.value}, {self.stderr}")


@dataclass(frozen=True)
class ShapePoint:
    lam: float
    gamma: float

    def __post_init__(self):
        for name in ("lam", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")


class OptimizeResult(NamedTuple):
    lambda_star: float
    value: float


# --- Monte-Carlo rates at finite (n, d) --------------------------------------


@lru_cache(maxsize=64)
def wishart_spectra(d: int, n: int, samples: int, rng: Rng) -> np.ndarray:
    """``samples x d`` array of descending eigenvalues of ``X^T X / n``.

    Spectrum ``i`` is drawn from ``rng.derive(i)``. Results are cached (and
    read-only) so several regularization strengths can share the draws.
    """
    if d < 1 or n < 1 or samples < 1:
        raise ValueError(f"need d, n, samples >= 1, got ({d}, {n}, {samples})")
    out = np.empty((samples, d))
    for i in range(samples):
        out[i] = gram_eigvals(gaussian_matrix(rng.derive(i), n, d))
    out.flags.writeable = False
    return out


def _ratio_of_means(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    """``mean(num) / mean(den)**2`` and its delta-method standard error."""
    k = num.shape[0]
    a, b = num.mean(), den.mean()
    value = a / b**2
    if k < 2:
        return value, 0.0
    cov = np.cov(np.vstack([num, den]), ddof=1) / k
    grad = np.array([1 / b**2, -2 * a / b**3])
    return value, math.sqrt(max(float(grad @ cov @ grad), 0.0))


def rho_trtr_mc(d: int, n: int, lam: float, samples: int, rng: Rng, r_sq: float = 1.0) -> RateEstimate:
    """Monte-Carlo AsymMSE of the non-split estimator at finite ``(n, d)``.

    ``d R^2 E[sum s^2/(s+lam)^4] / E[sum s/(s+lam)^2]^2`` over Gram spectra ``s``.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    sig = wishart_spectra(d, n, samples, rng)
    num = np.sum(sig**2 / (sig + lam) ** 4, axis=1)
    den = np.sum(sig / (sig + lam) ** 2, axis=1)
    ratio, se = _ratio_of_means(num, den)
    scale = d * r_sq
    meta = dict(d=d, n=n, lam=lam, r_sq=r_sq, samples=samples)
    return RateEstimate(scale * ratio, scale * se, MONTE_CARLO, meta)


def rho_sp_mc(
    d: int, n1: int, n2: int, lam: float, samples: int, rng: Rng, r_sq: float = 1.0
) -> RateEstimate:
    """Monte-Carlo AsymMSE of the split estimator with ``n1`` train and ``n2`` validation rows.

    ``(d R^2 / n2) E[S^2 + (n2+1) Q] / E[S]^2`` with ``S = sum lam^2/(s+lam)^2``
    and ``Q = sum lam^4/(s+lam)^4`` over spectra of the ``n1``-row Gram
    matrix. ``n1 = 0`` has no randomness left and returns the exact value.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if n2 < 1 or n1 < 0:
        raise ValueError(f"need n1 >= 0 and n2 >= 1, got ({n1}, {n2})")
    meta = dict(d=d, n1=n1, n2=n2, lam=lam, r_sq=r_sq, samples=samples)
    if n1 == 0:
        return RateEstimate((d + n2 + 1) * r_sq / n2, 0.0, CLOSED_FORM, meta)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    sig = wishart_spectra(d, n1, samples, rng)
    shrink = (lam / (sig + lam)) ** 2
    S = shrink.sum(axis=1)
    Q = (shrink**2).sum(axis=1)
    ratio, se = _ratio_of_means(S**2 + (n2 + 1) * Q, S)
    scale = d * r_sq / n2
    return RateEstimate(scale * ratio, scale * se, MONTE_CARLO, meta)


def sp_optimal_rate(d: int, n2: int, r_sq: float = 1.0) -> RateEstimate:
    """Best split rate over ``lam`` (attained as ``lam -> inf``): ``(d + n2 + 1) R^2 / n2``."""
    if n2 < 1:
        raise ValueError("n2 must be >= 1")
    value = (d + n2 + 1) * r_sq / n2
    return RateEstimate(value, 0.0, CLOSED_FORM, dict(d=d, n2=n2, r_sq=r_sq))


# --- proportional limit --------------------------------------------------------


def _mp_discriminant(z, gamma):
    """``(z + 1 + gamma)^2 - 4 gamma`` in factored form, which stays accurate near 0."""
    rg = np.sqrt(gamma)
    disc = (z + (rg - 1) ** 2) * (z + (rg + 1) ** 2)
    if np.any(disc <= 0):
        raise FloatingPointError("Marchenko-Pastur discriminant must be positive")
    return disc


def stieltjes_mp(lambda1: float, lambda2: float, gamma: float) -> float:
    """Limit of ``(1/d) E tr((lambda1 I + lambda2 S)^{-1})`` for a Gram matrix ``S`` with ``d/n -> gamma``."""
    if min(lambda1, lambda2, gamma) <= 0:
        raise ValueError("lambda1, lambda2 and gamma must be > 0")
    z = lambda1 / lambda2
    root = math.sqrt(_mp_discriminant(z, gamma))
    head = gamma - 1 - z
    if head >= 0:
        return (head + root) / (2 * gamma * lambda1)
    # rationalized numerator avoids cancellation when z + 1 > gamma
    return 2 * z / (lambda1 * (root - head))


def limit_resolvent_sq(lam: float, gamma: float) -> float:
    """Limit of ``(1/d) E tr((S + lam I)^{-2} S)``, i.e. ``-ds/dlambda2`` at ``(lam, 1)``."""
    a = lam + 1 + gamma
    root = math.sqrt(_mp_discriminant(lam, gamma))
    # (a - root) / (2 gamma root) without the cancellation in a - root
    return 2 / (root * (a + root))


def limit_resolvent_quartic(lam: float, gamma: float) -> float:
    """Limit of ``(1/d) E tr((S + lam I)^{-4} S^2)``, i.e. ``-(1/6) d/dlambda1 d2/dlambda2^2 s``."""
    disc = _mp_discriminant(lam, gamma)
    return ((gamma - 1) ** 2 + (gamma + 1) * lam) / disc**2.5


def _rho(lam, gamma):
    a = lam + 1 + gamma
    disc = _mp_discriminant(lam, gamma)
    root = np.sqrt(disc)
    # a - root == 4 gamma / (a + root); this form is stable for large lam
    return ((gamma - 1) ** 2 + (gamma + 1) * lam) * (a + root) ** 2 / (4 * disc**1.5)


def rho_limit(point: ShapePoint) -> float:
    """Proportional-limit AsymMSE of the non-split estimator per unit ``R^2``."""
    return float(_rho(point.lam, point.gamma))


def golden_section(f, a: float, b: float, tol: float) -> float:
    """Minimizer of a unimodal ``f`` on ``[a, b]`` to absolute tolerance ``tol``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimize_rho(gamma: float, tol: float = 1e-10) -> OptimizeResult:
    """Minimize ``rho_limit`` over ``lam`` in ``LAMBDA_BRACKET`` by golden section on ``log lam``.

    ``tol`` is the relative tolerance on ``lam``.
    """
    if gamma <= 0 or tol <= 0:
        raise ValueError("gamma and tol must be > 0")
    lo, hi = (math.log(v) for v in LAMBDA_BRACKET)
    f = lambda t: float(_rho(math.exp(t), gamma))
    t_star = golden_section(f, lo, hi, tol)
    value = f(t_star)
    if not (f(lo) > value and f(hi) > value):
        raise RuntimeError(f"minimum of rho at gamma={gamma} sits on the bracket edge")
    return OptimizeResult(math.exp(t_star), value)


def rho_upper_bound(gamma: float) -> float:
    """Analytic upper bound ``max(1 + 5 gamma / 27, 5/27 + gamma)`` on the optimal non-split rate."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return max(1 + 5 * gamma / 27, 5 / 27 + gamma)


def sp_limit_rate(gamma: float) -> float:
    """Optimal split rate per unit ``R^2`` in the proportional limit."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return 1 + gamma
