"""Seeded random streams and the dense linear algebra the rest of the package uses.

Matrices and vectors are plain float64 numpy arrays. The helpers here validate
shape and finiteness once at the boundary so the numerical code can stay lean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

_U64 = 1 << 64

# Relative pivot floor for the Cholesky factorization in solve_spd.
PIVOT_FLOOR = 1e-13
# Relative singular-value cutoff for the pseudo-inverse.
PINV_RCOND = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix that must be SPD fails its Cholesky factorization."""


@dataclass(frozen=True)
class Rng:
    """Counter-style random stream: a root seed plus a path of stream indices.

    The same ``(seed, stream)`` pair always yields the same numbers, and
    ``derive`` gives child streams that do not depend on how many other
    streams were drawn before. Monte-Carlo code derives one child per task or
    per replicate, so results do not depend on execution order.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        stream = self.stream
        if isinstance(stream, (int, np.integer)):
            stream = (int(stream),)
        stream = tuple(int(k) for k in stream)
        for value in (self.seed, *stream):
            if not 0 <= int(value) < _U64:
                raise ValueError(f"seed and stream indices must fit in 64 bits, got {value}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", stream)

    def derive(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.stream + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(seq))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def gaussian_matrix(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """I.i.d. standard normal ``rows x cols`` matrix drawn from ``rng``'s stream."""
    if rows < 1 or cols < 1:
        raise ValueError(f"rows and cols must be >= 1, got ({rows}, {cols})")
    return rng.generator().standard_normal((rows, cols))


def _check_symmetric(S: np.ndarray, rtol: float = 1e-12) -> None:
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S))) if S.size else 0.0)
    if np.max(np.abs(S - S.T), initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")


def sym_eigvals(S) -> np.ndarray:
    """Eigenvalues of a symmetric matrix in descending order."""
    S = as_matrix(S, "S")
    _check_symmetric(S)
    return np.linalg.eigvalsh(S)[::-1].copy()


def gram_eigvals(X) -> np.ndarray:
    """Descending eigenvalues of ``X.T @ X / n`` for an ``n x d`` matrix.

    When ``n < d`` the Gram matrix is rank deficient, so the nonzero part comes
    from the singular values of ``X / sqrt(n)`` and the rest is padded with
    exact zeros.
    """
    X = as_matrix(X, "X")
    n, d = X.shape
    if n < d:
        sv = np.linalg.svd(X / np.sqrt(n), compute_uv=False)
        out = np.zeros(d)
        out[: sv.size] = sv**2
        return out
    return sym_eigvals(X.T @ X / n)


def solve_spd(S, b) -> np.ndarray:
    """Solve ``S x = b`` for symmetric positive definite ``S`` via Cholesky.

    ``b`` may be a vector or a matrix of right-hand sides. Raises
    NotPositiveDefiniteError if the factorization fails or a pivot falls
    below ``PIVOT_FLOOR`` relative to the largest diagonal entry.
    """
    S = as_matrix(S, "S")
    _check_symmetric(S, rtol=1e-10)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != S.shape[0]:
        raise ValueError(f"dimension mismatch: S is {S.shape}, b is {b.shape}")
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    pivots = np.diag(L) ** 2
    scale = float(np.max(np.diag(S)))
    if pivots.min() <= PIVOT_FLOOR * scale:
        raise NotPositiveDefiniteError(
            f"Cholesky pivot {pivots.min():.3e} below floor (scale {scale:.3e})"
        )
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, z, lower=False, check_finite=False)


def min_norm_interpolate(X, r) -> np.ndarray:
    """Return ``pinv(X) @ r``; singular values below 1e-10 * max are dropped."""
    X = as_matrix(X, "X")
    r = as_vector(r, "r")
    if r.shape[0] != X.shape[0]:
        raise ValueError(f"dimension mismatch: X is {X.shape}, r has {r.shape[0]} entries")
    if X.shape[0] == 0:
        return np.zeros(X.shape[1])
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > PINV_RCOND * s[0] if s.size else s.astype(bool)
    coef = (U[:, keep].T @ r) / s[keep]
    return Vt[keep].T @ coef
