import numpy as np
import pytest
from hypothesis import given, strategies as st

from metasplit.numerics import (
    NotPositiveDefiniteError,
    Rng,
    gaussian_matrix,
    gram_eigvals,
    min_norm_interpolate,
    solve_spd,
    sym_eigvals,
)


def test_rng_is_reproducible_and_streams_differ():
    a = Rng(5).derive(1, 2).generator().standard_normal(4)
    b = Rng(5, (1, 2)).generator().standard_normal(4)
    c = Rng(5).derive(1, 3).generator().standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_rng_normalizes_int_stream_and_rejects_out_of_range():
    assert Rng(1, 3) == Rng(1, (3,))
    with pytest.raises(ValueError):
        Rng(-1)
    with pytest.raises(ValueError):
        Rng(1).derive(1 << 64)


def test_child_stream_does_not_depend_on_siblings():
    root = Rng(9)
    first = root.derive(7).generator().standard_normal(3)
    for k in range(5):
        root.derive(k).generator().standard_normal(100)
    np.testing.assert_array_equal(first, root.derive(7).generator().standard_normal(3))


def test_sym_eigvals_descending_and_rejects_asymmetric():
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(sym_eigvals(S), [3.0, 1.0])
    with pytest.raises(ValueError):
        sym_eigvals(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        sym_eigvals(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@given(n=st.integers(1, 12), d=st.integers(1, 12), seed=st.integers(0, 2**32))
def test_gram_eigvals_matches_dense_eigendecomposition(n, d, seed):
    X = gaussian_matrix(Rng(seed), n, d)
    expected = np.sort(np.linalg.eigvalsh(X.T @ X / n))[::-1]
    got = gram_eigvals(X)
    assert got.shape == (d,)
    assert np.all(np.diff(got) <= 0)
    np.testing.assert_allclose(got, expected, atol=1e-12 * max(1.0, expected[0]))
    if n < d:
        assert np.all(got[n:] == 0.0)


@given(d=st.integers(1, 10), seed=st.integers(0, 2**32))
def test_solve_spd_solves(d, seed):
    B = gaussian_matrix(Rng(seed), d + 2, d)
    S = B.T @ B + 0.1 * np.eye(d)
    b = Rng(seed).derive(1).generator().standard_normal((d, 3))
    x = solve_spd(S, b)
    np.testing.assert_allclose(S @ x, b, atol=1e-9 * np.abs(b).max())
    np.testing.assert_allclose(solve_spd(S, b[:, 0]), x[:, 0], rtol=1e-12, atol=1e-14)


def test_solve_spd_rejects_singular_and_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(NotPositiveDefiniteError):
        solve_spd(np.diag([1.0, 1e-15]), np.ones(2))
    assert issubclass(NotPositiveDefiniteError, np.linalg.LinAlgError)


@given(n=st.integers(1, 8), d=st.integers(1, 8), seed=st.integers(0, 2**32))
def test_min_norm_interpolate_equals_pinv(n, d, seed):
    X = gaussian_matrix(Rng(seed), n, d)
    r = Rng(seed).derive(1).generator().standard_normal(n)
    w = min_norm_interpolate(X, r)
    np.testing.assert_allclose(w, np.linalg.pinv(X) @ r, atol=1e-9)
    if n <= d:
        np.testing.assert_allclose(X @ w, r, atol=1e-9)


def test_min_norm_interpolate_empty_rows():
    np.testing.assert_array_equal(min_norm_interpolate(np.zeros((0, 3)), np.zeros(0)), np.zeros(3))
