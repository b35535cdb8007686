import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icsdetect.exceptions import InputError, SingularMatrixError
from icsdetect.linalg import cholesky_lower, mahalanobis_sq, solve_spd, sym_eigen


def spd(p, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, p + 3))
    return A @ A.T + 0.1 * np.eye(p)


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 12), seed=st.integers(0, 10**6))
def test_cholesky_reconstructs(p, seed):
    A = spd(p, seed)
    L = cholesky_lower(A)
    assert np.allclose(np.triu(L, 1), 0.0)
    assert np.all(np.diag(L) > 0)
    np.testing.assert_allclose(L @ L.T, A, rtol=1e-12, atol=1e-12 * np.abs(A).max())
    # independent reference factorization
    np.testing.assert_allclose(L, np.linalg.cholesky(A), rtol=1e-9, atol=1e-12)


def test_cholesky_reports_failing_pivot():
    A = np.eye(4)
    A[2, 2] = 1.0
    A[:, 2] = A[:, 0]
    A[2, :] = A[0, :]
    with pytest.raises(SingularMatrixError) as err:
        cholesky_lower(A)
    assert err.value.index == 2


def test_cholesky_rejects_indefinite():
    with pytest.raises(SingularMatrixError):
        cholesky_lower(np.array([[1.0, 2.0], [2.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 10), seed=st.integers(0, 10**6))
def test_sym_eigen_decomposition(p, seed):
    A = spd(p, seed) - 2.0 * np.eye(p)
    eig = sym_eigen(A)
    assert np.all(np.diff(eig.values) <= 1e-12)
    np.testing.assert_allclose(eig.vectors @ np.diag(eig.values) @ eig.vectors.T, A, atol=1e-10)
    np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(p), atol=1e-12)
    np.testing.assert_allclose(eig.values, np.sort(np.linalg.eigvalsh(A))[::-1], atol=1e-10)


def test_sym_eigen_input_checks():
    with pytest.raises(InputError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(InputError):
        sym_eigen(np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(InputError):
        sym_eigen(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_solve_spd(rng):
    A = spd(5, 3)
    B = rng.standard_normal((5, 2))
    np.testing.assert_allclose(A @ solve_spd(A, B), B, atol=1e-10)


def test_mahalanobis_matches_explicit_inverse(rng):
    V = spd(4, 9)
    m = rng.standard_normal(4)
    X = rng.standard_normal((30, 4))
    Vi = np.linalg.inv(V)
    expected = np.einsum("ij,jk,ik->i", X - m, Vi, X - m)
    np.testing.assert_allclose(mahalanobis_sq(X, m, V), expected, rtol=1e-10)
    assert mahalanobis_sq(m, m, V) == pytest.approx(0.0, abs=1e-14)
