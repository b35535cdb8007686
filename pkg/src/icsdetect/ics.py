"""Invariant coordinate selection: simultaneous diagonalization of two scatters."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_data, check_k
from .exceptions import InputError
from .linalg import cholesky_lower, sym_eigen
from .scatter import ROBUSTNESS_RANK, ScatterSpec, as_spec, estimate

PAIRS = {
    "cov-cov4": ("COV", "COV4"),
    "mlt-cov": ("MLT", "COV"),
    "mcd-cov": ("MCD", "COV"),
    "mcd-mlt": ("MCD", "MLT"),
}


def parse_pair(pair, seed=0):
    """Turn a pair tag such as ``"mcd-cov"`` into two :class:`ScatterSpec`.

    A tuple of two specs (or estimator names) is passed through.
    """
    if isinstance(pair, str):
        key = pair.lower()
        if key not in PAIRS:
            raise InputError(f"unknown scatter pair {pair!r}; choose from {sorted(PAIRS)}")
        first, second = PAIRS[key]
        return ScatterSpec(first, seed=seed), ScatterSpec(second, seed=seed)
    spec1, spec2 = pair
    return as_spec(spec1), as_spec(spec2)


def pair_tag(spec1, spec2):
    return f"{spec1.estimator.lower()}-{spec2.estimator.lower()}"


@dataclass(frozen=True)
class IcsResult:
    """Output of :func:`ics`.

    Attributes
    ----------
    B : ndarray (p, p)
        Unmixing matrix; row j holds the coefficients of component j.
    D : ndarray (p,)
        Eigenvalues of V1^-1 V2 in decreasing order.
    Z : ndarray (n, p)
        Invariant coordinates ``(X - center) @ B.T``.
    pair : tuple of str
        Estimator tags of (V1, V2).
    center : ndarray (p,)
        Location estimate paired with V1.
    """

    B: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    pair: tuple
    center: np.ndarray
    scatter1: object = None
    scatter2: object = None

    @property
    def n_components(self):
        return len(self.D)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.center) @ self.B.T


def simultaneous_diagonalization(V1, V2):
    """Rows ``B`` and eigenvalues ``D`` with ``B V1 B' = I`` and ``B V2 B' = diag(D)``.

    V1 is whitened by its Cholesky factor L; the symmetric matrix
    ``L^-1 V2 L^-T`` is diagonalized and its eigenvectors are mapped back by
    a triangular solve with ``L^T``.
    """
    L = cholesky_lower(V1)
    W = solve_triangular(L, V2, lower=True)
    W = solve_triangular(L, W.T, lower=True)
    eig = sym_eigen(0.5 * (W + W.T))
    B = solve_triangular(L.T, eig.vectors, lower=False).T
    return B, eig.values


def ics(X, spec1="COV", spec2="COV4"):
    """Invariant coordinates of `X` for the scatter pair (spec1, spec2).

    V1 should be the more robust scatter; its location estimate centers the
    data. Each row of B is signed so that the largest absolute score of the
    component is positive.
    """
    spec1, spec2 = as_spec(spec1), as_spec(spec2)
    if ROBUSTNESS_RANK[spec1.estimator] < ROBUSTNESS_RANK[spec2.estimator]:
        raise InputError(
            f"V1={spec1.estimator} must be at least as robust as V2={spec2.estimator}"
        )
    X = check_data(X)
    est1 = estimate(X, spec1)
    est2 = est1 if spec2 == spec1 else estimate(X, spec2)
    B, D = simultaneous_diagonalization(est1.scatter, est2.scatter)
    center = est1.location
    Z = (X - center) @ B.T
    pivot = np.argmax(np.abs(Z), axis=0)
    signs = np.where(Z[pivot, np.arange(Z.shape[1])] < 0, -1.0, 1.0)
    B = B * signs[:, None]
    Z = Z * signs
    return IcsResult(
        B=B,
        D=D,
        Z=Z,
        pair=(spec1.estimator, spec2.estimator),
        center=center,
        scatter1=est1,
        scatter2=est2,
    )


def ics_distance_sq(result, k):
    """Squared Euclidean norm of the first `k` invariant coordinates of each row."""
    Z = result.Z if isinstance(result, IcsResult) else np.asarray(result, dtype=float)
    k = check_k(k, Z.shape[1])
    return np.sum(Z[:, :k] ** 2, axis=1)


class ICS(TransformerMixin, BaseEstimator):
    """Invariant coordinate selection as a scikit-learn transformer.

    Parameters
    ----------
    pair : str or tuple, default="cov-cov4"
        One of ``"cov-cov4"``, ``"mlt-cov"``, ``"mcd-cov"``, ``"mcd-mlt"`` or a
        tuple of two :class:`~icsdetect.scatter.ScatterSpec`.
    n_components : int or None, default=None
        Number of leading invariant coordinates returned by ``transform``.
    random_state : int, default=0
        Seed for MCD subset sampling.

    Attributes
    ----------
    unmixing_ : ndarray (p, p)
    eigenvalues_ : ndarray (p,)
    location_ : ndarray (p,)
    result_ : IcsResult
    """

    def __init__(self, pair="cov-cov4", n_components=None, random_state=0):
        self.pair = pair
        self.n_components = n_components
        self.random_state = random_state

    def fit(self, X, y=None):
        spec1, spec2 = parse_pair(self.pair, seed=self.random_state)
        self.result_ = ics(X, spec1, spec2)
        self.unmixing_ = self.result_.B
        self.eigenvalues_ = self.result_.D
        self.location_ = self.result_.center
        self.n_features_in_ = self.unmixing_.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "result_")
        X = check_data(X, min_rows=1)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        Z = self.result_.transform(X)
        k = self.n_components or Z.shape[1]
        return Z[:, :k]
