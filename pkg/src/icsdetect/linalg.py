"""Dense symmetric linear algebra kernels.

Every solve in the package goes through a Cholesky factor; no explicit
inverse is formed anywhere.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .exceptions import InputError, SingularMatrixError

# A pivot is rejected when it falls below this fraction of the largest
# diagonal entry.
SPD_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition of a symmetric matrix.

    ``values`` are sorted in non-increasing order and ``vectors[:, j]`` is the
    unit eigenvector belonging to ``values[j]``.
    """

    values: np.ndarray
    vectors: np.ndarray


def _as_square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    return A


def _check_symmetric(A, name="A"):
    scale = np.linalg.norm(A)
    if np.max(np.abs(A - A.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise InputError(f"{name} is not symmetric")


def sym_eigen(A):
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric `A`.

    Uses LAPACK's tridiagonal reduction followed by implicit QL/QR
    iterations (``?syev``).
    """
    A = _as_square(A)
    _check_symmetric(A)
    A = 0.5 * (A + A.T)
    values, vectors = sla.eigh(A, driver="ev")
    return SymEigen(values=values[::-1].copy(), vectors=vectors[:, ::-1].copy())


def cholesky_lower(A):
    """Lower-triangular Cholesky factor ``L`` with ``L @ L.T == A``.

    Raises
    ------
    SingularMatrixError
        When a pivot is not larger than ``1e-12 * max(diag(A))``; the error
        carries the zero-based index of the failing pivot.
    """
    A = _as_square(A)
    _check_symmetric(A)
    p = A.shape[0]
    dmax = np.max(np.diag(A))
    if not dmax > 0:
        raise SingularMatrixError("matrix is not positive definite (pivot 0)", index=0)
    tol = SPD_RTOL * dmax
    L = np.zeros_like(A)
    for j in range(p):
        row = L[j, :j]
        d = A[j, j] - row @ row
        if not d > tol:
            raise SingularMatrixError(
                f"matrix is not positive definite: pivot {j} equals {d:.3g}", index=j
            )
        L[j, j] = np.sqrt(d)
        if j + 1 < p:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ row) / L[j, j]
    return L


def solve_spd(A, B):
    """Solve ``A X = B`` for symmetric positive definite `A`."""
    L = cholesky_lower(A)
    B = np.asarray(B, dtype=float)
    return sla.cho_solve((L, True), B)


def mahalanobis_sq(x, m, V):
    """Squared Mahalanobis distance of `x` from `m` in the metric of `V`.

    `x` may be a single p-vector or an (n, p) array of rows; the result is a
    float or an n-vector respectively.
    """
    L = cholesky_lower(V)
    x = np.asarray(x, dtype=float)
    diff = x - np.asarray(m, dtype=float)
    if diff.ndim == 1:
        w = sla.solve_triangular(L, diff, lower=True)
        return float(w @ w)
    w = sla.solve_triangular(L, diff.T, lower=True)
    return np.einsum("ij,ij->j", w, w)
