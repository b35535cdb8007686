"""Affine equivariant location/scatter estimators: COV, COV4, MLT and MCD.

All estimators share one output type, :class:`ScatterEstimate`, and are
selected by a :class:`ScatterSpec`. The robustness ordering used to validate
scatter pairs is MCD > MLT > COV > COV4.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from ._validation import check_data
from .distributions import chisq_cdf, chisq_quantile
from .exceptions import (
    ConvergenceError,
    ExactFitError,
    InputError,
    SingularMatrixError,
)
from .linalg import SPD_RTOL, cholesky_lower, mahalanobis_sq, sym_eigen

logger = logging.getLogger(__name__)

ESTIMATORS = ("COV", "COV4", "MLT", "MCD")
ROBUSTNESS_RANK = {"MCD": 3, "MLT": 2, "COV": 1, "COV4": 0}
REWEIGHT_LEVEL = 0.975


@dataclass(frozen=True)
class ScatterSpec:
    """Estimator tag plus hyperparameters.

    Parameters
    ----------
    estimator : {"COV", "COV4", "MLT", "MCD"}
    h_fraction : float
        MCD subset fraction, in [0.5, 1].
    tol, max_iter : float, int
        MLT stopping rule: relative change of the scatter, measured in the
        metric of the previous iterate, below `tol`.
    n_subsets, n_csteps, n_best : int
        FAST-MCD elemental starts, C-steps applied to each start, and the
        number of best candidates iterated to convergence.
    seed : int
        Seed of the MCD subset draws.
    reweight : bool
        Apply the MCD reweighting step.
    """

    estimator: str = "COV"
    h_fraction: float = 0.75
    tol: float = 1e-6
    max_iter: int = 200
    n_subsets: int = 500
    n_csteps: int = 2
    n_best: int = 10
    seed: int = 0
    reweight: bool = True

    def __post_init__(self):
        tag = str(self.estimator).upper()
        if tag not in ESTIMATORS:
            raise InputError(f"unknown scatter estimator {self.estimator!r}")
        object.__setattr__(self, "estimator", tag)
        if not 0.5 <= self.h_fraction <= 1:
            raise InputError("h_fraction must lie in [0.5, 1]")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_iter < 1 or self.n_subsets < 1 or self.n_best < 1:
            raise InputError("iteration and subset counts must be positive")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class ScatterEstimate:
    """Location vector and SPD scatter matrix produced by one estimator."""

    location: np.ndarray
    scatter: np.ndarray
    estimator: str
    iterations: int = 0
    converged: bool = True
    support: np.ndarray | None = None
    raw_location: np.ndarray | None = field(default=None, repr=False)
    raw_scatter: np.ndarray | None = field(default=None, repr=False)


def as_spec(spec):
    """Accept a :class:`ScatterSpec` or an estimator name."""
    if isinstance(spec, ScatterSpec):
        return spec
    return ScatterSpec(estimator=str(spec))


def _checked(V, what):
    V = 0.5 * (V + V.T)
    try:
        cholesky_lower(V)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"{what} scatter is singular: column {exc.index} is (nearly) constant "
            f"or a linear combination of the preceding columns",
            index=exc.index,
        ) from exc
    return V


def cov(X):
    """Sample mean and covariance with divisor n - 1."""
    X = check_data(X)
    n, p = X.shape
    if n < p + 1:
        raise InputError(f"COV needs n >= p + 1 observations (n={n}, p={p})")
    m = X.mean(axis=0)
    Xc = X - m
    V = _checked(Xc.T @ Xc / (n - 1), "COV")
    return ScatterEstimate(location=m, scatter=V, estimator="COV")


def cov4(X):
    """Fourth-moment scatter: sum of r_i^2 (x_i - mean)(x_i - mean)' / ((p + 2) n).

    ``r_i^2`` is the squared Mahalanobis distance of ``x_i`` from the mean
    in the metric of :func:`cov`. The location is the sample mean.
    """
    base = cov(X)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    Xc = X - base.location
    r2 = mahalanobis_sq(X, base.location, base.scatter)
    V = _checked((Xc * r2[:, None]).T @ Xc / ((p + 2) * n), "COV4")
    return ScatterEstimate(location=base.location, scatter=V, estimator="COV4")


def _whitened_change(V_old, V_new):
    L = cholesky_lower(V_old)
    W = solve_triangular(L, V_new - V_old, lower=True)
    W = solve_triangular(L, W.T, lower=True)
    return np.linalg.norm(W) / np.sqrt(V_old.shape[0])


def mlt(X, spec=None):
    """Cauchy maximum-likelihood location and scatter (Class II M-estimator).

    Fixed-point iteration of

        m = sum w_i x_i / sum w_i,
        V = (1/n) sum w_i (x_i - m)(x_i - m)',   w_i = (p + 1) / (r_i^2 + 1),

    started at the sample mean and covariance. Any solution has mean weight
    one (take the trace of V^-1 times the scatter equation), so the scatter
    update divides by ``sum w_i`` instead of n; the fixed point is unchanged
    and convergence is much faster in high dimension. The stopping rule is
    affine invariant, so the result is affine equivariant to rounding.

    Raises
    ------
    ConvergenceError
        After ``spec.max_iter`` iterations; ``error.last`` holds the last
        iterate.
    """
    spec = as_spec(spec or ScatterSpec(estimator="MLT"))
    X = check_data(X)
    n, p = X.shape
    if n < p + 1:
        raise InputError(f"MLT needs n >= p + 1 observations (n={n}, p={p})")
    start = cov(X)
    m, V = start.location, start.scatter
    for it in range(1, spec.max_iter + 1):
        r2 = mahalanobis_sq(X, m, V)
        w = (p + 1) / (r2 + 1)
        m_new = w @ X / w.sum()
        Xc = X - m_new
        V_new = _checked((Xc * w[:, None]).T @ Xc / w.sum(), "MLT")
        shift = np.sqrt(mahalanobis_sq(m_new, m, V))
        change = _whitened_change(V, V_new)
        m, V = m_new, V_new
        if change < spec.tol and shift < spec.tol:
            return ScatterEstimate(
                location=m, scatter=V, estimator="MLT", iterations=it, converged=True
            )
    last = ScatterEstimate(
        location=m, scatter=V, estimator="MLT", iterations=spec.max_iter, converged=False
    )
    raise ConvergenceError(
        f"MLT did not converge in {spec.max_iter} iterations (last change {change:.2e})",
        last=last,
    )


def mcd_subset_size(n, p, h_fraction):
    """Number of observations in the MCD subset."""
    h = int(np.floor(h_fraction * n))
    return min(n, max(h, (n + p + 1) // 2))


def mcd_consistency(p, fraction):
    """Factor making a trimmed covariance consistent at the normal model."""
    if fraction >= 1:
        return 1.0
    q = chisq_quantile(fraction, p)
    return fraction / chisq_cdf(q, p + 2)


def _degenerate_directions(V):
    eig = sym_eigen(0.5 * (V + V.T))
    small = eig.values <= 1e-10 * max(eig.values[0], np.finfo(float).tiny)
    return eig.vectors[:, small].T


def _exact_fit(V, context):
    dirs = _degenerate_directions(V)
    desc = "; ".join(np.array2string(d, precision=3, suppress_small=True) for d in dirs)
    raise ExactFitError(
        f"{context}: the h-subset covariance is singular (exact fit); "
        f"zero-variance directions: {desc or 'numerically indistinct'}",
        directions=dirs,
    )


_CHUNK = 2_000_000


def _chunks(S, per_item):
    step = max(1, _CHUNK // max(per_item, 1))
    for start in range(0, S, step):
        yield slice(start, min(S, start + step))


def _batch_moments(X, idx):
    # idx: (S, m) subset indices -> means (S, p), covariances with divisor m.
    S, m = idx.shape
    p = X.shape[1]
    M = np.empty((S, p))
    C = np.empty((S, p, p))
    for sl in _chunks(S, m * p):
        sub = X[idx[sl]]
        M[sl] = sub.mean(axis=1)
        D = sub - M[sl, None, :]
        C[sl] = np.matmul(D.transpose(0, 2, 1), D) / m
    return M, C


def _batch_distances(X, M, C):
    S = len(M)
    n, p = X.shape
    out = np.empty((S, n))
    for sl in _chunks(S, n * p):
        Dt = X.T[None, :, :] - M[sl, :, None]
        sol = np.linalg.solve(C[sl], Dt)
        out[sl] = (sol * Dt).sum(axis=1)
    return out


def _logdets(C):
    sign, logdet = np.linalg.slogdet(C)
    return np.where(sign > 0, logdet, -np.inf)


def _nonsingular(C):
    # Smallest eigenvalue against the same relative floor cholesky_lower uses.
    C = 0.5 * (C + C.transpose(0, 2, 1))
    lam = np.linalg.eigvalsh(C)[:, 0]
    dmax = np.max(np.diagonal(C, axis1=1, axis2=2), axis=1)
    return lam > SPD_RTOL * dmax


def _elemental_starts(X, spec, rng):
    n, p = X.shape
    S = spec.n_subsets
    keys = rng.random((S, n))
    order = np.argsort(keys, axis=1, kind="stable")
    idx = order[:, : p + 1]
    M, C = _batch_moments(X, idx)
    ok = _nonsingular(C)
    for s in np.flatnonzero(~ok):
        # Grow a singular elemental subset along its random order.
        for size in range(p + 2, n + 1):
            sub = order[s, :size]
            m, c = _batch_moments(X, sub[None, :])
            if _nonsingular(c)[0]:
                M[s], C[s] = m[0], c[0]
                break
        else:
            _exact_fit(C[s], "MCD")
    return M, C


def _csteps(X, M, C, h, n_steps):
    for _ in range(n_steps):
        d = _batch_distances(X, M, C)
        idx = np.sort(np.argpartition(d, h - 1, axis=1)[:, :h], axis=1)
        M, C = _batch_moments(X, idx)
        ok = _nonsingular(C)
        if not np.all(ok):
            _exact_fit(C[int(np.flatnonzero(~ok)[0])], "MCD")
    return M, C, idx


def _refine(X, m, c, h, max_steps=100):
    support = None
    logdet = _logdets(c[None])[0]
    for _ in range(max_steps):
        d = _batch_distances(X, m[None], c[None])[0]
        new = np.sort(np.argpartition(d, h - 1)[:h])
        if support is not None and np.array_equal(new, support):
            break
        m_new, c_new = _batch_moments(X, new[None])
        if not _nonsingular(c_new)[0]:
            _exact_fit(c_new[0], "MCD")
        ld = _logdets(c_new)[0]
        if support is not None and ld >= logdet:
            break
        m, c, support, logdet = m_new[0], c_new[0], new, ld
    return m, c, support, logdet


def mcd(X, spec=None):
    """Reweighted Minimum Covariance Determinant estimator (FAST-MCD search).

    Elemental (p+1)-subsets drawn from ``spec.seed`` are each improved by
    ``spec.n_csteps`` C-steps; the ``spec.n_best`` candidates with smallest
    determinant are iterated to convergence. The raw covariance of the best
    h-subset is made consistent by ``(h/n) / F_{chi2, p+2}(chi2_{p, h/n})``,
    then reweighted with hard weights ``r^2 <= chi2_{p, 0.975}`` and the
    matching consistency factor.
    """
    spec = as_spec(spec or ScatterSpec(estimator="MCD"))
    X = check_data(X)
    n, p = X.shape
    if n < 2 * p:
        raise InputError(f"MCD needs n >= 2p observations (n={n}, p={p})")
    h = mcd_subset_size(n, p, spec.h_fraction)
    if h < p + 1:
        raise InputError(f"MCD subset size {h} must exceed p={p}")

    if h == n:
        support = np.arange(n)
        m_raw, c_raw = _batch_moments(X, support[None])
        m_raw, c_raw = m_raw[0], c_raw[0]
        if not _nonsingular(c_raw[None])[0]:
            _exact_fit(c_raw, "MCD")
        iterations = 0
    else:
        rng = np.random.default_rng(spec.seed)
        M, C = _elemental_starts(X, spec, rng)
        M, C, _ = _csteps(X, M, C, h, spec.n_csteps)
        logdet = _logdets(C)
        order = np.argsort(logdet, kind="stable")[: spec.n_best]
        best = None
        for s in order:
            cand = _refine(X, M[s], C[s], h)
            if best is None or cand[3] < best[3]:
                best = cand
        m_raw, c_raw, support, _ = best
        if support is None:
            d = _batch_distances(X, m_raw[None], c_raw[None])[0]
            support = np.sort(np.argpartition(d, h - 1)[:h])
        iterations = spec.n_csteps

    frac = h / n
    raw_scatter = 0.5 * (c_raw + c_raw.T) * mcd_consistency(p, frac)
    raw_location = m_raw
    if not spec.reweight:
        return ScatterEstimate(
            location=raw_location,
            scatter=_checked(raw_scatter, "MCD"),
            estimator="MCD",
            iterations=iterations,
            support=support,
            raw_location=raw_location,
            raw_scatter=raw_scatter,
        )

    d2 = mahalanobis_sq(X, raw_location, raw_scatter)
    keep = d2 <= chisq_quantile(REWEIGHT_LEVEL, p)
    if keep.sum() <= p:
        _exact_fit(raw_scatter, "MCD reweighting")
    Xk = X[keep]
    loc = Xk.mean(axis=0)
    Dk = Xk - loc
    V = Dk.T @ Dk / keep.sum() * mcd_consistency(p, REWEIGHT_LEVEL)
    return ScatterEstimate(
        location=loc,
        scatter=_checked(V, "MCD"),
        estimator="MCD",
        iterations=iterations,
        support=support,
        raw_location=raw_location,
        raw_scatter=raw_scatter,
    )


def estimate(X, spec):
    """Dispatch to the estimator named by `spec`."""
    spec = as_spec(spec)
    if spec.estimator == "COV":
        return cov(X)
    if spec.estimator == "COV4":
        return cov4(X)
    if spec.estimator == "MLT":
        return mlt(X, spec)
    return mcd(X, spec)
