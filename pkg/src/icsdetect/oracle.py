"""Population COV / COV4 eigenvalues for Gaussian-type contamination models.

Two independent routes are provided:

* closed forms for the eigenvalues of ``cov^-1 cov4`` in the barrow-wheel
  (2a), symmetric three-Gaussian (2b) and scale-shift (5) models, together
  with the contamination thresholds at which the ordering of the eigenvalues
  flips;
* a generic moment engine that builds the population COV and COV4 matrices
  of any finite mixture whose components are Gaussian, possibly with one
  signed-chi coordinate, and hands them to the numeric ICS eigen-route.

For diagonal models with unequal component variances the cross moments
``E[X_i^2 X_j^2]`` of a mixture are not products of marginal moments, so the
closed forms below keep the cross terms explicitly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError
from .ics import simultaneous_diagonalization
from .linalg import solve_spd

VERDICT_TOL = 1e-12

CASE1_THRESHOLD = (3.0 - math.sqrt(3.0)) / 6.0
CASE2B_THRESHOLD = 1.0 / 3.0


def case2a_threshold(k):
    """Contamination level where the equal-variance barrow wheel is uninformative."""
    if k <= 0:
        raise InputError("k must be positive")
    if k == 1:
        raise InputError("threshold undefined for k = 1")
    return (k - 3.0) / (3.0 * (k - 1.0))


def _check_eps(eps, upper=0.5, lower_open=True):
    eps = float(eps)
    ok = (0.0 < eps if lower_open else 0.0 <= eps) and eps < upper
    if not ok:
        raise InputError(f"contamination level must lie in (0, {upper}), got {eps}")
    return eps


def _verdict_eps(eps, threshold):
    if abs(eps - threshold) <= VERDICT_TOL:
        return "c"
    return "a" if eps < threshold else "b"


def case1_regime(eps):
    """Ordering verdict for the mean-shift model.

    'a': the first eigenvalue stands out above the rest; 'b': the last
    eigenvalue stands out below the rest; 'c': all eigenvalues coincide.
    """
    return _verdict_eps(_check_eps(eps), CASE1_THRESHOLD)


def case2a_regime(eps, k):
    """Verdict for the barrow wheel with unit regular and outlier noise variances."""
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise InputError(f"contamination level must lie in (0, 1), got {eps}")
    return _verdict_eps(eps, case2a_threshold(k))


def case2b_regime(eps):
    """Verdict for the symmetric three-Gaussian mixture with equal covariances."""
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise InputError(f"contamination level must lie in (0, 1), got {eps}")
    return _verdict_eps(eps, CASE2B_THRESHOLD)


@dataclass(frozen=True)
class RhoPair:
    """Two distinct population eigenvalues and their multiplicities.

    ``rho_signal`` belongs to the subspace carrying the outliers and
    ``rho_rest`` to its complement. The verdict is 'a' when the signal
    eigenvalue is the larger one, 'b' when it is the smaller one and 'c'
    when they coincide.
    """

    rho_signal: float
    rho_rest: float
    mult_signal: int
    mult_rest: int

    @property
    def verdict(self):
        diff = self.rho_signal - self.rho_rest
        if abs(diff) <= VERDICT_TOL * max(1.0, abs(self.rho_rest)):
            return "c"
        return "a" if diff > 0 else "b"

    @property
    def rho_large(self):
        return max(self.rho_signal, self.rho_rest)

    @property
    def rho_small(self):
        return min(self.rho_signal, self.rho_rest)

    def eigenvalues(self):
        """All p eigenvalues in decreasing order."""
        vals = [self.rho_signal] * self.mult_signal + [self.rho_rest] * self.mult_rest
        return np.sort(np.asarray(vals))[::-1]


# ------------------------------------------------------------------ mixtures


@dataclass(frozen=True)
class Component:
    """One mixture component.

    The component is Gaussian with the given mean and covariance, except
    that when ``radial_k`` is set its first coordinate is replaced by a
    signed chi variable with ``radial_k`` degrees of freedom, independent of
    the other coordinates (``cov[0, 0]`` must then equal ``radial_k``).
    """

    weight: float
    mean: np.ndarray
    cov: np.ndarray
    radial_k: int | None = None

    def excess_fourth(self):
        """Fourth central moment minus its Gaussian value, per coordinate."""
        out = np.zeros(len(self.mean))
        if self.radial_k is not None:
            k = self.radial_k
            out[0] = k * (k + 2.0) - 3.0 * k * k
        return out


@dataclass(frozen=True)
class PopulationPair:
    """Population COV and COV4 of a mixture model."""

    cov: np.ndarray
    cov4: np.ndarray
    model: str
    params: dict = field(default_factory=dict)
    components: tuple = ()

    @property
    def p(self):
        return self.cov.shape[0]


def _check_components(components):
    if not components:
        raise InputError("a mixture needs at least one component")
    w = np.array([c.weight for c in components], dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InputError("mixture weights must be non-negative and sum to one")
    p = len(components[0].mean)
    for c in components:
        if c.cov.shape != (p, p) or len(c.mean) != p:
            raise InputError("component dimensions disagree")
        if c.radial_k is not None:
            if abs(c.cov[0, 0] - c.radial_k) > 1e-12 or np.any(c.cov[0, 1:] != 0):
                raise InputError("radial coordinate must have variance k and no covariance")
    return p


def _weighted_fourth(d, S, A, excess):
    """E[u u' (u' A u)] for u = d + w, w centered with covariance S.

    Gaussian fourth moments of w are used, plus the per-coordinate excess
    ``excess_i`` of an independent non-Gaussian coordinate.
    """
    dAd = d @ A @ d
    trAS = np.trace(A @ S)
    dd = np.outer(d, d)
    SA = S @ A
    out = dd * (dAd + trAS) + 2.0 * (dd @ A @ S + SA @ dd) + S * (dAd + trAS) + 2.0 * SA @ S
    out[np.diag_indices_from(out)] += np.diag(A) * excess
    return out


def mixture_moments(components):
    """Mean, COV and COV4 of a finite mixture, computed from exact moments."""
    components = tuple(components)
    p = _check_components(components)
    mu = sum(c.weight * np.asarray(c.mean, dtype=float) for c in components)
    V = np.zeros((p, p))
    for c in components:
        d = c.mean - mu
        V += c.weight * (c.cov + np.outer(d, d))
    A = solve_spd(V, np.eye(p))
    A = 0.5 * (A + A.T)
    V4 = np.zeros((p, p))
    for c in components:
        V4 += c.weight * _weighted_fourth(c.mean - mu, c.cov, A, c.excess_fourth())
    V4 /= p + 2.0
    return mu, V, 0.5 * (V4 + V4.T)


def population_pair(components, model="mixture", params=None):
    _, V, V4 = mixture_moments(components)
    return PopulationPair(cov=V, cov4=V4, model=model, params=dict(params or {}),
                          components=tuple(components))


def verify_population(pair):
    """Eigenvalues of ``cov^-1 cov4`` through the numeric simultaneous diagonalization."""
    _, D = simultaneous_diagonalization(pair.cov, pair.cov4)
    return D


def population_ics(pair):
    """(B, D) of the population pair; rows of B are the invariant directions."""
    return simultaneous_diagonalization(pair.cov, pair.cov4)


def sample_mixture(components, n, rng):
    """Draw n observations; component memberships are multinomial."""
    components = tuple(components)
    p = _check_components(components)
    w = np.array([c.weight for c in components])
    counts = rng.multinomial(n, w / w.sum())
    parts = []
    for c, m in zip(components, counts):
        if m == 0:
            continue
        X = rng.multivariate_normal(np.zeros(p), c.cov, size=m, method="cholesky")
        if c.radial_k is not None:
            X[:, 0] = rng.choice([-1.0, 1.0], size=m) * np.sqrt(rng.chisquare(c.radial_k, size=m))
        parts.append(X + c.mean)
    X = np.vstack(parts)
    return X[rng.permutation(n)]


# -------------------------------------------------------------- model builders


def case1_components(eps, mu, sigma):
    eps = _check_eps(eps)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not np.any(mu != 0):
        raise InputError("the shift vector must be non-zero")
    p = len(mu)
    return (
        Component(1.0 - eps, np.zeros(p), sigma),
        Component(eps, mu, sigma),
    )


def case1_population(eps, mu, sigma):
    """Population pair of the mean-shift mixture; no closed form is attached."""
    return population_pair(case1_components(eps, mu, sigma), "case1",
                           {"eps": eps, "mu": np.asarray(mu, dtype=float)})


def case2a_components(eps, k, s11, s22, p):
    """Barrow wheel: N(0, diag(s11, 1, ...)) contaminated by (signed chi_k, N(0, s22 I))."""
    reg = np.eye(p)
    reg[0, 0] = s11
    out = s22 * np.eye(p)
    out[0, 0] = k
    return (
        Component(1.0 - eps, np.zeros(p), reg),
        Component(eps, np.zeros(p), out, radial_k=int(k)),
    )


def _two_block_rho(g1, g2, m4, c12, c22, p):
    """Eigenvalues of a diagonal model with one special coordinate.

    ``m4 = E[X1^4]``, ``c12 = E[X1^2 Xj^2]``, ``c22 = E[Xj^4] / 3`` (equal to
    ``E[Xj^2 Xl^2]`` for Gaussian coordinates j != l > 1).
    """
    rho1 = (m4 / g1**2 + (p - 1) * c12 / (g1 * g2)) / (p + 2.0)
    rho2 = (c12 / (g1 * g2) + (p + 1) * c22 / g2**2) / (p + 2.0)
    return rho1, rho2


def case2a_rho(eps, k, s11, s22, p):
    """Closed-form eigenvalues for the barrow-wheel model.

    Parameters
    ----------
    eps : float
        Contamination level in (0, 0.5).
    k : int
        Degrees of freedom of the signed chi outlier coordinate.
    s11, s22 : float
        Variance of the regular first coordinate and of the outlier noise.
    p : int

    Returns
    -------
    RhoPair, PopulationPair
    """
    eps = _check_eps(eps)
    if k <= 0 or s11 <= 0 or s22 <= 0 or p < 2:
        raise InputError("k, variances must be positive and p >= 2")
    g1 = (1 - eps) * s11 + eps * k
    g2 = (1 - eps) + eps * s22
    m4 = 3 * (1 - eps) * s11**2 + eps * k * (k + 2)
    c12 = (1 - eps) * s11 + eps * k * s22
    c22 = (1 - eps) + eps * s22**2
    rho1, rho2 = _two_block_rho(g1, g2, m4, c12, c22, p)
    pair = population_pair(case2a_components(eps, k, s11, s22, p), "case2a",
                           {"eps": eps, "k": k, "s11": s11, "s22": s22})
    return RhoPair(rho1, rho2, 1, p - 1), pair


def case2b_components(eps, delta, s11, s12, s21, s22, p):
    reg = np.diag([s11] + [s12] * (p - 1))
    out = np.diag([s21] + [s22] * (p - 1))
    e1 = np.zeros(p)
    e1[0] = delta
    return (
        Component(1.0 - eps, np.zeros(p), reg),
        Component(eps / 2, e1, out),
        Component(eps / 2, -e1, out),
    )


def case2b_rho(eps, delta, s11, s12, s21, s22, p):
    """Closed-form eigenvalues for the symmetric three-Gaussian mixture.

    Variances ``s11``/``s12`` are those of the regular first / other
    coordinates and ``s21``/``s22`` those of the two shifted components.
    """
    eps = _check_eps(eps)
    if delta == 0:
        raise InputError("delta must be non-zero")
    if min(s11, s12, s21, s22) <= 0 or p < 2:
        raise InputError("variances must be positive and p >= 2")
    d2 = delta * delta
    g1 = (1 - eps) * s11 + eps * (s21 + d2)
    g2 = (1 - eps) * s12 + eps * s22
    m4 = 3 * (1 - eps) * s11**2 + eps * (3 * s21**2 + 6 * s21 * d2 + d2 * d2)
    c12 = (1 - eps) * s11 * s12 + eps * (s21 + d2) * s22
    c22 = (1 - eps) * s12**2 + eps * s22**2
    rho1, rho2 = _two_block_rho(g1, g2, m4, c12, c22, p)
    pair = population_pair(case2b_components(eps, delta, s11, s12, s21, s22, p), "case2b",
                           {"eps": eps, "delta": delta, "s11": s11, "s12": s12,
                            "s21": s21, "s22": s22})
    return RhoPair(rho1, rho2, 1, p - 1), pair


def case5_components(eps, alpha, p, q):
    inflated = np.diag([alpha] * q + [1.0] * (p - q))
    return (
        Component(1.0 - eps, np.zeros(p), np.eye(p)),
        Component(eps, np.zeros(p), inflated),
    )


def case5_rho(eps, alpha, p, q):
    """Closed-form eigenvalues for the scale-shift model.

    The outlying component is N(0, diag(alpha I_q, I_{p-q})). The q leading
    eigenvalues are equal and the remaining p - q equal one.
    """
    eps = _check_eps(eps)
    if alpha < 1:
        raise InputError("alpha must be at least 1")
    if not 1 <= q <= p:
        raise InputError(f"need 1 <= q <= p, got q={q}, p={p}")
    g1 = 1 - eps + alpha * eps
    r = (1 + eps * (alpha**2 - 1)) / g1**2
    rho_signal = ((q + 2) * r + (p - q)) / (p + 2.0)
    pair = population_pair(case5_components(eps, alpha, p, q), "case5",
                           {"eps": eps, "alpha": alpha, "q": q})
    if q == p:
        return RhoPair(rho_signal, rho_signal, p, 0), pair
    return RhoPair(rho_signal, 1.0, q, p - q), pair
