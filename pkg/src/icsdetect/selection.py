"""Choosing the number of invariant components.

Two sequential rules are provided, both testing component j at the
Bonferroni level alpha / j and stopping at the first component that is not
significant:

* parallel analysis, which compares each eigenvalue with a Monte-Carlo
  quantile of the same-rank eigenvalue under standard Gaussian data;
* univariate normality tests applied to the invariant coordinates
  (D'Agostino skewness, Anscombe-Glynn kurtosis, Bonett-Seier Geary
  kurtosis, Jarque-Bera).
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_level
from .distributions import chisq_sf, normal_cdf, sample_moments
from .exceptions import InputError
from .ics import ics, pair_tag, parse_pair
from .montecarlo import STREAM_PA, run_replicates

PA_SCHEMA = "icsdetect/pa-table"
PA_VERSION = 1
SELECTION_METHODS = ("PA", "DA", "AG", "BS", "JB", "FIXED", "NONE")


@dataclass(frozen=True)
class ComponentDecision:
    index: int
    statistic: float
    level: float
    reject: bool
    threshold: float | None = None
    p_value: float | None = None


@dataclass(frozen=True)
class SelectionOutcome:
    """Selected number of components and the per-component evidence."""

    k: int
    method: str
    per_component: list = field(default_factory=list)

    def to_dict(self):
        return {
            "k": self.k,
            "method": self.method,
            "per_component": [asdict(d) for d in self.per_component],
        }


def leading_run(decisions):
    """Length of the maximal leading run of True values."""
    k = 0
    for d in decisions:
        if not d:
            break
        k += 1
    return k


def bonferroni_levels(alpha, p):
    return [alpha / j for j in range(1, p + 1)]


# ---------------------------------------------------------------- normality tests


def _two_sided(z):
    return float(2.0 * normal_cdf(-abs(z)))


def _check_n(n, minimum=20):
    if n < minimum:
        raise InputError(f"normality tests need at least {minimum} observations, got {n}")


def dagostino_z(x):
    """D'Agostino skewness test: normal score of sqrt(b1) and two-sided p-value."""
    mom = sample_moments(x)
    n = mom.n
    _check_n(n)
    y = mom.skewness * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = (
        3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3)
        / ((n - 2) * (n + 5) * (n + 7) * (n + 9))
    )
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    a = math.sqrt(2.0 / (w2 - 1.0))
    z = delta * math.asinh(y / a)
    return z, _two_sided(z)


def anscombe_glynn_z(x):
    """Anscombe-Glynn kurtosis test: normal score of b2 and two-sided p-value."""
    mom = sample_moments(x)
    n = mom.n
    _check_n(n)
    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) ** 2 * (n + 3) * (n + 5))
    xs = (mom.kurtosis - mean_b2) / math.sqrt(var_b2)
    sqrt_beta1 = (
        6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9))
        * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)))
    )
    a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    ratio = (1.0 - 2.0 / a) / (1.0 + xs * math.sqrt(2.0 / (a - 4.0)))
    z = (1.0 - 2.0 / (9.0 * a) - float(np.cbrt(ratio))) / math.sqrt(2.0 / (9.0 * a))
    return z, _two_sided(z)


def bonett_seier_z(x):
    """Bonett-Seier test of Geary's kurtosis and its two-sided p-value."""
    mom = sample_moments(x)
    n = mom.n
    _check_n(n)
    omega = 13.29 * (math.log(math.sqrt(mom.variance)) - math.log(mom.mean_abs_dev))
    z = math.sqrt(n + 2) * (omega - 3.0) / 3.54
    return z, _two_sided(z)


def jarque_bera(x):
    """Jarque-Bera statistic and its chi-square(2) upper-tail p-value."""
    mom = sample_moments(x)
    n = mom.n
    _check_n(n)
    jb = n * (mom.skewness**2 / 6.0 + (mom.kurtosis - 3.0) ** 2 / 24.0)
    return jb, float(chisq_sf(jb, 2))


NORMALITY_TESTS = {
    "DA": dagostino_z,
    "AG": anscombe_glynn_z,
    "BS": bonett_seier_z,
    "JB": jarque_bera,
}


def select_normality(Z, test="DA", alpha=0.05):
    """Sequential normality testing of invariant coordinates.

    Component j (1-based) is declared relevant when its test rejects at level
    ``alpha / j``; k is the number of leading relevant components. Every
    component is tested so that the report shows the full picture; only the
    leading run counts.
    """
    alpha = check_level(alpha, "alpha")
    tag = test.upper()
    if tag not in NORMALITY_TESTS:
        raise InputError(f"unknown normality test {test!r}")
    fn = NORMALITY_TESTS[tag]
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise InputError("scores must be an (n, p) array")
    decisions = []
    for j, level in enumerate(bonferroni_levels(alpha, Z.shape[1]), start=1):
        stat, pval = fn(Z[:, j - 1])
        decisions.append(
            ComponentDecision(index=j, statistic=float(stat), level=level,
                              reject=bool(pval < level), p_value=pval)
        )
    k = leading_run(d.reject for d in decisions)
    return SelectionOutcome(k=k, method=tag, per_component=decisions)


# -------------------------------------------------------------- parallel analysis


@dataclass(frozen=True)
class PaTable:
    """Per-rank eigenvalue cut-offs from standard Gaussian simulations."""

    n: int
    p: int
    pair: str
    reps: int
    alpha: float
    cutoffs: np.ndarray
    seed: int

    def to_dict(self):
        return {
            "schema": PA_SCHEMA,
            "version": PA_VERSION,
            "n": self.n,
            "p": self.p,
            "pair": self.pair,
            "reps": self.reps,
            "alpha": self.alpha,
            "seed": self.seed,
            "cutoffs": [float(c) for c in self.cutoffs],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != PA_SCHEMA:
            raise InputError("not a PA table document")
        if d.get("version") != PA_VERSION:
            raise InputError(f"unsupported PA table version {d.get('version')}")
        return cls(n=int(d["n"]), p=int(d["p"]), pair=d["pair"], reps=int(d["reps"]),
                   alpha=float(d["alpha"]), cutoffs=np.asarray(d["cutoffs"], dtype=float),
                   seed=int(d["seed"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def null_eigenvalues(n, p, pair="cov-cov4", reps=1000, seed=0, n_jobs=1, stream=STREAM_PA):
    """Eigenvalue matrix (reps, p) of ICS on standard Gaussian n x p samples."""
    spec1, spec2 = parse_pair(pair, seed=seed)

    def one(rng):
        return ics(rng.standard_normal((n, p)), spec1, spec2).D

    return np.vstack(run_replicates(one, reps, seed, stream, n_jobs, label="PA"))


def pa_table(n, p, pair="cov-cov4", alpha=0.05, reps=1000, seed=0, n_jobs=1):
    """Parallel-analysis table: cut-off j is the (1 - alpha/j) quantile of eigenvalue j."""
    alpha = check_level(alpha, "alpha")
    if reps < 100:
        raise InputError("parallel analysis needs at least 100 replicates")
    spec1, spec2 = parse_pair(pair, seed=seed)
    eigs = null_eigenvalues(n, p, (spec1, spec2), reps, seed, n_jobs)
    levels = bonferroni_levels(alpha, p)
    cutoffs = np.array([np.quantile(eigs[:, j], 1.0 - levels[j]) for j in range(p)])
    return PaTable(n=n, p=p, pair=pair_tag(spec1, spec2), reps=reps, alpha=alpha,
                   cutoffs=cutoffs, seed=seed)


def select_pa(eigs, table, n=None, pair=None):
    """Sequential comparison of eigenvalue j with the PA cut-off of rank j."""
    eigs = np.asarray(eigs, dtype=float)
    if eigs.shape != (table.p,):
        raise InputError(f"expected {table.p} eigenvalues, got shape {eigs.shape}")
    if n is not None and n != table.n:
        raise InputError(f"PA table was built for n={table.n}, data has n={n}")
    if pair is not None and pair != table.pair:
        raise InputError(f"PA table was built for pair {table.pair}, not {pair}")
    levels = bonferroni_levels(table.alpha, table.p)
    decisions = [
        ComponentDecision(index=j + 1, statistic=float(eigs[j]), level=levels[j],
                          reject=bool(eigs[j] > table.cutoffs[j]),
                          threshold=float(table.cutoffs[j]))
        for j in range(table.p)
    ]
    return SelectionOutcome(k=leading_run(d.reject for d in decisions), method="PA",
                            per_component=decisions)


def scree_data(eigs):
    """(rank, eigenvalue) pairs for plotting; ranks are 1-based."""
    return [(j, float(v)) for j, v in enumerate(np.asarray(eigs, dtype=float).ravel(), start=1)]
