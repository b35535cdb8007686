"""Contaminated Gaussian generators, TP/FP metrics and the simulation runner."""

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .detection import (
    DEFAULT_ALPHA,
    DEFAULT_CUTOFF_REPS,
    DEFAULT_GAMMA,
    DEFAULT_PA_REPS,
    TableCache,
    best_selection,
    detect_md,
    detect_rd,
    select_components,
)
from .exceptions import InputError, NumericError
from .ics import ics, ics_distance_sq, pair_tag, parse_pair
from .linalg import mahalanobis_sq
from .montecarlo import STREAM_EXPERIMENT, STREAM_GAP, replicate_rng, run_replicates
from .scatter import ScatterSpec, cov

logger = logging.getLogger(__name__)

CASES = (0, 1, 2, 3, 4, 5)
N_OUTLIERS = 20
CASE5_MAX_DRAWS = 10**6
ICS_METHODS = ("pa", "da", "ag", "bs", "jb", "true-q")
OTHER_METHODS = ("md", "rd", "pca", "pca-std", "true-subspace")
METHODS = ICS_METHODS + OTHER_METHODS
RESULT_COLUMNS = ("case", "p", "pair", "method", "mean_k", "TP", "FP", "reps", "seed")


@dataclass(frozen=True)
class CaseParams:
    """One simulation setting.

    Parameters
    ----------
    case : int
        0 (no outliers) to 5.
    n, p : int
    n_outliers : int
        Number of contaminated rows; forced to 0 for case 0.
    mask : bool
        Apply a random full-rank affine map to the generated data. ICS and
        Mahalanobis results are unaffected while PCA results change.
    """

    case: int
    n: int = 1000
    p: int = 6
    n_outliers: int = N_OUTLIERS
    mask: bool = False

    def __post_init__(self):
        if self.case not in CASES:
            raise InputError(f"case must be one of {CASES}, got {self.case}")
        if self.case == 0:
            object.__setattr__(self, "n_outliers", 0)
        if self.n < 2 * self.p:
            raise InputError(f"need n >= 2p, got n={self.n}, p={self.p}")
        if self.case in (4, 5) and self.p < 6:
            raise InputError("cases 4 and 5 need p >= 6")
        if self.case == 3 and self.p < 2:
            raise InputError("case 3 needs p >= 2")
        if self.case != 0 and not 0 < self.n_outliers < self.n / 2:
            raise InputError("outlier count must be positive and below n/2")

    @property
    def eps(self):
        return self.n_outliers / self.n

    @property
    def q(self):
        """Dimension of the subspace spanned by the outliers."""
        return {0: 0, 1: 1, 2: 1, 3: 2, 4: 6, 5: min(6, self.p)}[self.case]

    def regular_scale(self):
        """Diagonal of the regular covariance."""
        d = np.ones(self.p)
        if self.case == 1:
            d[1:] = 4.0
        elif self.case == 2:
            d[0] = 0.1
        elif self.case == 3:
            d[2:] = 4.0
        return d


@dataclass
class LabeledData:
    X: np.ndarray
    labels: np.ndarray
    q: int
    case: int
    seed: object = None
    transform: tuple | None = None


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _case4_sizes(m):
    base = [4, 4, 3, 3, 3, 3]
    if m == sum(base):
        return base
    sizes = [m // 6] * 6
    for i in range(m % 6):
        sizes[i] += 1
    return sizes


def _case3_sizes(m):
    first = int(round(m * 0.6))
    return first, m - first


def _case5_outliers(regular, m, rng, q):
    lo = regular[:, :q].min(axis=0)
    hi = regular[:, :q].max(axis=0)
    p = regular.shape[1]
    scale = np.ones(p)
    scale[:q] = math.sqrt(5.0)
    kept = []
    drawn = 0
    batch = max(1000, 50 * m)
    while sum(len(k) for k in kept) < m:
        if drawn >= CASE5_MAX_DRAWS:
            raise NumericError(f"case 5 rejection sampling exceeded {CASE5_MAX_DRAWS} draws")
        size = min(batch, CASE5_MAX_DRAWS - drawn)
        Y = rng.standard_normal((size, p)) * scale
        drawn += size
        ok = np.any((Y[:, :q] > hi) | (Y[:, :q] < lo), axis=1)
        kept.append(Y[ok])
    return np.vstack(kept)[:m]


def _masking_map(p, rng):
    Q1, _ = np.linalg.qr(rng.standard_normal((p, p)))
    Q2, _ = np.linalg.qr(rng.standard_normal((p, p)))
    A = Q1 @ np.diag(np.exp(rng.uniform(-1.5, 1.5, p))) @ Q2
    b = rng.normal(0.0, 2.0, p)
    return A, b


def generate_case(params, seed=0):
    """Draw one labeled sample of the given case.

    Regular rows come first in the draw and all rows are shuffled at the end;
    ``labels`` marks the contaminated rows.
    """
    rng = _rng(seed)
    n, p, m = params.n, params.p, params.n_outliers
    regular = rng.standard_normal((n - m, p)) * np.sqrt(params.regular_scale())
    case = params.case
    if case == 0:
        outliers = np.empty((0, p))
    elif case == 1:
        outliers = rng.standard_normal((m, p)) * np.sqrt(params.regular_scale())
        outliers[:, 0] += 6.0
    elif case == 2:
        outliers = rng.normal(0.0, math.sqrt(0.2), (m, p))
        outliers[:, 0] = rng.choice([-1.0, 1.0], m) * np.sqrt(rng.chisquare(5, m))
    elif case == 3:
        m1, m2 = _case3_sizes(m)
        outliers = rng.standard_normal((m, p)) * np.sqrt(params.regular_scale())
        outliers[:m1, 0] += 6.0
        outliers[m1:, 1] += 6.2
    elif case == 4:
        outliers = rng.standard_normal((m, p))
        start = 0
        for i, size in enumerate(_case4_sizes(m)):
            outliers[start:start + size, i] += 6.0 + 0.1 * i
            start += size
    else:
        outliers = _case5_outliers(regular, m, rng, params.q)
    X = np.vstack([regular, outliers])
    labels = np.r_[np.zeros(n - m, dtype=bool), np.ones(m, dtype=bool)]
    perm = rng.permutation(n)
    X, labels = X[perm], labels[perm]
    transform = None
    if params.mask:
        A, b = _masking_map(p, rng)
        X = X @ A.T + b
        transform = (A, b)
    return LabeledData(X=X, labels=labels, q=params.q, case=case, seed=seed, transform=transform)


def tp_fp(flags, labels):
    """Percent of outliers flagged and percent of regular rows flagged.

    The first value is None when there are no outliers.
    """
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.shape != labels.shape:
        raise InputError(f"flags {flags.shape} and labels {labels.shape} differ in shape")
    n_out = int(labels.sum())
    n_reg = labels.size - n_out
    tp = None if n_out == 0 else 100.0 * np.sum(flags & labels) / n_out
    fp = 100.0 * np.sum(flags & ~labels) / n_reg if n_reg else 0.0
    return tp, float(fp)


# ------------------------------------------------------------------- experiments


@dataclass(frozen=True)
class ExperimentConfig:
    cases: tuple = CASES
    ps: tuple = (6,)
    pairs: tuple = ("cov-cov4",)
    methods: tuple = ("pa", "da")
    reps: int = 100
    seed: int = 0
    n: int = 1000
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    pa_reps: int = DEFAULT_PA_REPS
    cutoff_reps: int = DEFAULT_CUTOFF_REPS
    mask: bool = False

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InputError(f"unknown methods {bad}; choose from {list(METHODS)}")
        for pair in self.pairs:
            parse_pair(pair)


@dataclass
class ExperimentRow:
    case: int
    p: int
    pair: str
    method: str
    mean_k: float | None
    TP: float | None
    FP: float | None
    reps: int
    seed: int

    def as_list(self):
        def fmt(v):
            if v is None:
                return ""
            return f"{v:.4f}" if isinstance(v, float) else str(v)

        return [fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def _true_subspace(X, q, cutoff):
    d2 = mahalanobis_sq(X[:, :q], *_mean_cov(X[:, :q]))
    return d2 > cutoff


def _mean_cov(X):
    est = cov(X)
    return est.location, est.scatter


def _ics_cells(config):
    return [(pair, m) for pair in config.pairs for m in config.methods if m in ICS_METHODS]


def _prepare_tables(config, p, tables):
    cells = _ics_cells(config)
    for pair, method in cells:
        if method == "pa":
            tables.pa(config.n, p, pair, config.alpha, config.pa_reps, config.seed)
    needs_cut = {pair for pair, _ in cells}
    if "true-subspace" in config.methods:
        needs_cut.add("cov-cov4")
    for pair in sorted(needs_cut):
        tables.cutoff(config.n, p, pair, 1, config.gamma, config.cutoff_reps, config.seed)


def _replicate(config, case, p, tables, rng):
    params = CaseParams(case=case, n=config.n, p=p, mask=config.mask)
    data = generate_case(params, rng)
    X, labels = data.X, data.labels
    out = {}
    for pair in config.pairs:
        methods = [m for m in config.methods if m in ICS_METHODS]
        if not methods:
            continue
        spec1, spec2 = parse_pair(pair, seed=config.seed)
        tag = pair_tag(spec1, spec2)
        result = ics(X, spec1, spec2)
        for method in methods:
            if method == "true-q":
                k = data.q
            else:
                k = select_components(result, method, config.alpha, tables,
                                      config.pa_reps, config.seed).k
            if k == 0:
                flags = np.zeros(len(X), dtype=bool)
            else:
                cut = tables.cutoff(config.n, p, tag, k, config.gamma,
                                    config.cutoff_reps, config.seed).cutoff
                flags = ics_distance_sq(result, k) > cut
            out[(tag, method)] = (k, *tp_fp(flags, labels))
    for method in config.methods:
        if method == "md":
            out[("", method)] = (None, *tp_fp(detect_md(X, config.gamma).flags, labels))
        elif method == "rd":
            rep = detect_rd(X, config.gamma, ScatterSpec("MCD", seed=config.seed))
            out[("", method)] = (None, *tp_fp(rep.flags, labels))
        elif method in ("pca", "pca-std"):
            # without outliers the best-k rule reduces to the fewest false flags
            k, rep = best_selection(X, labels, method)
            out[("", method)] = (k, *tp_fp(rep.flags, labels))
        elif method == "true-subspace" and data.q > 0:
            cut = tables.cutoff(config.n, p, "cov-cov4", data.q, config.gamma,
                                config.cutoff_reps, config.seed).cutoff
            out[("", method)] = (data.q, *tp_fp(_true_subspace(X, data.q, cut), labels))
    return out


def run_experiment(config, tables=None, n_jobs=1):
    """Average selected k, TP and FP over replicates for each requested cell.

    Replicate r of (case, p) draws its data from a seed derived from
    (seed, case, p, r); all pairs and methods are evaluated on the same
    samples. A cell whose replicates fail more than 10% of the time is
    reported with empty statistics.
    """
    tables = tables if tables is not None else TableCache()
    rows = []
    for p in config.ps:
        _prepare_tables(config, p, tables)
        for case in config.cases:
            if case in (4, 5) and p < 6:
                raise InputError("cases 4 and 5 need p >= 6")
            cell = 1000 * case + p

            def one(rng, case=case, p=p):
                return _replicate(config, case, p, tables, rng)

            try:
                results = run_replicates(one, config.reps, config.seed,
                                         STREAM_EXPERIMENT * 10**6 + cell, n_jobs,
                                         label=f"case {case} p={p}")
            except NumericError as exc:
                logger.error("case %d, p=%d failed: %s", case, p, exc)
                results = None
            keys = (
                [(pair_tag(*parse_pair(pair)), m) for pair, m in _ics_cells(config)]
                + [("", m) for m in config.methods if m in OTHER_METHODS]
            )
            for key in keys:
                if key[1] == "true-subspace" and case == 0:
                    continue
                rows.append(_summarize(results, key, case, p, config))
    return rows


def _summarize(results, key, case, p, config):
    pair, method = key
    if results is None:
        return ExperimentRow(case, p, pair, method, None, None, None, 0, config.seed)
    vals = [r[key] for r in results]
    ks = [v[0] for v in vals if v[0] is not None]
    tps = [v[1] for v in vals if v[1] is not None]
    return ExperimentRow(
        case=case, p=p, pair=pair, method=method,
        mean_k=float(np.mean(ks)) if ks else None,
        TP=float(np.mean(tps)) if tps else None,
        FP=float(np.mean([v[2] for v in vals])),
        reps=len(vals), seed=config.seed,
    )


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue()


def summarize_cases(rows, cases=(1, 2, 3, 4, 5)):
    """Average TP and FP over `cases` for every (p, pair, method)."""
    groups = {}
    for r in rows:
        if r.case in cases and r.FP is not None:
            groups.setdefault((r.p, r.pair, r.method), []).append(r)
    out = {}
    for key, rs in groups.items():
        tps = [r.TP for r in rs if r.TP is not None]
        out[key] = (float(np.mean(tps)) if tps else None, float(np.mean([r.FP for r in rs])))
    return out


# -------------------------------------------------------------- distance diagnostic


@dataclass(frozen=True)
class GapRow:
    p: int
    mean: float
    variance: float
    expected_mean: float
    expected_variance: float
    normality_pvalue: float

    @property
    def variance_ratio(self):
        """Empirical variance over its expected value."""
        return self.variance / self.expected_variance


def distance_gap_diagnostic(ps=(25, 50), reps=10_000, seed=0, shift=None):
    """Distribution of the squared-distance gap between an outlier and a regular point.

    For each p a regular point ``x ~ N(0, I_p)`` and an independent outlier
    ``y ~ N(mu, I_p)`` are drawn and ``|y|^2 - |x|^2`` is recorded, the
    distances using the known regular location and scatter. The gap has mean
    ``|mu|^2`` and variance ``4p + 4|mu|^2``; the standardized gap is tested
    against N(0, 1) with a Kolmogorov-Smirnov test.

    Parameters
    ----------
    shift : callable or None
        Maps p to the shift vector; default ``3 e_1``.
    """
    rows = []
    for p in ps:
        mu = np.zeros(p)
        if shift is None:
            mu[0] = 3.0
        else:
            mu = np.asarray(shift(p), dtype=float)
        rng = replicate_rng(seed, STREAM_GAP, p)
        x = rng.standard_normal((reps, p))
        y = rng.standard_normal((reps, p)) + mu
        diff = np.sum(y**2, axis=1) - np.sum(x**2, axis=1)
        m2 = float(mu @ mu)
        ev = 4.0 * p + 4.0 * m2
        z = (diff - m2) / math.sqrt(ev)
        rows.append(GapRow(p=p, mean=float(diff.mean()), variance=float(diff.var(ddof=1)),
                             expected_mean=m2, expected_variance=ev,
                             normality_pvalue=float(stats.kstest(z, "norm").pvalue)))
    return rows
