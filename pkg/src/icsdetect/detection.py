"""Outlier flagging with ICS distances and the MD, RD and PCA comparators."""

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_data, check_k, check_level
from .dataio import atomic_write
from .distributions import chisq_quantile, normal_quantile
from .exceptions import InputError
from .ics import ics, ics_distance_sq, pair_tag, parse_pair
from .linalg import mahalanobis_sq, sym_eigen
from .montecarlo import STREAM_CUTOFF, run_replicates
from .scatter import ScatterSpec, cov, mcd
from .selection import (
    NORMALITY_TESTS,
    PaTable,
    SelectionOutcome,
    pa_table,
    select_normality,
    select_pa,
)

logger = logging.getLogger(__name__)

CUTOFF_SCHEMA = "icsdetect/cutoff-table"
REPORT_SCHEMA = "icsdetect/detection-report"
SCHEMA_VERSION = 1
DEFAULT_GAMMA = 0.02
DEFAULT_ALPHA = 0.05
DEFAULT_PA_REPS = 1000
DEFAULT_CUTOFF_REPS = 500
TABLES_ENV = "ICSDETECT_TABLES"


# ------------------------------------------------------------------ cut-off tables


@dataclass(frozen=True)
class CutoffTable:
    """Simulated (1 - gamma) quantile of squared ICS distances on k components."""

    n: int
    p: int
    pair: str
    k: int
    gamma: float
    reps: int
    cutoff: float
    seed: int

    def to_dict(self):
        return {
            "schema": CUTOFF_SCHEMA,
            "version": SCHEMA_VERSION,
            "n": self.n,
            "p": self.p,
            "pair": self.pair,
            "k": self.k,
            "gamma": self.gamma,
            "reps": self.reps,
            "cutoff": float(self.cutoff),
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != CUTOFF_SCHEMA:
            raise InputError("not a cut-off table document")
        if d.get("version") != SCHEMA_VERSION:
            raise InputError(f"unsupported cut-off table version {d.get('version')}")
        return cls(n=int(d["n"]), p=int(d["p"]), pair=d["pair"], k=int(d["k"]),
                   gamma=float(d["gamma"]), reps=int(d["reps"]), cutoff=float(d["cutoff"]),
                   seed=int(d["seed"]))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def ics_cutoffs(n, p, pair="cov-cov4", ks=None, gamma=DEFAULT_GAMMA,
                reps=DEFAULT_CUTOFF_REPS, seed=0, n_jobs=1):
    """Cut-off tables for several k from one shared set of null samples.

    For each replicate a standard Gaussian n x p sample is decomposed with
    the pair, the squared distance on the first k components is recorded for
    every requested k, and the pooled (1 - gamma) quantile is taken.
    """
    gamma = check_level(gamma, "gamma")
    if reps < 100:
        raise InputError("cut-off simulation needs at least 100 replicates")
    ks = list(range(1, p + 1)) if ks is None else [check_k(k, p) for k in ks]
    spec1, spec2 = parse_pair(pair, seed=seed)
    cols = np.asarray(ks) - 1

    def one(rng):
        Z = ics(rng.standard_normal((n, p)), spec1, spec2).Z
        return np.cumsum(Z**2, axis=1)[:, cols]

    pooled = np.vstack(run_replicates(one, reps, seed, STREAM_CUTOFF, n_jobs, label="cutoff"))
    tag = pair_tag(spec1, spec2)
    return {
        k: CutoffTable(n=n, p=p, pair=tag, k=k, gamma=gamma, reps=reps,
                       cutoff=float(np.quantile(pooled[:, i], 1.0 - gamma)), seed=seed)
        for i, k in enumerate(ks)
    }


def ics_cutoff(n, p, pair="cov-cov4", k=1, gamma=DEFAULT_GAMMA, reps=DEFAULT_CUTOFF_REPS,
               seed=0, n_jobs=1):
    """Single-k version of :func:`ics_cutoffs` (same replicates, same value)."""
    return ics_cutoffs(n, p, pair, [k], gamma, reps, seed, n_jobs)[k]


class TableCache:
    """PA and cut-off tables keyed by (n, p, pair, alpha) and (n, p, pair, k, gamma).

    With a `directory` the tables persist as versioned JSON files; otherwise
    they live in memory. A stored table whose replicate count or seed differs
    from the request is regenerated, never reused.
    """

    def __init__(self, directory=None, n_jobs=1):
        self.directory = Path(directory) if directory else None
        self.n_jobs = n_jobs
        self._mem = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _fmt(x):
        return repr(float(x))

    def pa_path(self, n, p, pair, alpha):
        return f"pa_n{n}_p{p}_{pair}_alpha{self._fmt(alpha)}.json"

    def cutoff_path(self, n, p, pair, k, gamma):
        return f"cutoff_n{n}_p{p}_{pair}_k{k}_gamma{self._fmt(gamma)}.json"

    def _load(self, name, loader):
        if name in self._mem:
            return self._mem[name]
        if self.directory is not None:
            path = self.directory / name
            if path.exists():
                obj = loader(path.read_text())
                self._mem[name] = obj
                return obj
        return None

    def _store(self, name, obj):
        self._mem[name] = obj
        if self.directory is not None:
            atomic_write(self.directory / name, obj.to_json())

    def pa(self, n, p, pair="cov-cov4", alpha=DEFAULT_ALPHA, reps=DEFAULT_PA_REPS, seed=0):
        pair = pair_tag(*parse_pair(pair))
        name = self.pa_path(n, p, pair, alpha)
        table = self._load(name, PaTable.from_json)
        if table is not None and table.reps == reps and table.seed == seed:
            self.hits += 1
            logger.info("PA table cache hit: %s", name)
            return table
        self.misses += 1
        logger.info("building PA table %s (%d replicates)", name, reps)
        table = pa_table(n, p, pair, alpha, reps, seed, self.n_jobs)
        self._store(name, table)
        return table

    def cutoff(self, n, p, pair="cov-cov4", k=1, gamma=DEFAULT_GAMMA,
               reps=DEFAULT_CUTOFF_REPS, seed=0):
        pair = pair_tag(*parse_pair(pair))
        name = self.cutoff_path(n, p, pair, k, gamma)
        table = self._load(name, CutoffTable.from_json)
        if table is not None and table.reps == reps and table.seed == seed:
            self.hits += 1
            logger.info("cut-off table cache hit: %s", name)
            return table
        self.misses += 1
        logger.info("building cut-off tables for n=%d p=%d %s (%d replicates)", n, p, pair, reps)
        for kk, tab in ics_cutoffs(n, p, pair, None, gamma, reps, seed, self.n_jobs).items():
            self._store(self.cutoff_path(n, p, pair, kk, gamma), tab)
        return self._mem[name]


def default_cache():
    """Cache rooted at ``$ICSDETECT_TABLES`` when set, in memory otherwise."""
    return TableCache(os.environ.get(TABLES_ENV) or None)


# ---------------------------------------------------------------------- reports


@dataclass
class DetectionReport:
    """Squared distances, cut-off and flags of one detector on one data set.

    ``flags[i]`` is true exactly when ``distances_sq[i] > cutoff``; with no
    cut-off (no component selected) nothing is flagged.
    """

    method: str
    distances_sq: np.ndarray
    cutoff: float | None
    flags: np.ndarray
    k_used: int | None
    gamma: float
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_flagged(self):
        return int(self.flags.sum())

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": SCHEMA_VERSION,
            "method": self.method,
            "k": self.k_used,
            "gamma": self.gamma,
            "seed": self.seed,
            "cutoff": None if self.cutoff is None else float(self.cutoff),
            "n_flagged": self.n_flagged,
            "flagged_indices": [int(i) for i in np.flatnonzero(self.flags)],
            "distances_sq": [float(d) for d in self.distances_sq],
            "flags": [bool(f) for f in self.flags],
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "distance_sq", "flagged"])
        for i, (d, f) in enumerate(zip(self.distances_sq, self.flags)):
            writer.writerow([i, repr(float(d)), int(bool(f))])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(method, d2, cutoff, k, gamma, seed=None, **metadata):
    d2 = np.asarray(d2, dtype=float)
    flags = np.zeros(d2.shape, dtype=bool) if cutoff is None else d2 > cutoff
    return DetectionReport(method=method, distances_sq=d2, cutoff=cutoff, flags=flags,
                           k_used=k, gamma=gamma, seed=seed, metadata=metadata)


# -------------------------------------------------------------------- ICS route


def parse_selection(select):
    """Split a selection spec (``"pa"``, ``"da"``, ``"fixed:3"``, ``"none"``) into (tag, k)."""
    text = str(select).strip().lower()
    if text.startswith("fixed:"):
        try:
            return "FIXED", int(text.split(":", 1)[1])
        except ValueError as exc:
            raise InputError(f"bad fixed selection {select!r}") from exc
    tag = text.upper()
    if tag == "PA" or tag == "NONE" or tag in NORMALITY_TESTS:
        return tag, None
    raise InputError(f"unknown selection method {select!r}")


def select_components(result, select="pa", alpha=DEFAULT_ALPHA, tables=None,
                      pa_reps=DEFAULT_PA_REPS, seed=0):
    """Number of invariant components to keep for an :class:`IcsResult`."""
    tag, fixed = parse_selection(select)
    n, p = result.Z.shape
    if tag == "FIXED":
        return SelectionOutcome(k=check_k(fixed, p), method="FIXED")
    if tag == "NONE":
        return SelectionOutcome(k=p, method="NONE")
    if tag == "PA":
        tables = tables if tables is not None else default_cache()
        pair = f"{result.pair[0].lower()}-{result.pair[1].lower()}"
        table = tables.pa(n, p, pair, alpha, pa_reps, seed)
        return select_pa(result.D, table, n=n, pair=pair)
    return select_normality(result.Z, tag, alpha)


def component_correlations(X, Z, k):
    """Correlations between the first k invariant coordinates and each variable."""
    if k == 0:
        return np.zeros((0, X.shape[1]))
    Xs = (X - X.mean(0)) / X.std(0, ddof=0)
    Zs = (Z[:, :k] - Z[:, :k].mean(0)) / Z[:, :k].std(0, ddof=0)
    return Zs.T @ Xs / X.shape[0]


def detect_ics(X, pair="cov-cov4", select="pa", alpha=DEFAULT_ALPHA, gamma=DEFAULT_GAMMA,
               tables=None, seed=0, pa_reps=DEFAULT_PA_REPS,
               cutoff_reps=DEFAULT_CUTOFF_REPS, cutoff_method="simulated", _result=None):
    """Three-step ICS detection: decomposition, component selection, cut-off.

    Parameters
    ----------
    cutoff_method : {"simulated", "chi2"}
        ``"simulated"`` reads the Monte-Carlo cut-off for (n, p, pair, k,
        gamma) from `tables` (building it when missing); ``"chi2"`` uses the
        chi-square(k) quantile, the convention of the MD comparator.
    """
    X = check_data(X)
    gamma = check_level(gamma, "gamma")
    spec1, spec2 = parse_pair(pair, seed=seed)
    tag = pair_tag(spec1, spec2)
    result = _result if _result is not None else ics(X, spec1, spec2)
    tables = tables if tables is not None else default_cache()
    outcome = select_components(result, select, alpha, tables, pa_reps, seed)
    k = outcome.k
    n, p = X.shape
    meta = {
        "pair": tag,
        "selection": outcome.to_dict(),
        "alpha": alpha,
        "eigenvalues": result.D,
        "cutoff_method": cutoff_method,
        "n": n,
        "p": p,
    }
    if k == 0:
        return _report("ICS", np.zeros(n), None, 0, gamma, seed, **meta)
    d2 = ics_distance_sq(result, k)
    if cutoff_method == "chi2":
        cutoff = chisq_quantile(1.0 - gamma, k)
    elif cutoff_method == "simulated":
        cutoff = tables.cutoff(n, p, tag, k, gamma, cutoff_reps, seed).cutoff
    else:
        raise InputError(f"unknown cut-off method {cutoff_method!r}")
    meta["correlations"] = component_correlations(X, result.Z, k)
    return _report("ICS", d2, cutoff, k, gamma, seed, **meta)


def _detect_ics_result(X, pair, select, alpha, gamma, tables, seed, pa_reps, cutoff_reps):
    X = check_data(X)
    spec1, spec2 = parse_pair(pair, seed=seed)
    result = ics(X, spec1, spec2)
    return detect_ics(X, pair, select, alpha, gamma, tables, seed, pa_reps, cutoff_reps,
                      _result=result), result


# ------------------------------------------------------------------ comparators


def detect_md(X, gamma=DEFAULT_GAMMA):
    """Classical Mahalanobis distances with the chi-square(p) cut-off."""
    X = check_data(X)
    gamma = check_level(gamma, "gamma")
    est = cov(X)
    d2 = mahalanobis_sq(X, est.location, est.scatter)
    return _report("MD", d2, chisq_quantile(1.0 - gamma, X.shape[1]), None, gamma)


def detect_rd(X, gamma=DEFAULT_GAMMA, spec=None):
    """Robust distances under the reweighted MCD with the chi-square(p) cut-off."""
    X = check_data(X)
    gamma = check_level(gamma, "gamma")
    spec = spec or ScatterSpec("MCD")
    est = mcd(X, spec)
    d2 = mahalanobis_sq(X, est.location, est.scatter)
    return _report("RD", d2, chisq_quantile(1.0 - gamma, X.shape[1]), None, gamma,
                   spec.seed, h_fraction=spec.h_fraction)


def detect_pca(X, k, standardized=False, level=0.99):
    """PCA score-distance / orthogonal-distance flagging.

    An observation is flagged when its score distance exceeds
    ``sqrt(chi2_{k, level})`` or its orthogonal distance exceeds the
    Wilson-Hilferty cut-off ``(med + mad * z_level)^(3/2)`` computed on
    ``OD^(2/3)``. The report's ``distances_sq`` is the larger of the two
    squared distance/cut-off ratios, so the cut-off is 1.
    """
    X = check_data(X)
    n, p = X.shape
    k = int(k)
    if not 1 <= k < p:
        raise InputError(f"PCA needs 1 <= k < p={p}, got {k}")
    level = check_level(level, "level")
    Xc = X - X.mean(axis=0)
    if standardized:
        sd = X.std(axis=0, ddof=1)
        tiny = sd <= 1e-12 * max(np.max(np.abs(X)), 1.0)
        if np.any(tiny):
            raise InputError(f"column {int(np.flatnonzero(tiny)[0])} has zero variance")
        Xc = Xc / sd
    S = Xc.T @ Xc / (n - 1)
    eig = sym_eigen(S)
    lam = eig.values[:k]
    if not np.all(lam > 0):
        raise InputError("leading principal components have zero variance")
    P = eig.vectors[:, :k]
    T = Xc @ P
    sd2 = np.sum(T**2 / lam, axis=1)
    od = np.linalg.norm(Xc - T @ P.T, axis=1)
    sd_cut = chisq_quantile(level, k)
    y = od ** (2.0 / 3.0)
    med = np.median(y)
    mad = 1.482602218505602 * np.median(np.abs(y - med))
    od_cut = max(med + mad * float(normal_quantile(level)), 0.0) ** 1.5
    floor = 1e-10 * np.sqrt(np.trace(S))
    ratio_sd = sd2 / sd_cut
    if od_cut <= floor:
        ratio_od = np.zeros(n)
    else:
        ratio_od = np.where(od > floor, (od / od_cut) ** 2, 0.0)
    d2 = np.maximum(ratio_sd, ratio_od)
    return _report("PCA-STD" if standardized else "PCA", d2, 1.0, k, 1.0 - level,
                   score_distance_sq=sd2, orthogonal_distance=od,
                   score_cutoff_sq=sd_cut, orthogonal_cutoff=od_cut)


def counts(flags, labels):
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    return int(np.sum(flags & labels)), int(np.sum(flags & ~labels))


def best_selection(X, labels, detector="ics", ks=None, **kwargs):
    """Oracle choice of k: maximal true positives, then fewest false positives.

    Parameters
    ----------
    detector : {"ics", "pca", "pca-std"} or callable
        A callable maps k to a :class:`DetectionReport`.
    kwargs
        Passed to :func:`detect_ics` or :func:`detect_pca`.

    Returns
    -------
    k_best : int
    report : DetectionReport
    """
    X = check_data(X)
    labels = np.asarray(labels, dtype=bool)
    if labels.shape != (X.shape[0],):
        raise InputError("labels must have one entry per row of X")
    p = X.shape[1]
    if callable(detector):
        run = detector
        default_ks = range(1, p + 1)
    elif detector == "ics":
        run = lambda k: detect_ics(X, select=f"fixed:{k}", **kwargs)  # noqa: E731
        default_ks = range(1, p + 1)
    elif detector in ("pca", "pca-std"):
        std = detector == "pca-std"
        run = lambda k: detect_pca(X, k, standardized=std, **kwargs)  # noqa: E731
        default_ks = range(1, p)
    else:
        raise InputError(f"unknown detector family {detector!r}")
    best = None
    for k in ks or default_ks:
        rep = run(k)
        ntp, nfp = counts(rep.flags, labels)
        key = (-ntp, nfp, k)
        if best is None or key < best[0]:
            best = (key, k, rep)
    return best[1], best[2]


# ------------------------------------------------------------ sklearn estimator


class ICSOutlierDetector(OutlierMixin, BaseEstimator):
    """ICS-based unsupervised outlier detector with a scikit-learn interface.

    Parameters
    ----------
    pair : str, default="cov-cov4"
    select : str, default="pa"
        ``"pa"``, ``"da"``, ``"ag"``, ``"bs"``, ``"jb"``, ``"fixed:K"`` or ``"none"``.
    alpha : float, default=0.05
        Level of the component selection.
    gamma : float, default=0.02
        Level of the distance cut-off.
    pa_reps, cutoff_reps : int
        Monte-Carlo replicates for the tables built on demand.
    random_state : int, default=0
    tables : TableCache or None
        Shared table cache; a private in-memory cache is used when None.

    Attributes
    ----------
    report_ : DetectionReport
    ics_ : IcsResult
    k_ : int
    cutoff_ : float or None
    """

    def __init__(self, pair="cov-cov4", select="pa", alpha=DEFAULT_ALPHA, gamma=DEFAULT_GAMMA,
                 pa_reps=DEFAULT_PA_REPS, cutoff_reps=DEFAULT_CUTOFF_REPS, random_state=0,
                 tables=None):
        self.pair = pair
        self.select = select
        self.alpha = alpha
        self.gamma = gamma
        self.pa_reps = pa_reps
        self.cutoff_reps = cutoff_reps
        self.random_state = random_state
        self.tables = tables

    def fit(self, X, y=None):
        X = check_data(X)
        tables = self.tables if self.tables is not None else TableCache()
        self.report_, self.ics_ = _detect_ics_result(
            X, self.pair, self.select, self.alpha, self.gamma, tables,
            self.random_state, self.pa_reps, self.cutoff_reps)
        self.k_ = self.report_.k_used
        self.cutoff_ = self.report_.cutoff
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """Negated squared ICS distance (higher means more normal)."""
        check_is_fitted(self, "report_")
        X = check_data(X, min_rows=1)
        if self.k_ == 0:
            return np.zeros(X.shape[0])
        Z = self.ics_.transform(X)
        return -np.sum(Z[:, : self.k_] ** 2, axis=1)

    def decision_function(self, X):
        """Cut-off minus squared distance; negative values are outliers."""
        scores = self.score_samples(X)
        if self.cutoff_ is None:
            return np.ones_like(scores)
        return scores + self.cutoff_

    def predict(self, X):
        """-1 for outliers and 1 for inliers."""
        return np.where(self.decision_function(X) < 0, -1, 1)
