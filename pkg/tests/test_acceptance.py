"""Acceptance suite: one recorded verdict per numbered criterion.

Every tolerance is pinned in the constants below. Run with ``pytest -s`` to
see the verdict lines as they are produced; they are also collected in the
terminal summary.
"""

import math

import numpy as np
import pytest

from conftest import random_affine, record
from icsdetect.cli import main
from icsdetect.dataio import format_csv
from icsdetect.detection import TableCache, detect_ics, ics_cutoffs
from icsdetect.ics import PAIRS, ics, ics_distance_sq, parse_pair
from icsdetect.linalg import mahalanobis_sq
from icsdetect.montecarlo import STREAM_CALIBRATION, replicate_rng
from icsdetect.oracle import (
    CASE1_THRESHOLD,
    CASE2B_THRESHOLD,
    case1_components,
    case1_population,
    case1_regime,
    case2a_components,
    case2a_rho,
    case2a_threshold,
    case2b_rho,
    case5_components,
    case5_rho,
    population_ics,
    sample_mixture,
    verify_population,
)
from icsdetect.selection import anscombe_glynn_z, bonett_seier_z, dagostino_z, jarque_bera
from icsdetect.simgen import (
    CaseParams,
    ExperimentConfig,
    generate_case,
    distance_gap_diagnostic,
    rows_to_csv,
    run_experiment,
    summarize_cases,
)

# 1
IDENTITY_TOL = 1e-8
# 2
N_AFFINE = 20
AFFINE_TOL = 1e-6
# 3
ORACLE_TOL = 1e-10
GRID_POINTS = 100
FLIP_OFFSET = 1e-6
# 4
N_LARGE = 100_000
EIGEN_RTOL = 0.05
ANGLE_DEG = 2.0
# 5
MEAN_K_TOL = 0.3
REF_MEAN_K_DA = (0.14, 1.06, 1.00, 1.96, 2.67, 1.34)
REF_MEAN_K_PA = (0.08, 1.58, 1.00, 2.90, 6.00, 5.96)
EXPERIMENT_REPS = 100
# 6
PA_TP_MIN = 90.0
PA_FP_MAX = 2.0
PA_NULL_FP_MAX = 0.5
# 7
MD_NULL_FP = 2.0
MD_NULL_FP_TOL = 0.7
RD_TP_MIN = 90.0
# 8
CALIB_GAMMA = 0.02
CALIB_TOL_PP = 0.5
CALIB_POOLED = 100_000
# 9
GAP_RATIO_TOL = 0.10
GAP_LEVEL = 0.01
GAP_REPS = 10_000
# 10
NORMALITY_ALPHA = 0.05
NORMALITY_RANGE = (0.03, 0.07)
NORMALITY_SAMPLES = 1000
NORMALITY_N = 1000


def rel_diff(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


# ------------------------------------------------------------------ criterion 1


def test_criterion_01_full_k_distance_is_mahalanobis():
    rng = np.random.default_rng(101)
    worst = 0.0
    for p in (6, 25):
        X = rng.standard_normal((200, p)) @ rng.standard_normal((p, p)) + rng.normal(size=p)
        for pair in PAIRS:
            res = ics(X, *parse_pair(pair))
            md = mahalanobis_sq(X, res.scatter1.location, res.scatter1.scatter)
            worst = max(worst, rel_diff(ics_distance_sq(res, p), md))
    ok = worst <= IDENTITY_TOL
    record("01 full-k ICS distance = V1 Mahalanobis", ok,
           f"max relative difference {worst:.2e} (tol {IDENTITY_TOL:g})")
    assert ok


# ------------------------------------------------------------------ criterion 2


def _aligned_gap(Z1, Z2):
    signs = np.sign(np.sum(Z1 * Z2, axis=0))
    return float(np.max(np.abs(Z1 - Z2 * signs)) / np.max(np.abs(Z1)))


def test_criterion_02_affine_invariance():
    data = generate_case(CaseParams(1, n=500, p=6), seed=202)
    rng = np.random.default_rng(202)
    cache = TableCache()
    details, ok = [], True
    for pair in ("cov-cov4", "mlt-cov"):
        base = detect_ics(data.X, pair=pair, select="da", tables=cache, cutoff_reps=100)
        Zb = ics(data.X, *parse_pair(pair)).Z
        worst_z, mismatched = 0.0, 0
        for _ in range(N_AFFINE):
            A, b = random_affine(6, rng)
            Y = data.X @ A.T + b
            rep = detect_ics(Y, pair=pair, select="da", tables=cache, cutoff_reps=100)
            worst_z = max(worst_z, _aligned_gap(Zb, ics(Y, *parse_pair(pair)).Z))
            worst_z = max(worst_z, rel_diff(rep.distances_sq, base.distances_sq))
            mismatched += int(rep.k_used != base.k_used
                              or not np.array_equal(rep.flags, base.flags))
        ok &= worst_z <= AFFINE_TOL and mismatched == 0
        details.append(f"{pair}: score gap {worst_z:.1e}, flag mismatches {mismatched}/{N_AFFINE}")
    record("02 affine invariance", ok, "; ".join(details) + f" (tol {AFFINE_TOL:g})")
    assert ok


# ------------------------------------------------------------------ criterion 3


def _grid_agreement():
    rng = np.random.default_rng(303)
    worst = {"2a": 0.0, "2b": 0.0, "5": 0.0}
    for _ in range(GRID_POINTS):
        eps = rng.uniform(0.005, 0.45)
        p = int(rng.integers(2, 30))
        rho, pair = case2a_rho(eps, int(rng.integers(1, 25)), rng.uniform(0.05, 3),
                               rng.uniform(0.05, 3), p)
        worst["2a"] = max(worst["2a"], rel_diff(verify_population(pair), rho.eigenvalues()))
        s = rng.uniform(0.05, 3, 4)
        rho, pair = case2b_rho(eps, rng.uniform(0.1, 8), *s, p)
        worst["2b"] = max(worst["2b"], rel_diff(verify_population(pair), rho.eigenvalues()))
        p5 = int(rng.integers(2, 30))
        rho, pair = case5_rho(eps, rng.uniform(1, 20), p5, int(rng.integers(1, p5 + 1)))
        worst["5"] = max(worst["5"], rel_diff(verify_population(pair), rho.eigenvalues()))
    return worst


def _case1_engine_verdict(eps, p=5):
    sigma = np.diag([1.0, 4.0, 2.0, 3.0, 0.5])[:p, :p]
    mu = np.array([2.0, -1.0, 0.5, 1.0, 0.0])[:p]
    B, D = population_ics(case1_population(eps, mu, sigma))
    target = np.linalg.solve(sigma, mu)
    cos = np.abs(B @ target) / (np.linalg.norm(B, axis=1) * np.linalg.norm(target))
    j = int(np.argmax(cos))
    rest = np.delete(D, j)
    diff = D[j] - rest.mean()
    if abs(diff) <= 1e-12 * rest.mean():
        return "c"
    return "a" if diff > 0 else "b"


def test_criterion_03_oracle_agreement_and_regimes():
    worst = _grid_agreement()
    agree = all(v <= ORACLE_TOL for v in worst.values())
    flips = []
    t1 = CASE1_THRESHOLD
    flips.append(abs(t1 - (3 - math.sqrt(3)) / 6) < 1e-15)
    flips += [_case1_engine_verdict(t1 - FLIP_OFFSET) == case1_regime(t1 - FLIP_OFFSET) == "a",
              _case1_engine_verdict(t1 + FLIP_OFFSET) == case1_regime(t1 + FLIP_OFFSET) == "b"]
    ks = range(4, 41)
    th = [case2a_threshold(k) for k in ks]
    flips.append(min(th) == th[0] and abs(th[0] - 1 / 9) < 1e-15)
    for k, t in zip(ks, th):
        flips.append(abs(t - (k - 3) / (3 * (k - 1))) < 1e-15)
        lo, _ = case2a_rho(t - FLIP_OFFSET, k, 1.0, 1.0, 6)
        hi, _ = case2a_rho(t + FLIP_OFFSET, k, 1.0, 1.0, 6)
        flips.append(lo.verdict == "a" and hi.verdict == "b")
    flips.append(abs(CASE2B_THRESHOLD - 1 / 3) < 1e-15)
    lo, _ = case2b_rho(1 / 3 - FLIP_OFFSET, 2.0, 1.0, 1.0, 1.0, 1.0, 6)
    hi, _ = case2b_rho(1 / 3 + FLIP_OFFSET, 2.0, 1.0, 1.0, 1.0, 1.0, 6)
    flips.append(lo.verdict == "a" and hi.verdict == "b")
    ok = agree and all(flips)
    record("03 closed forms vs numeric route, regime flips", ok,
           "max rel diff " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f" (tol {ORACLE_TOL:g}); {sum(flips)}/{len(flips)} threshold checks hold")
    assert ok


# ------------------------------------------------------------------ criterion 4


def test_criterion_04_sample_to_population():
    rng = np.random.default_rng(404)
    rho2a, _ = case2a_rho(0.02, 5, 0.1, 0.2, 6)
    X = sample_mixture(case2a_components(0.02, 5, 0.1, 0.2, 6), N_LARGE, rng)
    gap2a = rel_diff(ics(X).D, rho2a.eigenvalues())
    rho5, _ = case5_rho(0.02, 5.0, 25, 6)
    X = sample_mixture(case5_components(0.02, 5.0, 25, 6), N_LARGE, rng)
    gap5 = rel_diff(ics(X).D, rho5.eigenvalues())
    sigma = np.diag([1.0] + [4.0] * 5)
    mu = np.zeros(6)
    mu[0] = 6.0
    X = sample_mixture(case1_components(0.02, mu, sigma), N_LARGE, rng)
    b = ics(X).B[0]
    target = np.linalg.solve(sigma, mu)
    cos = abs(b @ target) / (np.linalg.norm(b) * np.linalg.norm(target))
    angle = math.degrees(math.acos(min(1.0, cos)))
    ok = gap2a <= EIGEN_RTOL and gap5 <= EIGEN_RTOL and angle <= ANGLE_DEG
    record("04 sample eigenvalues and direction at n=1e5", ok,
           f"case 2a rel gap {gap2a:.3f}, case 5 rel gap {gap5:.3f} (tol {EIGEN_RTOL}); "
           f"case 1 angle {angle:.2f} deg (tol {ANGLE_DEG})")
    assert ok


# -------------------------------------------------------------- criteria 5 to 7


@pytest.fixture(scope="module")
def experiment():
    config = ExperimentConfig(cases=(0, 1, 2, 3, 4, 5), ps=(6,), pairs=("cov-cov4",),
                              methods=("pa", "da", "md", "rd"), reps=EXPERIMENT_REPS, seed=0)
    return run_experiment(config, TableCache())


def _row(rows, case, method):
    return next(r for r in rows if r.case == case and r.method == method)


@pytest.mark.slow
def test_criterion_05_mean_selected_k(experiment):
    lines, ok = [], True
    for method, target in (("da", REF_MEAN_K_DA), ("pa", REF_MEAN_K_PA)):
        got = [_row(experiment, c, method).mean_k for c in range(6)]
        bad = [c for c in range(6) if got[c] is None or abs(got[c] - target[c]) > MEAN_K_TOL]
        ok &= not bad
        lines.append(f"{method.upper()} " + "/".join(f"{g:.2f}" for g in got)
                     + (f" off at cases {bad}" if bad else ""))
    record("05 mean selected k, cov-cov4 p=6", ok, "; ".join(lines) + f" (tol {MEAN_K_TOL})")
    assert ok


@pytest.mark.slow
def test_criterion_06_pa_detection_rates(experiment):
    tp, fp = summarize_cases(experiment)[(6, "cov-cov4", "pa")]
    null_fp = _row(experiment, 0, "pa").FP
    ok = tp >= PA_TP_MIN and fp <= PA_FP_MAX and null_fp <= PA_NULL_FP_MAX
    record("06 PA detection rates", ok,
           f"TP {tp:.2f}% (>= {PA_TP_MIN}), FP {fp:.2f}% (<= {PA_FP_MAX}), "
           f"case 0 FP {null_fp:.2f}% (<= {PA_NULL_FP_MAX})")
    assert ok


@pytest.mark.slow
def test_criterion_07_comparators(experiment):
    md_fp = _row(experiment, 0, "md").FP
    rd_tp, _ = summarize_cases(experiment)[(6, "", "rd")]
    ok = abs(md_fp - MD_NULL_FP) <= MD_NULL_FP_TOL and rd_tp >= RD_TP_MIN
    record("07 comparator calibration", ok,
           f"MD case 0 FP {md_fp:.2f}% ({MD_NULL_FP} +/- {MD_NULL_FP_TOL}); "
           f"RD TP {rd_tp:.2f}% (>= {RD_TP_MIN})")
    assert ok


# ------------------------------------------------------------------ criterion 8


def test_criterion_08_null_cutoff_calibration():
    n, p = 1000, 6
    tables = ics_cutoffs(n, p, gamma=CALIB_GAMMA, reps=500, seed=0)
    d2 = {k: [] for k in tables}
    for r in range(CALIB_POOLED // n):
        X = replicate_rng(0, STREAM_CALIBRATION, r).standard_normal((n, p))
        res = ics(X)
        for k in tables:
            d2[k].append(ics_distance_sq(res, k) > tables[k].cutoff)
    rates = {k: 100 * float(np.mean(np.concatenate(v))) for k, v in d2.items()}
    ok = all(abs(r - 100 * CALIB_GAMMA) <= CALIB_TOL_PP for r in rates.values())
    record("08 null cutoff calibration", ok,
           "flag rate by k " + ", ".join(f"{k}:{r:.2f}%" for k, r in rates.items())
           + f" (target {100 * CALIB_GAMMA:g} +/- {CALIB_TOL_PP} pp, pooled {CALIB_POOLED})")
    assert ok


# ------------------------------------------------------------------ criterion 9


def test_criterion_09_distance_gap_diagnostic():
    rows = distance_gap_diagnostic(ps=(25, 50), reps=GAP_REPS, seed=0)
    ok = True
    parts = []
    for r in rows:
        good = abs(r.variance_ratio - 1) <= GAP_RATIO_TOL and r.normality_pvalue >= GAP_LEVEL
        ok &= good
        parts.append(f"p={r.p}: variance ratio {r.variance_ratio:.3f}, "
                     f"KS p-value {r.normality_pvalue:.4f}")
    record("09 distance-gap variance and normality", ok,
           "; ".join(parts) + f" (ratio tol {GAP_RATIO_TOL}, level {GAP_LEVEL})")
    assert ok


# ----------------------------------------------------------------- criterion 10


def test_criterion_10_normality_test_calibration():
    tests = {"DA": dagostino_z, "AG": anscombe_glynn_z, "BS": bonett_seier_z, "JB": jarque_bera}
    rejections = dict.fromkeys(tests, 0)
    for r in range(NORMALITY_SAMPLES):
        x = replicate_rng(1, STREAM_CALIBRATION, r).standard_normal(NORMALITY_N)
        for name, fn in tests.items():
            rejections[name] += fn(x)[1] < NORMALITY_ALPHA
    rates = {k: v / NORMALITY_SAMPLES for k, v in rejections.items()}
    lo, hi = NORMALITY_RANGE
    ok = all(lo <= v <= hi for v in rates.values())
    record("10 normality test null rejection rates", ok,
           ", ".join(f"{k} {v:.3f}" for k, v in rates.items()) + f" (range [{lo}, {hi}])")
    assert ok


# ----------------------------------------------------------------- criterion 11


def test_criterion_11_determinism(tmp_path):
    data = generate_case(CaseParams(1), seed=11)
    src = tmp_path / "data.csv"
    src.write_text(format_csv(data.X))

    def outputs(tag, jobs):
        out = tmp_path / tag
        out.mkdir()
        tables = out / "tables"
        common = ["--seed", "3", "--jobs", str(jobs), "--tables", str(tables),
                  "--cutoff-reps", "100"]
        codes = [
            main(["detect", "--input", str(src), "--output", str(out / "report.json"),
                  "--distances", str(out / "d.csv"), "--reps", "100", *common]),
            main(["simulate", "--case", "0,1,5", "--n", "200", "--reps", "4",
                  "--select", "pa,da,md,rd,pca", "--pa-reps", "100",
                  "--output", str(out / "sim.csv"), *common]),
            main(["scree", "--input", str(src), "--output", str(out / "scree.csv"),
                  "--pair", "mcd-cov", "--seed", "3"]),
        ]
        assert codes == [0, 0, 0]
        return {p.relative_to(out).as_posix(): p.read_bytes()
                for p in sorted(out.rglob("*")) if p.is_file()}

    first = outputs("a", 1)
    same = outputs("b", 1)
    parallel = outputs("c", 2)
    cfg = ExperimentConfig(cases=(1, 3), methods=("da", "md"), reps=4, n=200,
                           cutoff_reps=100, seed=5)
    api_equal = rows_to_csv(run_experiment(cfg, n_jobs=1)) == rows_to_csv(run_experiment(cfg, n_jobs=2))
    ok = first == same == parallel and api_equal
    record("11 determinism", ok,
           f"{len(first)} CLI output files byte-identical across reruns and --jobs 1/2: "
           f"{first == same == parallel}; experiment API n_jobs 1 vs 2: {api_equal}")
    assert ok
