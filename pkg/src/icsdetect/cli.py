"""Command-line interface: ``icsdetect {detect,simulate,tables,scree}``.

Exit codes: 0 on success, 2 for input errors, 3 for numeric or estimator
failures.
"""

import argparse
import logging
import os
import sys

from . import __version__
from .dataio import atomic_write, read_csv
from .detection import (
    DEFAULT_ALPHA,
    DEFAULT_CUTOFF_REPS,
    DEFAULT_GAMMA,
    DEFAULT_PA_REPS,
    TABLES_ENV,
    TableCache,
    detect_ics,
    parse_selection,
)
from .exceptions import InputError, NumericError
from .ics import PAIRS, ics, parse_pair
from .selection import scree_data
from .simgen import METHODS, ExperimentConfig, rows_to_csv, run_experiment, summarize_cases

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

logger = logging.getLogger("icsdetect")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return tuple(v.strip().lower() for v in text.split(",") if v.strip())


def _selection(text):
    try:
        parse_selection(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text.lower()


def _tables(args):
    directory = args.tables or os.environ.get(TABLES_ENV) or None
    return TableCache(directory, n_jobs=args.jobs)


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def cmd_detect(args):
    X, header = read_csv(args.input)
    n, p = X.shape
    if n <= p:
        raise InputError(f"need more rows than columns, got n={n}, p={p}")
    report = detect_ics(X, args.pair, args.select, args.alpha, args.gamma, _tables(args),
                        args.seed, args.reps, args.cutoff_reps, args.cutoff)
    report.metadata["columns"] = header or [f"V{j + 1}" for j in range(p)]
    _emit(report.to_json() + "\n", args.output)
    if args.distances:
        atomic_write(args.distances, report.to_csv())
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print(f"k={report.k_used} flagged={report.n_flagged}", file=out)
    return EXIT_OK


def cmd_simulate(args):
    bad = [m for m in args.select if m not in METHODS]
    if bad:
        raise InputError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    config = ExperimentConfig(cases=args.case, ps=args.p, pairs=args.pair, methods=args.select,
                              reps=args.reps, seed=args.seed, n=args.n, gamma=args.gamma,
                              alpha=args.alpha, pa_reps=args.pa_reps,
                              cutoff_reps=args.cutoff_reps, mask=args.mask)
    rows = run_experiment(config, _tables(args), n_jobs=args.jobs)
    _emit(rows_to_csv(rows), args.output)
    out = sys.stderr if args.output in (None, "-") else sys.stdout
    print("averages over cases 1-5 (p, pair, method): TP FP", file=out)
    for (p, pair, method), (tp, fp) in sorted(summarize_cases(rows).items()):
        tp_text = "   -  " if tp is None else f"{tp:6.2f}"
        print(f"  p={p:<3d} {pair or '-':<9s} {method:<14s} {tp_text} {fp:5.2f}", file=out)
    return EXIT_OK


def cmd_tables(args):
    tables = _tables(args)
    if tables.directory is None:
        raise InputError(f"no table directory: pass --tables or set {TABLES_ENV}")
    for p in args.p:
        for pair in args.pair:
            tables.pa(args.n, p, pair, args.alpha, args.reps, args.seed)
            tables.cutoff(args.n, p, pair, 1, args.gamma, args.cutoff_reps, args.seed)
    print(f"tables in {tables.directory}: {tables.hits} reused, {tables.misses} built")
    return EXIT_OK


def cmd_scree(args):
    X, _ = read_csv(args.input)
    spec1, spec2 = parse_pair(args.pair, seed=args.seed)
    result = ics(X, spec1, spec2)
    lines = ["rank,eigenvalue"] + [f"{j},{v!r}" for j, v in scree_data(result.D)]
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="icsdetect",
                                     description="Outlier detection with invariant coordinates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    def common(p, pair_list=False):
        if pair_list:
            p.add_argument("--pair", type=_str_list, default=("cov-cov4",),
                           help=f"comma-separated scatter pairs from {sorted(PAIRS)}")
        else:
            p.add_argument("--pair", choices=sorted(PAIRS), default="cov-cov4")
        p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
        p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tables", metavar="DIR", help=f"table cache directory (default ${TABLES_ENV})")
        p.add_argument("--cutoff-reps", type=int, default=DEFAULT_CUTOFF_REPS)
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for simulations")

    d = sub.add_parser("detect", parents=[verbose], help="flag outliers in a CSV file")
    d.add_argument("--input", required=True)
    d.add_argument("--output", default="-", help="JSON report path ('-' for stdout)")
    d.add_argument("--distances", metavar="CSV", help="also write index,distance_sq,flagged")
    d.add_argument("--select", type=_selection, default="pa",
                   help="pa, da, ag, bs, jb, fixed:K or none")
    d.add_argument("--reps", type=int, default=DEFAULT_PA_REPS, help="parallel-analysis replicates")
    d.add_argument("--cutoff", choices=("simulated", "chi2"), default="simulated")
    common(d)
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", parents=[verbose], help="run the contamination experiments")
    s.add_argument("--case", type=_int_list, default=(0, 1, 2, 3, 4, 5))
    s.add_argument("--p", type=_int_list, default=(6,))
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--select", type=_str_list, default=("pa", "da"),
                   help=f"comma-separated methods from {', '.join(METHODS)}")
    s.add_argument("--reps", type=int, default=100)
    s.add_argument("--pa-reps", type=int, default=DEFAULT_PA_REPS)
    s.add_argument("--mask", action="store_true", help="apply a random affine map to each sample")
    s.add_argument("--output", default="-")
    common(s, pair_list=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("tables", parents=[verbose], help="build parallel-analysis and cut-off tables")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--p", type=_int_list, required=True)
    t.add_argument("--reps", type=int, default=DEFAULT_PA_REPS, help="parallel-analysis replicates")
    common(t, pair_list=True)
    t.set_defaults(func=cmd_tables)

    c = sub.add_parser("scree", parents=[verbose], help="write (rank, eigenvalue) pairs")
    c.add_argument("--input", required=True)
    c.add_argument("--output", default="-")
    c.add_argument("--pair", choices=sorted(PAIRS), default="cov-cov4")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_scree)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"icsdetect: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"icsdetect: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"icsdetect: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
