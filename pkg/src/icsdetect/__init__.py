"""Invariant coordinate selection for multivariate outlier detection."""

__version__ = "0.1.0"

from .detection import (
    CutoffTable,
    DetectionReport,
    ICSOutlierDetector,
    TableCache,
    best_selection,
    detect_ics,
    detect_md,
    detect_pca,
    detect_rd,
    ics_cutoff,
    ics_cutoffs,
)
from .exceptions import (
    ConvergenceError,
    ExactFitError,
    IcsError,
    InputError,
    NumericError,
    SingularMatrixError,
)
from .ics import ICS, IcsResult, ics, ics_distance_sq
from .scatter import ScatterSpec, cov, cov4, mcd, mlt
from .selection import PaTable, pa_table, select_normality, select_pa
from .simgen import CaseParams, generate_case, run_experiment, tp_fp

__all__ = [
    "CaseParams",
    "ConvergenceError",
    "CutoffTable",
    "DetectionReport",
    "ExactFitError",
    "ICS",
    "ICSOutlierDetector",
    "IcsError",
    "IcsResult",
    "InputError",
    "NumericError",
    "PaTable",
    "ScatterSpec",
    "SingularMatrixError",
    "TableCache",
    "best_selection",
    "cov",
    "cov4",
    "detect_ics",
    "detect_md",
    "detect_pca",
    "detect_rd",
    "generate_case",
    "ics",
    "ics_cutoff",
    "ics_cutoffs",
    "ics_distance_sq",
    "mcd",
    "mlt",
    "pa_table",
    "run_experiment",
    "select_normality",
    "select_pa",
    "tp_fp",
]
