"""Seeded Monte-Carlo replicate runner with per-replicate seed streams.

Replicate ``r`` of stream ``s`` under master seed ``seed`` always draws from
``SeedSequence(seed, spawn_key=(s, r, attempt))``, so results do not depend
on the number of workers or on execution order.
"""

import logging

import numpy as np
from joblib import Parallel, delayed

from .exceptions import NumericError

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.10

# Stream identifiers keep independent Monte-Carlo constructions apart.
STREAM_PA = 1
STREAM_CUTOFF = 2
STREAM_EXPERIMENT = 3
STREAM_GAP = 4
STREAM_CALIBRATION = 5


def replicate_rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _run_one(fn, seed, stream, rep, max_attempts):
    failures = 0
    last = None
    for attempt in range(max_attempts):
        rng = replicate_rng(seed, stream, rep, attempt)
        try:
            return fn(rng), failures
        except NumericError as exc:
            failures += 1
            last = exc
    raise NumericError(f"replicate {rep} failed {max_attempts} times: {last}")


def run_replicates(fn, reps, seed, stream, n_jobs=1, label="replicate"):
    """Evaluate ``fn(rng)`` for ``reps`` replicates; failed draws are redrawn.

    Raises
    ------
    NumericError
        When redraws exceed 10% of ``reps``.
    """
    max_attempts = max(2, int(MAX_FAILURE_RATE * reps) + 1)
    if n_jobs == 1:
        out = [_run_one(fn, seed, stream, r, max_attempts) for r in range(reps)]
    else:
        out = Parallel(n_jobs=n_jobs)(
            delayed(_run_one)(fn, seed, stream, r, max_attempts) for r in range(reps)
        )
    failures = sum(f for _, f in out)
    if failures:
        logger.info("%s: %d estimator failures redrawn over %d replicates", label, failures, reps)
    if failures > MAX_FAILURE_RATE * reps:
        raise NumericError(f"{label}: {failures} failures exceed 10% of {reps} replicates")
    return [v for v, _ in out]
