"""CSV input and atomic file output."""

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import InputError


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_csv(text, source="<input>"):
    """Parse comma-separated numeric data with an optional header row.

    The first row is taken as a header when any of its fields is not a
    number. Every data row must have the header's width; empty, non-numeric
    or non-finite fields are errors reported with their line number.

    Returns
    -------
    X : ndarray (n, p)
    header : list of str or None
    """
    rows = list(csv.reader(io.StringIO(text)))
    # csv line numbers are 1-based; blank trailing lines are dropped
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(f.strip() for f in r)]
    if not numbered:
        raise InputError(f"{source}: no data")
    header = None
    first_line, first = numbered[0]
    if not all(_is_number(f.strip()) for f in first):
        header = [f.strip() for f in first]
        numbered = numbered[1:]
    if not numbered:
        raise InputError(f"{source}: header but no data rows")
    width = len(header) if header else len(numbered[0][1])
    data = np.empty((len(numbered), width))
    for r, (line, fields) in enumerate(numbered):
        if len(fields) != width:
            raise InputError(f"{source}, line {line}: expected {width} fields, found {len(fields)}")
        for c, f in enumerate(fields):
            f = f.strip()
            if not f:
                raise InputError(f"{source}, line {line}, column {c + 1}: missing value")
            try:
                v = float(f)
            except ValueError:
                raise InputError(f"{source}, line {line}, column {c + 1}: not a number: {f!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{source}, line {line}, column {c + 1}: non-finite value {f!r}")
            data[r, c] = v
    return data, header


def read_csv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_csv(text, source=str(path))


def format_csv(X, header=None):
    """Serialize a numeric matrix with full float precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(header)
    for row in np.asarray(X, dtype=float):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def atomic_write(path, text):
    """Write `text` to `path` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
