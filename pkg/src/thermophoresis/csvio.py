"""Deterministic CSV output: header row, comma separator, LF endings and
round-trip ('%.17g') floats, so identical data gives identical bytes."""

from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def write_csv(path, header, columns):
    """Write equal-length columns; integer columns are printed as integers."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0] if cols else 0
    if any(c.shape != (n,) for c in cols):
        raise ValueError("columns must be 1-D with equal length")
    fmts = ["%d" if np.issubdtype(c.dtype, np.integer) else FLOAT_FMT for c in cols]
    table = np.empty((n, len(cols)), dtype=object)
    for j, c in enumerate(cols):
        table[:, j] = c
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if n:
            np.savetxt(fh, table, fmt=fmts, delimiter=",", newline="\n")
    return path


def read_csv(path):
    """Return (header, float array) of a file written by ``write_csv``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_rows(path, header, rows):
    """Write rows of mixed strings and numbers (floats as '%.17g')."""
    def fmt(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        return FLOAT_FMT % float(v)

    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path
