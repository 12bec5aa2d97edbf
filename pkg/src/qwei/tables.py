"""CSV plot-data files: full double precision, ``.`` decimal separator."""
from __future__ import annotations

import numpy as np

FMT = "%.17e"


def write_csv(path, header, columns):
    """Write equal-length ``columns`` under a one-line comma-separated ``header``."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt=FMT, delimiter=",", header=",".join(header), comments="")


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(header, array of shape (rows, cols))``."""
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
