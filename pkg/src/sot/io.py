"""Plain-text feature, label and matrix files.

Feature files are headerless CSV with one item per line; label files hold one
nonnegative integer per line. Matrices are written with 17 significant
digits so they read back bit-for-bit.
"""
from __future__ import annotations

import math

import numpy as np

from .exceptions import ValidationError


class FileFormatError(ValidationError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def read_features(path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in _lines(path):
        fields = line.split(",")
        try:
            row = [float(f) for f in fields]
        except ValueError:
            bad = next(f for f in fields if not _is_float(f))
            raise FileFormatError(path, lineno, f"cannot parse {bad.strip()!r} as a number") from None
        if not all(math.isfinite(v) for v in row):
            raise FileFormatError(path, lineno, "non-finite value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise FileFormatError(path, lineno, f"expected {width} columns, found {len(row)}")
        rows.append(row)
    if not rows:
        raise FileFormatError(path, 0, "no feature rows")
    return np.array(rows, dtype=np.float64)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_labels(path) -> np.ndarray:
    labels = []
    for lineno, line in _lines(path):
        try:
            v = int(line)
        except ValueError:
            raise FileFormatError(path, lineno, f"cannot parse {line!r} as an integer label") from None
        if v < 0:
            raise FileFormatError(path, lineno, "labels must be nonnegative")
        labels.append(v)
    return np.array(labels, dtype=np.int64)


def format_matrix(m) -> str:
    m = np.asarray(m, dtype=np.float64)
    return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in m)


def write_matrix(path, m):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_matrix(m))


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("".join(f"{int(v)}\n" for v in labels))
