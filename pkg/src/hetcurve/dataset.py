"""Data model, CSV ingestion, and cross-fitting fold partitions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Dataset", "FoldAssignment", "DataError", "load_csv", "partition_folds"]


class DataError(ValueError):
    """Raised for malformed input data; carries a row number when available."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Dataset:
    """Immutable table of observations (W, A, Y) with binary A and Y.

    Covariates are real-valued only; categorical covariates must be
    pre-encoded by the caller.
    """

    w: np.ndarray  # (n, d) float
    a: np.ndarray  # (n,) int in {0, 1}
    y: np.ndarray  # (n,) int in {0, 1}
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        a = np.asarray(self.a, dtype=int)
        y = np.asarray(self.y, dtype=int)
        if w.ndim != 2 or w.shape[1] == 0:
            raise DataError("at least one covariate required")
        if not (len(a) == len(y) == w.shape[0]):
            raise DataError("column length mismatch")
        if not np.all(np.isfinite(w)):
            raise DataError("non-finite covariate value")
        if not np.isin(a, (0, 1)).all():
            raise DataError("treatment values must be 0 or 1")
        if not np.isin(y, (0, 1)).all():
            raise DataError("outcome values must be 0 or 1")
        if len(self.covariate_names) != w.shape[1]:
            raise DataError("covariate_names length mismatch")
        w.flags.writeable = False
        a.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.w[indices].copy(), self.a[indices].copy(),
                       self.y[indices].copy(), self.covariate_names)

    def to_csv(self, path, outcome_col: str = "y", treatment_col: str = "a") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([outcome_col, treatment_col, *self.covariate_names])
            for i in range(self.n):
                writer.writerow([int(self.y[i]), int(self.a[i]),
                                 *(repr(float(v)) for v in self.w[i])])


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition of observation indices into K folds (ids 1..K)."""

    fold_of: np.ndarray  # (n,) int in {1..K}
    K: int
    fold_indices: tuple[np.ndarray, ...] = field(init=False)

    def __post_init__(self):
        fold_of = np.asarray(self.fold_of, dtype=int)
        fold_of.flags.writeable = False
        object.__setattr__(self, "fold_of", fold_of)
        idx = tuple(np.flatnonzero(fold_of == k + 1) for k in range(self.K))
        if sum(len(f) for f in idx) != len(fold_of):
            raise DataError("every index must be assigned to a fold in 1..K")
        sizes = [len(f) for f in idx]
        if min(sizes) == 0 or max(sizes) - min(sizes) > 1:
            raise DataError("fold sizes must differ by at most 1")
        object.__setattr__(self, "fold_indices", idx)

    @property
    def n(self) -> int:
        return len(self.fold_of)


def _parse_binary(cell: str, col: str, row: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"non-numeric value {cell!r} in column {col!r}", row) from None
    if value not in (0.0, 1.0):
        raise DataError(f"column {col!r} must be binary, got {cell!r}", row)
    return int(value)


def load_csv(path, outcome_col: str, treatment_col: str) -> Dataset:
    """Load a comma-separated file with a header row into a :class:`Dataset`.

    All columns other than the outcome and treatment columns become
    covariates, in header order. Row numbers in errors are 1-based and count
    the header as row 1.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _read_csv(fh, outcome_col, treatment_col)


def loads_csv(text: str, outcome_col: str, treatment_col: str) -> Dataset:
    return _read_csv(io.StringIO(text), outcome_col, treatment_col)


def _read_csv(fh, outcome_col: str, treatment_col: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: header row required") from None
    header = [h.strip() for h in header]
    for col in (outcome_col, treatment_col):
        if col not in header:
            raise DataError(f"missing column {col!r}")
    y_pos = header.index(outcome_col)
    a_pos = header.index(treatment_col)
    cov_pos = [i for i in range(len(header)) if i not in (y_pos, a_pos)]
    if not cov_pos:
        raise DataError("at least one covariate required")
    names = [header[i] for i in cov_pos]

    ys, as_, ws = [], [], []
    for rownum, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} cells, got {len(cells)}", rownum)
        ys.append(_parse_binary(cells[y_pos], outcome_col, rownum))
        as_.append(_parse_binary(cells[a_pos], treatment_col, rownum))
        row_w = []
        for i in cov_pos:
            cell = cells[i].strip()
            if cell == "":
                raise DataError(f"missing covariate value in column {header[i]!r}", rownum)
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric covariate {cell!r} in column {header[i]!r}", rownum
                ) from None
            if not np.isfinite(v):
                raise DataError(f"non-finite covariate in column {header[i]!r}", rownum)
            row_w.append(v)
        ws.append(row_w)
    if not ys:
        raise DataError("no data rows")
    return Dataset(np.array(ws, dtype=float), np.array(as_), np.array(ys), tuple(names))


def partition_folds(n: int, K: int, seed: int) -> FoldAssignment:
    """Uniformly random balanced partition into K folds, deterministic given seed.

    Implemented as a seeded shuffle followed by round-robin assignment, so
    fold sizes differ by at most one.
    """
    if not 2 <= K <= n // 2:
        raise DataError(f"fold count K={K} out of range [2, n/2] for n={n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % K + 1
    return FoldAssignment(fold_of, K)
