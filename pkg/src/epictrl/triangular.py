"""Flat row-major storage for arrays indexed by (date t, bin k).

Row ``t`` (1-based) holds ``t + extra`` entries, so ``extra=0`` gives the
k <= t shape of the disease bins and ``extra=1`` gives the k <= t+1 shape of
the susceptible adjoints.  Rows are concatenated in date order.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def row_offset(i: int, extra: int = 0) -> int:
    """Start of 0-based row ``i`` inside the flat buffer."""
    return i * (i + 1) // 2 + i * extra


def flat_size(rows: int, extra: int = 0) -> int:
    return row_offset(rows, extra)


class Triangular:
    """Triangular array view over a flat buffer."""

    __slots__ = ("data", "rows", "extra")

    def __init__(self, data, rows: int, extra: int = 0):
        data = np.asarray(data, dtype=float)
        if data.ndim != 1 or data.size != flat_size(rows, extra):
            raise ShapeError(
                f"flat buffer of size {data.size} does not match {rows} rows (extra={extra})")
        self.data = data
        self.rows = int(rows)
        self.extra = int(extra)

    @classmethod
    def zeros(cls, rows: int, extra: int = 0) -> "Triangular":
        return cls(np.zeros(flat_size(rows, extra)), rows, extra)

    @classmethod
    def full(cls, rows: int, value: float, extra: int = 0) -> "Triangular":
        return cls(np.full(flat_size(rows, extra), float(value)), rows, extra)

    @classmethod
    def from_rows(cls, rows_list, extra: int = 0) -> "Triangular":
        for i, r in enumerate(rows_list):
            if len(r) != i + 1 + extra:
                raise ShapeError(f"row {i + 1} has {len(r)} entries, expected {i + 1 + extra}")
        data = np.concatenate([np.asarray(r, dtype=float) for r in rows_list]) if rows_list else np.zeros(0)
        return cls(data, len(rows_list), extra)

    def row(self, t: int) -> np.ndarray:
        """Entries of date ``t`` (1-based) as a view."""
        if not 1 <= t <= self.rows:
            raise ShapeError(f"date {t} outside 1..{self.rows}")
        i = t - 1
        start = row_offset(i, self.extra)
        return self.data[start:start + i + 1 + self.extra]

    def row_sums(self) -> np.ndarray:
        return np.array([self.row(t).sum() for t in range(1, self.rows + 1)])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.rows + self.extra))
        for t in range(1, self.rows + 1):
            r = self.row(t)
            out[t - 1, :r.size] = r
        return out

    def copy(self) -> "Triangular":
        return Triangular(self.data.copy(), self.rows, self.extra)

    def __repr__(self):
        return f"Triangular(rows={self.rows}, extra={self.extra})"
