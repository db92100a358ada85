"""Compressed-column sparse matrices, Matrix Market ingestion, and
precision-aware kernels (shadow, submatrix extraction, column scaling,
rounded matrix-vector products).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .precision import ERRSTATE, Precision, _rnd, round_array

__all__ = [
    "SparseMatrix",
    "ScalingInfo",
    "MatrixMarketParseError",
    "index_set",
    "load_matrix_market",
    "shadow",
    "extract_submatrix",
    "column_scale",
    "matvec",
]


class MatrixMarketParseError(ValueError):
    """Malformed Matrix Market input; message carries the 1-based line number."""


def index_set(indices) -> np.ndarray:
    """Sorted, duplicate-free int64 index array."""
    return np.unique(np.asarray(indices, dtype=np.int64))


class SparseMatrix:
    """Immutable sparse matrix in compressed-column form.

    Values are always stored as doubles; a matrix "in precision p" is one
    whose values are all fixed points of rounding to p.  Row indices are
    strictly increasing within each column and exact zeros are dropped at
    construction.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data", "_slots")

    def __init__(self, n_rows: int, n_cols: int, indptr, indices, data):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        self._slots = None
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "SparseMatrix":
        """Build from coordinate data: duplicates summed, exact zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size:
            order = np.lexsort((rows, cols))
            rows, cols, vals = rows[order], cols[order], vals[order]
            newgrp = np.empty(rows.size, dtype=bool)
            newgrp[0] = True
            newgrp[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            grp = np.cumsum(newgrp) - 1
            summed = np.zeros(int(grp[-1]) + 1)
            np.add.at(summed, grp, vals)
            rows, cols = rows[newgrp], cols[newgrp]
            keep = summed != 0.0
            rows, cols, vals = rows[keep], cols[keep], summed[keep]
        indptr = np.zeros(n_cols + 1, dtype=np.int64)
        np.add.at(indptr, cols + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n_rows, n_cols, indptr, rows, vals)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        rows, cols = np.nonzero(arr)
        return cls.from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])

    # -- basic queries ------------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and values of column j (views, do not mutate)."""
        lo, hi = self.indptr[j], self.indptr[j + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        cols = np.repeat(np.arange(self.n_cols), np.diff(self.indptr))
        out[self.indices, cols] = self.data
        return out

    def transpose(self) -> "SparseMatrix":
        cols = np.repeat(np.arange(self.n_cols, dtype=np.int64), np.diff(self.indptr))
        return SparseMatrix.from_coo(self.n_cols, self.n_rows, cols, self.indices, self.data)

    def scale_columns(self, d: np.ndarray) -> "SparseMatrix":
        """New matrix with column j multiplied by d[j]."""
        d = np.asarray(d, dtype=np.float64)
        cols = np.repeat(np.arange(self.n_cols, dtype=np.int64), np.diff(self.indptr))
        return SparseMatrix(self.n_rows, self.n_cols, self.indptr, self.indices, self.data * d[cols])

    def rounded(self, p: Precision) -> "SparseMatrix":
        """Values rounded to p; entries that round to zero are dropped."""
        vals = round_array(self.data, p)
        cols = np.repeat(np.arange(self.n_cols, dtype=np.int64), np.diff(self.indptr))
        return SparseMatrix.from_coo(self.n_rows, self.n_cols, self.indices, cols, vals)

    def to_scipy_csc(self):
        from scipy.sparse import csc_matrix

        return csc_matrix(
            (self.data.copy(), self.indices.copy(), self.indptr.copy()),
            shape=(self.n_rows, self.n_cols),
        )

    def row_slots(self):
        """Padded row-major accumulation plan.

        Returns a list of ``(rows, cols, vals)`` triplets such that each row
        index appears at most once per slot and, across slots, a given row's
        entries appear in ascending column order.  Rounded accumulation slot
        by slot therefore reproduces the canonical "columns left to right"
        order for every output component while staying vectorized.
        """
        if self._slots is None:
            cols = np.repeat(np.arange(self.n_cols, dtype=np.int64), np.diff(self.indptr))
            rows = self.indices
            order = np.lexsort((cols, rows))
            r, c, v = rows[order], cols[order], self.data[order]
            starts = np.searchsorted(r, np.arange(self.n_rows))
            pos = np.arange(r.size) - starts[r]
            width = int(pos.max()) + 1 if r.size else 0
            slots = []
            for pslot in range(width):
                m = pos == pslot
                slots.append((r[m], c[m], v[m]))
            self._slots = slots
        return self._slots

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class ScalingInfo:
    """Positive diagonal D applied on the right during preconditioner setup."""

    d: np.ndarray


# ---------------------------------------------------------------------------
# Matrix Market ingestion
# ---------------------------------------------------------------------------


def _open_lines(source):
    if isinstance(source, (str, Path)):
        return open(source, "rt", encoding="ascii", errors="replace")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("ascii", errors="replace"))
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("ascii", errors="replace")
        return io.StringIO(text)
    raise TypeError("source must be a path, bytes, or file-like object")


def load_matrix_market(source) -> SparseMatrix:
    """Parse coordinate-format Matrix Market content.

    Accepts real or integer fields with general or symmetric symmetry;
    symmetric inputs are expanded to full storage and duplicate entries are
    summed.  Malformed content raises :class:`MatrixMarketParseError` naming
    the offending 1-based line number.
    """
    fh = _open_lines(source)
    try:
        lineno = 1
        header = fh.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise MatrixMarketParseError("line 1: expected '%%MatrixMarket matrix ...' header")
        layout, field, symmetry = (p.lower() for p in parts[2:5])
        if layout != "coordinate":
            raise MatrixMarketParseError(f"line 1: unsupported layout {layout!r}")
        if field == "pattern":
            raise MatrixMarketParseError("line 1: pattern-only files carry no values")
        if field not in ("real", "integer"):
            raise MatrixMarketParseError(f"line 1: unsupported field {field!r}")
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketParseError(f"line 1: unsupported symmetry {symmetry!r}")

        size = None
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            toks = s.split()
            if len(toks) != 3:
                raise MatrixMarketParseError(f"line {lineno}: expected 'rows cols nnz'")
            try:
                size = tuple(int(t) for t in toks)
            except ValueError:
                raise MatrixMarketParseError(f"line {lineno}: non-integer size entry") from None
            break
        if size is None:
            raise MatrixMarketParseError(f"line {lineno}: missing size line")
        n_rows, n_cols, nnz = size
        if n_rows <= 0 or n_cols <= 0 or nnz < 0:
            raise MatrixMarketParseError(f"line {lineno}: invalid dimensions {size}")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            toks = s.split()
            if len(toks) != 3:
                raise MatrixMarketParseError(
                    f"line {lineno}: expected 'row col value', got {len(toks)} fields"
                )
            if k >= nnz:
                raise MatrixMarketParseError(f"line {lineno}: more entries than declared ({nnz})")
            try:
                i = int(toks[0])
                j = int(toks[1])
                v = float(toks[2])
            except ValueError:
                raise MatrixMarketParseError(f"line {lineno}: malformed entry {s!r}") from None
            if not (1 <= i <= n_rows and 1 <= j <= n_cols):
                raise MatrixMarketParseError(f"line {lineno}: index ({i}, {j}) out of range")
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketParseError(f"line {lineno}: expected {nnz} entries, found {k}")
    finally:
        fh.close()

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseMatrix.from_coo(n_rows, n_cols, rows, cols, vals)


# ---------------------------------------------------------------------------
# structural kernels
# ---------------------------------------------------------------------------


def shadow(A: SparseMatrix, J: np.ndarray) -> np.ndarray:
    """Rows with a nonzero in any column of J (stored entries are nonzero)."""
    if len(J) == 0:
        return np.empty(0, dtype=np.int64)
    pieces = [A.col(int(j))[0] for j in np.asarray(J)]
    return np.unique(np.concatenate(pieces))


def extract_submatrix(A: SparseMatrix, I: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Dense copy of A(I, J) for sorted index sets I, J."""
    I = np.asarray(I, dtype=np.int64)
    out = np.zeros((I.size, len(J)))
    for c, j in enumerate(np.asarray(J)):
        rows, valsj = A.col(int(j))
        pos = np.searchsorted(I, rows)
        pos_ok = pos < I.size
        hit = np.zeros(rows.size, dtype=bool)
        hit[pos_ok] = I[pos[pos_ok]] == rows[pos_ok]
        out[pos[hit], c] = valsj[hit]
    return out


def column_scale(At: SparseMatrix) -> tuple[SparseMatrix, ScalingInfo]:
    """Scale each column of At so its largest magnitude becomes exactly 1.

    Returns the scaled matrix and the positive diagonal d with
    scaled(:, j) = At(:, j) * d[j]; folding the preconditioner back is
    P = (M^T) D for the M built from the scaled matrix.
    """
    counts = np.diff(At.indptr)
    if np.any(counts == 0):
        j = int(np.nonzero(counts == 0)[0][0])
        raise ValueError(f"zero column: column {j} has no nonzeros")
    colmax = np.maximum.reduceat(np.abs(At.data), At.indptr[:-1])
    if not np.all(np.isfinite(colmax)) or np.any(colmax == 0.0):
        raise ValueError("zero column: column maxima must be positive and finite")
    d = 1.0 / colmax
    return At.scale_columns(d), ScalingInfo(d=d)


def matvec(A: SparseMatrix, x: np.ndarray, p: Precision) -> np.ndarray:
    """A @ x with every product and partial sum rounded to p.

    Accumulation order is fixed: within each output component, contributions
    are added in ascending column order (equivalently: columns left to
    right, ascending row within a column), so results are reproducible and
    independent of threading.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.n_cols:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    y = np.zeros(A.n_rows)
    with np.errstate(**ERRSTATE):
        for rows, cols, vals in A.row_slots():
            t = _rnd(vals * x[cols], p)
            y[rows] = _rnd(y[rows] + t, p)
    return y
