"""COO/CSR/CSC/ELLPACK conversions and the hybrid ELLPACK + COO split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrix_io import CooMatrix, MatrixStats, compute_stats, transpose

WORD_BITS = 32
SIGN_BIT = np.uint32(1 << (WORD_BITS - 1))
# padded slots carry only the sign bit; genuine indices are always < SIGN_BIT
INVALID = SIGN_BIT
INDEX_LIMIT = 1 << (WORD_BITS - 1)

ROW_WISE = "row"
COL_WISE = "col"


def is_valid_index(idx):
    return (np.asarray(idx, dtype=np.uint32) & SIGN_BIT) == 0


@dataclass(frozen=True, eq=False)
class CompressedMatrix:
    """Shared CSR/CSC layout: ``ptr`` over the major axis."""

    n_rows: int
    n_cols: int
    ptr: np.ndarray
    idx: np.ndarray
    val: np.ndarray


class CsrMatrix(CompressedMatrix):
    pass


class CscMatrix(CompressedMatrix):
    pass


def _compress(major, minor, vals, n_major):
    counts = np.bincount(major, minlength=n_major)
    ptr = np.zeros(n_major + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, np.asarray(minor, dtype=np.int64).copy(), np.asarray(vals).copy()


def to_csr(m: CooMatrix) -> CsrMatrix:
    ptr, idx, val = _compress(m.rows, m.cols, m.vals, m.n_rows)
    return CsrMatrix(m.n_rows, m.n_cols, ptr, idx, val)


def to_csc(m: CooMatrix) -> CscMatrix:
    t = transpose(m)
    ptr, idx, val = _compress(t.rows, t.cols, t.vals, t.n_rows)
    return CscMatrix(m.n_rows, m.n_cols, ptr, idx, val)


def csr_to_coo(c: CsrMatrix) -> CooMatrix:
    rows = np.repeat(np.arange(c.n_rows), np.diff(c.ptr))
    return CooMatrix.from_arrays(c.n_rows, c.n_cols, rows, c.idx, c.val)


def csc_to_coo(c: CscMatrix) -> CooMatrix:
    cols = np.repeat(np.arange(c.n_cols), np.diff(c.ptr))
    return CooMatrix.from_arrays(c.n_rows, c.n_cols, c.idx, cols, c.val)


@dataclass(frozen=True, eq=False)
class EllpackMatrix:
    """Condensed vector-of-slots layout.

    ``index`` and ``value`` are ``(width, n)`` arrays: slot ``[v, j]`` is the
    v-th non-zero at position ``j``. Row-wise: positions are source columns
    and ``index`` holds the source row. Column-wise: positions are source
    rows and ``index`` holds the source column. Padded slots have
    ``index == INVALID`` and value 0.
    """

    orientation: str
    n_rows: int
    n_cols: int
    index: np.ndarray
    value: np.ndarray

    @property
    def n(self):
        return self.index.shape[1]

    @property
    def width(self):
        return self.index.shape[0]

    @property
    def valid(self):
        return is_valid_index(self.index)

    @property
    def nnz(self):
        return int(self.valid.sum())

    @property
    def padding(self):
        return self.width * self.n - self.nnz

    def vector(self, v):
        return self.index[v], self.value[v]

    def dump(self) -> str:
        """Aligned text table, one line per vector: ``idx:val`` or ``--``."""
        lines = [f"# {self.orientation}-wise ELLPACK {self.n_rows}x{self.n_cols}, width {self.width}"]
        for v in range(self.width):
            cells = []
            for j in range(self.n):
                i = int(self.index[v, j])
                cells.append(f"{i}:{self.value[v, j]:g}" if i < INDEX_LIMIT else "--")
            w = max((len(c) for c in cells), default=2)
            lines.append(f"V{v:<3}" + " ".join(c.rjust(w) for c in cells))
        return "\n".join(lines)


def _positions(m: CooMatrix, orientation):
    """(position, stored-index, n_positions) along the condensing axis."""
    if orientation == ROW_WISE:
        return m.cols, m.rows, m.n_cols
    if orientation == COL_WISE:
        return m.rows, m.cols, m.n_rows
    raise ValueError(f"unknown orientation '{orientation}'")


def _check_dims(m):
    if max(m.n_rows, m.n_cols) >= INDEX_LIMIT:
        raise ValueError("matrix dimension must stay below 2**31")


def _slot_rank(pos, idx):
    """Order entries by (position, index) and rank each inside its position."""
    order = np.lexsort((idx, pos))
    pos_s = pos[order]
    starts = np.flatnonzero(np.r_[True, pos_s[1:] != pos_s[:-1]]) if pos_s.size else np.empty(0, int)
    rank = np.arange(pos_s.size) - np.repeat(starts, np.diff(np.r_[starts, pos_s.size]))
    return order, rank


def _build_ellpack(m, orientation, width=None):
    _check_dims(m)
    pos, idx, n = _positions(m, orientation)
    order, rank = _slot_rank(pos, idx)
    counts = np.bincount(pos, minlength=n)
    full_width = int(counts.max()) if counts.size else 0
    width = full_width if width is None else min(width, full_width)
    keep = rank < width
    index = np.full((width, n), INVALID, dtype=np.uint32)
    value = np.zeros((width, n))
    sel = order[keep]
    index[rank[keep], pos[sel]] = idx[sel].astype(np.uint32)
    value[rank[keep], pos[sel]] = m.vals[sel]
    ell = EllpackMatrix(orientation, m.n_rows, m.n_cols, index, value)
    spill = order[~keep]
    return ell, spill


def to_ellpack(m: CooMatrix, orientation=ROW_WISE) -> EllpackMatrix:
    return _build_ellpack(m, orientation)[0]


def ellpack_to_coo(e: EllpackMatrix) -> CooMatrix:
    v, j = np.nonzero(e.valid)
    idx = e.index[v, j].astype(np.int64)
    vals = e.value[v, j]
    if e.orientation == ROW_WISE:
        return CooMatrix.from_arrays(e.n_rows, e.n_cols, idx, j, vals)
    return CooMatrix.from_arrays(e.n_rows, e.n_cols, j, idx, vals)


@dataclass(frozen=True, eq=False)
class HybridMatrix:
    ell: EllpackMatrix
    overflow: CooMatrix
    threshold: int

    @property
    def orientation(self):
        return self.ell.orientation

    @property
    def shape(self):
        return (self.ell.n_rows, self.ell.n_cols)

    def to_coo(self) -> CooMatrix:
        e = ellpack_to_coo(self.ell)
        o = self.overflow
        return CooMatrix.from_arrays(e.n_rows, e.n_cols, np.r_[e.rows, o.rows],
                                     np.r_[e.cols, o.cols], np.r_[e.vals, o.vals])


def axis_stats(m: CooMatrix, orientation) -> MatrixStats:
    """Statistics over the positions that ``orientation`` condenses along."""
    return compute_stats(transpose(m) if orientation == ROW_WISE else m)


def hybrid_threshold(stats: MatrixStats) -> int:
    """ELLPACK width ceil(nnz_a + sigma), at least 1 for a non-empty matrix."""
    if stats.nnz == 0:
        return 0
    if math.isinf(stats.sigma):
        return int(np.max(stats.nnz_r))
    # round away float noise before the ceiling (nnz_a + sigma is often integral)
    return max(1, math.ceil(round(stats.nnz_a + stats.sigma, 9)))


def hybrid_split(m: CooMatrix, stats: MatrixStats | None = None, orientation=ROW_WISE) -> HybridMatrix:
    """Keep the first W non-zeros of each position in ELLPACK, spill the rest to COO."""
    if stats is None:
        stats = axis_stats(m, orientation)
    width = hybrid_threshold(stats)
    ell, spill = _build_ellpack(m, orientation, width)
    overflow = CooMatrix.from_arrays(m.n_rows, m.n_cols, m.rows[spill], m.cols[spill], m.vals[spill])
    return HybridMatrix(ell, overflow, width)
