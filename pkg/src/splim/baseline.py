"""Reference product and the decompression-based COO-SPLIM platform.

COO-SPLIM expands the right operand to a dense grid and runs one in-situ
SpMV per non-empty row of the left operand; zeros occupy array rows just
like non-zeros, which is where its utilization is lost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cost import CostEvent, CostLedger
from .matrix_io import CooMatrix
from .sccp import SccpConfig

EMIT_BYTES = 12


def _scipy(m: CooMatrix, values=True):
    data = m.vals if values else np.ones(m.nnz)
    return sp.csr_matrix((data, (m.rows, m.cols)), shape=m.shape)


def oracle_spgemm(a: CooMatrix, b: CooMatrix) -> CooMatrix:
    """Exact sparse product; entries that cancel to zero are kept.

    The structure comes from the product of the all-ones patterns so a
    cancelled sum still shows up as an explicit zero.
    """
    if a.n_cols != b.n_rows:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    vals = (_scipy(a) @ _scipy(b)).tocsr()
    pattern = (_scipy(a, False) @ _scipy(b, False)).tocoo()
    rows, cols = pattern.row.astype(np.int64), pattern.col.astype(np.int64)
    v = np.asarray(vals[rows, cols]).ravel() if rows.size else np.empty(0)
    return CooMatrix.from_arrays(a.n_rows, b.n_cols, rows, cols, v)


def dense_spgemm(a: CooMatrix, b: CooMatrix) -> np.ndarray:
    """Plain triple-loop product, for cross-checking small cases."""
    if a.n_cols != b.n_rows:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    ad, bd = a.to_dense(), b.to_dense()
    out = np.zeros((a.n_rows, b.n_cols))
    for i in range(a.n_rows):
        for j in range(b.n_cols):
            s = 0.0
            for k in range(a.n_cols):
                s += ad[i, k] * bd[k, j]
            out[i, j] = s
    return out


@dataclass
class BaselineRun:
    output: CooMatrix
    ledger: CostLedger
    spmv_iterations: int
    batches: int
    intermediate_elements: int


def run_coo_splim(a: CooMatrix, b: CooMatrix, cfg: SccpConfig | None = None,
                  ledger: CostLedger | None = None) -> BaselineRun:
    cfg = cfg or SccpConfig()
    ledger = ledger if ledger is not None else cfg.new_ledger()
    if a.n_cols != b.n_rows:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    n, m = b.shape
    cells = n * m
    b_dense = b.to_dense()
    b_pattern = np.zeros((n, m), dtype=bool)
    b_pattern[b.rows, b.cols] = True
    b_row_nnz = b.row_counts()
    a_rows = np.unique(a.rows)
    iterations = int(a_rows.size) if b.nnz else 0
    word = cfg.word_bits // 8

    # one dense product element per array row
    arrays = math.ceil(cells / cfg.array_rows) if cells else 0
    pes_needed = math.ceil(arrays / cfg.arrays_per_pe) if arrays else 0
    batches = math.ceil(pes_needed / cfg.num_pes) if pes_needed else 0
    active = min(cfg.num_pes, pes_needed)

    out_r, out_c, out_v = [], [], []
    if iterations:
        nbytes = cells * word
        ledger.charge(CostEvent("io", cycles=cfg.energy.transfer_cycles(nbytes)
                                + min(cells, cfg.array_rows) * cfg.write_cycles,
                                pes=active, nbytes=nbytes, counter="decompressed_cells", count=cells))
        zf = (b.nnz * cfg.energy.valid_zero_fraction + (cells - b.nnz)) / cells
        a_csr = _scipy(a).tocsr()
        a_pat = _scipy(a, False).tocsr()
        for r in a_rows:
            lo, hi = a_csr.indptr[r], a_csr.indptr[r + 1]
            js = a_csr.indices[lo:hi]
            # broadcast the dense left row next to the decompressed right matrix
            ledger.charge(CostEvent("io", cycles=cfg.write_cycles + cfg.energy.transfer_cycles(n * word),
                                    pes=active, nbytes=n * word))
            # align each left non-zero with its right row by search
            ledger.charge(CostEvent("search", cycles=js.size * cfg.word_bits, pes=active,
                                    counter="alignment_searches", count=int(js.size)))
            ledger.charge(CostEvent("mult", cycles=batches * cfg.mult_cycles,
                                    pe_cycles=pes_needed * cfg.mult_cycles, zero_fraction=zf,
                                    valid_rows=b.nnz, total_rows=cells,
                                    counter="mult_rounds", count=batches))
            products = int(b_row_nnz[js].sum())
            # decompression-based accumulation: the scheduler inspects every
            # non-zero product and hands it to the accumulator
            if products:
                ledger.charge(CostEvent("ctrl", cycles=products * cfg.scheduler_cycles,
                                        counter="scheduled", count=products))
                ledger.charge(CostEvent("acc", cycles=products * cfg.acc_cycles))
            row = a_csr.data[lo:hi] @ b_dense[js]
            hit = (a_pat.data[lo:hi] @ b_pattern[js]) > 0 if js.size else np.zeros(m, bool)
            cols = np.flatnonzero(hit)
            out_r.append(np.full(cols.size, r))
            out_c.append(cols)
            out_v.append(row[cols])
        ledger.count("scalar_mults", iterations * cells)
    cat = lambda xs: np.concatenate(xs) if xs else np.empty(0)
    out = CooMatrix.from_arrays(a.n_rows, m, cat(out_r), cat(out_c), cat(out_v))
    if out.nnz:
        nbytes = out.nnz * EMIT_BYTES
        ledger.charge(CostEvent("io", cycles=cfg.energy.transfer_cycles(nbytes), nbytes=nbytes))
    ledger.count("spmv_iterations", iterations)
    ledger.count("intermediate_elements", cells if iterations else 0)
    return BaselineRun(out, ledger, iterations, batches, cells if iterations else 0)
