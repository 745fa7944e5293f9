"""Search-based accumulation of intermediate results.

Nested minima searches pick the smallest row index, then the smallest
column index among its holders; the holders' values are summed and the
entry is emitted, so the output comes out sorted without any explicit
coordinate alignment.

Two engines share one cost contract. ``insitu`` lays the RI/CI planes out
in crossbars and runs real bit-serial searches; ``vectorized`` derives the
same emissions and the same ledger with numpy grouping. Values are summed
per PE in slot order and the per-PE partials are then added in PE order.
"""

from __future__ import annotations


import numpy as np

from .cost import CostEvent, CostLedger
from .crossbar import Crossbar, lockstep_min_search
from .formats import SIGN_BIT
from .matrix_io import CooMatrix
from .sccp import IntermediateStore, SccpConfig

INSITU_LIMIT = 4096
EMIT_BYTES = 12  # RI, CI and a 32-bit value per output entry


def accumulate(store: IntermediateStore, cfg: SccpConfig | None = None, ledger: CostLedger | None = None,
               engine="auto") -> CooMatrix:
    cfg = cfg or SccpConfig()
    if engine == "auto":
        engine = "insitu" if len(store) <= INSITU_LIMIT else "vectorized"
    if engine == "insitu":
        return _accumulate_insitu(store, cfg, ledger)
    if engine == "vectorized":
        return _accumulate_vectorized(store, cfg, ledger)
    raise ValueError(f"unknown accumulation engine '{engine}'")


def search_cost_estimate(n_rows_out, k, word_bits=32):
    """Analytic search cycles: one RI search per output row plus one CI
    search per emission (terminal searches not included)."""
    return n_rows_out * word_bits + n_rows_out * k * word_bits


def _search(ledger, cfg, pes, counter):
    if ledger is not None:
        ledger.charge(CostEvent("search", cycles=cfg.word_bits, pes=pes, counter=counter, count=1))


def _invalidate(ledger, cfg, pes, counter):
    if ledger is not None:
        ledger.charge(CostEvent("search", cycles=cfg.write_cycles, pes=pes, counter=counter, count=1))


def _emit_costs(ledger, cfg, per_pe_counts):
    """ACC work for one emission: PEs add their holders in parallel, then the
    partials are chained together."""
    if ledger is None:
        return
    local = max(per_pe_counts)
    merges = len(per_pe_counts) - 1
    cycles = (local + merges) * cfg.acc_cycles
    ledger.charge(CostEvent("acc", cycles=cycles, pe_cycles=(sum(per_pe_counts) + merges) * cfg.acc_cycles,
                            counter="emissions", count=1))


def _finish(ledger, cfg, emissions):
    if ledger is not None and emissions:
        nbytes = emissions * EMIT_BYTES
        ledger.charge(CostEvent("io", cycles=cfg.energy.transfer_cycles(nbytes), nbytes=nbytes))


def _accumulate_insitu(store, cfg, ledger):
    b = cfg.word_bits
    if b != 32:
        raise ValueError("intermediate indices are 32-bit words")
    n = len(store)
    rows = cfg.array_rows
    # one crossbar per PE per block of array rows; RI at column 0, CI at column b
    xbs, owners, spans = [], [], []
    for p in np.unique(store.pe):
        idx = np.flatnonzero(store.pe == p)
        for s in range(0, idx.size, rows):
            part = idx[s:s + rows]
            xb = Crossbar(rows=rows, cols=2 * b, word_bits=b)
            xb.write_words(np.arange(part.size), 0, store.ri[part])
            xb.write_words(np.arange(part.size), b, store.ci[part])
            xbs.append(xb)
            owners.append(int(p))
            spans.append(part)
    pes = len(set(owners))
    occupied = [np.arange(rows) < s.size for s in spans]
    out_r, out_c, out_v = [], [], []
    if n == 0:
        _search(ledger, cfg, pes, "ri_searches")
        return CooMatrix.empty(store.n_rows, store.n_cols)
    while True:
        ri, holders = lockstep_min_search(xbs, 0, occupied)
        _search(ledger, cfg, pes, "ri_searches")
        if ri & int(SIGN_BIT):
            break
        while True:
            ci, h2 = lockstep_min_search(xbs, b, holders)
            _search(ledger, cfg, pes, "ci_searches")
            if ci & int(SIGN_BIT):
                break
            # directed read of the holders' values, grouped per PE
            partials = {}
            for k, m in enumerate(h2):
                hit = spans[k][np.flatnonzero(m[:spans[k].size])]
                for e in hit:
                    partials.setdefault(owners[k], []).append(e)
            total = 0.0
            for p in sorted(partials):
                s = 0.0
                for e in sorted(partials[p]):
                    s += store.val[e]
                total += s
            out_r.append(ri)
            out_c.append(ci)
            out_v.append(total)
            _emit_costs(ledger, cfg, [len(partials[p]) for p in sorted(partials)])
            for xb, m in zip(xbs, h2):
                xb.invalidate(b, m)
            _invalidate(ledger, cfg, pes, "invalidations")
        for xb, m in zip(xbs, holders):
            xb.invalidate(0, m)
        _invalidate(ledger, cfg, pes, "invalidations")
    _finish(ledger, cfg, len(out_r))
    return CooMatrix.from_arrays(store.n_rows, store.n_cols, out_r, out_c, out_v)


def _accumulate_vectorized(store, cfg, ledger):
    pes = store.n_pes
    ri_ok = (store.ri & SIGN_BIT) == 0
    valid = ri_ok & ((store.ci & SIGN_BIT) == 0)
    n_rows_seen = int(np.unique(store.ri[ri_ok]).size)
    ri = store.ri[valid].astype(np.uint64)
    ci = store.ci[valid].astype(np.uint64)
    key = (ri << np.uint64(32)) | ci
    pe = store.pe[valid].astype(np.uint64)
    vals = store.val[valid]

    # per-(key, PE) partial sums in slot order, then per-key sums in PE order;
    # the stable sort keeps storage order inside each group and bincount adds
    # sequentially in array order
    order = np.lexsort((pe, key))
    key, pe, vals = key[order], pe[order], vals[order]
    new_kp = np.r_[True, (key[1:] != key[:-1]) | (pe[1:] != pe[:-1])] if key.size else np.empty(0, bool)
    kp_id = np.cumsum(new_kp) - 1
    n_kp = int(new_kp.sum())
    partial = np.bincount(kp_id, weights=vals, minlength=n_kp)
    local = np.bincount(kp_id, minlength=n_kp)
    kp_key = key[new_kp]
    new_k = np.r_[True, kp_key[1:] != kp_key[:-1]] if kp_key.size else np.empty(0, bool)
    k_inv = np.cumsum(new_k) - 1
    uniq = kp_key[new_k]
    sums = np.bincount(k_inv, weights=partial, minlength=uniq.size)
    emissions = int(uniq.size)

    if ledger is not None:
        if n_rows_seen == 0:
            _search(ledger, cfg, pes, "ri_searches")
        else:
            b = cfg.word_bits
            n_ri = n_rows_seen + 1
            n_ci = emissions + n_rows_seen
            n_inv = emissions + n_rows_seen
            ledger.charge(CostEvent("search", cycles=n_ri * b, pes=pes, counter="ri_searches", count=n_ri))
            ledger.charge(CostEvent("search", cycles=n_ci * b, pes=pes, counter="ci_searches", count=n_ci))
            ledger.charge(CostEvent("search", cycles=n_inv * cfg.write_cycles, pes=pes,
                                    counter="invalidations", count=n_inv))
            if emissions:
                max_local = np.zeros(emissions, dtype=np.int64)
                np.maximum.at(max_local, k_inv, local)
                n_pes_hit = np.bincount(k_inv, minlength=emissions)
                merges = n_pes_hit - 1
                ledger.charge(CostEvent("acc", cycles=int((max_local + merges).sum()) * cfg.acc_cycles,
                                        pe_cycles=int(local.sum() + merges.sum()) * cfg.acc_cycles,
                                        counter="emissions", count=emissions))
        _finish(ledger, cfg, emissions)
    rows = (uniq >> np.uint64(32)).astype(np.int64)
    cols = (uniq & np.uint64(0xFFFFFFFF)).astype(np.int64)
    return CooMatrix.from_arrays(store.n_rows, store.n_cols, rows, cols, sums)


def merge_outputs(parts, n_rows, n_cols) -> CooMatrix:
    """Sorted merge of per-batch outputs, summing coinciding entries in batch order."""
    parts = list(parts)
    if len(parts) == 1:
        return parts[0]
    if not parts:
        return CooMatrix.empty(n_rows, n_cols)
    return CooMatrix.from_arrays(n_rows, n_cols, np.concatenate([p.rows for p in parts]),
                                 np.concatenate([p.cols for p in parts]),
                                 np.concatenate([p.vals for p in parts]), allow_duplicates=True)
