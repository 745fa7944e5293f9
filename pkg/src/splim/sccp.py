"""Structured condensing computation: ELLPACK vectors mapped onto PEs,
multiplied position by position, with right vectors rotating round a ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostEvent, CostLedger, EnergyConfig
from .formats import COL_WISE, INVALID, ROW_WISE, SIGN_BIT, EllpackMatrix, HybridMatrix


@dataclass(frozen=True)
class SccpConfig:
    num_pes: int = 32
    arrays_per_pe: int = 1000
    array_rows: int = 1024
    array_cols: int = 1024
    word_bits: int = 32
    # bit-serial NOR float32 multiply (24-bit mantissa product, exponent add, normalize)
    mult_cycles: int = 11400
    read_cycles: int = 1
    write_cycles: int = 1
    acc_cycles: int = 1
    coo_access_cycles: int = 1
    scheduler_cycles: int = 1
    energy: EnergyConfig = field(default_factory=EnergyConfig)

    def __post_init__(self):
        if self.num_pes < 1:
            raise ValueError("num_pes must be at least 1")
        for name in ("arrays_per_pe", "array_rows", "array_cols", "word_bits", "mult_cycles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("read_cycles", "write_cycles", "acc_cycles", "coo_access_cycles", "scheduler_cycles"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.word_bits > self.array_cols:
            raise ValueError("a word must fit in one array row")

    def with_(self, **kw) -> "SccpConfig":
        return replace(self, **kw)

    @property
    def word_bytes(self):
        return self.word_bits / 8

    def new_ledger(self) -> CostLedger:
        return CostLedger(self.energy)


@dataclass(frozen=True)
class Placement:
    """Which PE holds which vectors.

    ``left[p]`` and ``right[p]`` list vector ids resident on PE ``p`` before
    the first round; ``chain`` is the ring order.
    """

    left: tuple
    right: tuple
    chain: tuple

    @property
    def num_pes(self):
        return len(self.chain)

    def right_at(self, p, rnd):
        """Right vectors sitting on PE ``p`` during round ``rnd``."""
        t = self.num_pes
        return self.right[(p - rnd) % t]


def map_matrices(a_ell: EllpackMatrix, b_ell: EllpackMatrix, cfg: SccpConfig, right_ids=None) -> Placement:
    """Round-robin vectors over ``min(T, max(k_a, k_b))`` PEs."""
    if a_ell.n != b_ell.n:
        raise ValueError(f"inner dimensions differ: {a_ell.n} vs {b_ell.n}")
    k_a, k_b = a_ell.width, b_ell.width
    t = min(cfg.num_pes, max(k_a, k_b))
    if t == 0:
        return Placement((), (), ())
    right_ids = list(range(k_b)) if right_ids is None else list(right_ids)
    left = tuple(tuple(range(p, k_a, t)) for p in range(t))
    right = tuple(tuple(right_ids[p::t]) for p in range(t))
    return Placement(left, right, tuple(range(t)))


def vector_multiply(left_idx, left_val, right_idx, right_val):
    """Position-wise product of two aligned ELLPACK vectors.

    Returns ``(ri, ci, val)`` of length n. Positions where either slot is
    padding come back with both indices set to the invalid marker.
    """
    left_idx = np.asarray(left_idx, dtype=np.uint32)
    right_idx = np.asarray(right_idx, dtype=np.uint32)
    if left_idx.shape != right_idx.shape:
        raise ValueError("vector lengths differ")
    ok = ((left_idx & SIGN_BIT) == 0) & ((right_idx & SIGN_BIT) == 0)
    ri = np.where(ok, left_idx, INVALID).astype(np.uint32)
    ci = np.where(ok, right_idx, INVALID).astype(np.uint32)
    val = np.where(ok, np.asarray(left_val, dtype=np.float64) * np.asarray(right_val, dtype=np.float64), 0.0)
    return ri, ci, val


@dataclass(frozen=True, eq=False)
class IntermediateStore:
    """Intermediate (ri, ci, val) words in PE-then-slot order.

    ``slots`` counts physical rows including padding even when padded
    entries were not materialized.
    """

    n_rows: int
    n_cols: int
    ri: np.ndarray
    ci: np.ndarray
    val: np.ndarray
    pe: np.ndarray
    slots: int

    def __len__(self):
        return self.ri.size

    @property
    def valid(self):
        return ((self.ri & SIGN_BIT) == 0) & ((self.ci & SIGN_BIT) == 0)

    @property
    def n_pes(self):
        return int(np.unique(self.pe).size)

    @classmethod
    def from_chunks(cls, n_rows, n_cols, chunks, slots):
        """``chunks`` maps PE id -> list of (ri, ci, val) array triples."""
        ri, ci, val, pe = [], [], [], []
        for p in sorted(chunks):
            for r, c, v in chunks[p]:
                ri.append(r)
                ci.append(c)
                val.append(v)
                pe.append(np.full(r.size, p, dtype=np.int32))
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.empty(0, dt)
        return cls(n_rows, n_cols, cat(ri, np.uint32), cat(ci, np.uint32), cat(val, np.float64),
                   cat(pe, np.int32), int(slots))

    @classmethod
    def from_entries(cls, n_rows, n_cols, entries, pe=None):
        """Test helper: entries are (ri, ci, val) with raw unsigned indices."""
        entries = list(entries)
        ri = np.array([e[0] for e in entries], dtype=np.uint32)
        ci = np.array([e[1] for e in entries], dtype=np.uint32)
        val = np.array([e[2] for e in entries], dtype=np.float64)
        pe = np.zeros(len(entries), np.int32) if pe is None else np.asarray(pe, dtype=np.int32)
        order = np.argsort(pe, kind="stable")
        return cls(n_rows, n_cols, ri[order], ci[order], val[order], pe[order], len(entries))


@dataclass
class SccpRun:
    stores: list
    ledger: CostLedger
    placement: Placement
    n_batches: int
    ell_pairs: int = 0
    coo_products: int = 0

    @property
    def intermediate_slots(self):
        return sum(s.slots for s in self.stores)


def pe_capacity_words(cfg: SccpConfig, n):
    """Words one PE can hold per vector position."""
    arrays_per_vector = max(1, math.ceil(n / cfg.array_rows))
    groups = cfg.arrays_per_pe // arrays_per_vector
    return groups * (cfg.array_cols // cfg.word_bits)


def right_batch_size(k_a, k_b, n, cfg: SccpConfig):
    """Largest number of right vectors per batch that fits every PE."""
    if k_b == 0:
        return 0
    t = min(cfg.num_pes, max(k_a, k_b))
    cap = pe_capacity_words(cfg, n)
    l_max = math.ceil(k_a / t)

    def need(rb):
        return 2 * l_max + 2 * math.ceil(rb / t) + 3 * l_max * rb

    if need(1) > cap:
        raise ValueError(f"PE capacity of {cap} words per position cannot hold one vector pair")
    lo, hi = 1, k_b
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if need(mid) <= cap:
            lo = mid
        else:
            hi = mid - 1
    return lo


def ring_broadcast(placement: Placement, pes, ledger: CostLedger | None = None, cfg: SccpConfig | None = None,
                   n=0):
    """Rotate every right value plane one PE along the chain.

    ``pes`` is a list of per-PE dicts holding ``"right"``: list of
    ``(vector id, value plane)``; index planes stay where they are.
    Costs two RowClone phases (even senders, then odd senders).
    """
    t = placement.num_pes
    if t < 2:
        return
    moving = [pes[p]["right"] for p in placement.chain]
    for i, p in enumerate(placement.chain):
        pes[placement.chain[(i + 1) % t]]["right"] = moving[i]
    if ledger is not None:
        cfg = cfg or SccpConfig(energy=ledger.energy_config)
        _charge_broadcast(ledger, cfg, [len(m) for m in moving], n)


def _charge_broadcast(ledger, cfg, per_pe_vectors, n):
    rows = min(n, cfg.array_rows)
    plane_bytes = n * cfg.word_bits // 8
    for parity in (0, 1):
        senders = [c for i, c in enumerate(per_pe_vectors) if i % 2 == parity and c > 0]
        nbytes = sum(senders) * plane_bytes
        cycles = rows * (cfg.read_cycles + cfg.write_cycles)
        ledger.charge(CostEvent("rowclone", cycles=cycles, pes=2 * len(senders),
                                counter="rowclone_phases", count=1))
        ledger.charge(CostEvent("io", cycles=cfg.energy.transfer_cycles(nbytes), pes=max(1, len(senders)),
                                nbytes=nbytes))
    ledger.count("broadcasts")


def _charge_load(ledger, cfg, n_vectors, n):
    """Write ELLPACK index and value planes into the arrays."""
    if n_vectors == 0 or n == 0:
        return
    nbytes = n_vectors * n * 2 * cfg.word_bits // 8
    cycles = min(n, cfg.array_rows) * cfg.write_cycles + cfg.energy.transfer_cycles(nbytes)
    ledger.charge(CostEvent("io", cycles=cycles, nbytes=nbytes))


def run_sccp(a: HybridMatrix, b: HybridMatrix, cfg: SccpConfig | None = None, ledger: CostLedger | None = None,
             keep_padding=False) -> SccpRun:
    """Multiply every (left, right) ELLPACK vector pair once, then the COO overflow.

    ``a`` must be row-wise, ``b`` column-wise. Returns one intermediate
    store per batch of right vectors.
    """
    cfg = cfg or SccpConfig()
    ledger = ledger if ledger is not None else cfg.new_ledger()
    if a.orientation != ROW_WISE or b.orientation != COL_WISE:
        raise ValueError("left operand must be row-wise and right operand column-wise")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    ae, be = a.ell, b.ell
    n = ae.n
    k_a, k_b = ae.width, be.width
    out_shape = (a.shape[0], b.shape[1])

    a_ok = ae.valid
    b_ok = be.valid
    full = map_matrices(ae, be, cfg)
    t = full.num_pes
    rb = right_batch_size(k_a, k_b, n, cfg) if k_a and k_b else k_b
    batches = [list(range(s, min(s + rb, k_b))) for s in range(0, k_b, rb)] if rb else []
    if not batches:
        batches = [[]]
    if k_a and n:
        _charge_load(ledger, cfg, k_a, n)

    stores = []
    ell_pairs = 0
    vzf = cfg.energy.valid_zero_fraction
    for bi, ids in enumerate(batches):
        chunks: dict = {}
        slots = 0
        if ids and k_a and n:
            placement = map_matrices(ae, be, cfg, right_ids=ids)
            _charge_load(ledger, cfg, len(ids), n)
            pes = [{"right": [(w, be.value[w]) for w in placement.right[p]]} for p in range(t)]
            for rnd in range(t):
                steps = 0
                pe_steps = 0
                valid_rows = 0
                for p in range(t):
                    lv = np.asarray(placement.left[p], dtype=np.int64)
                    resident = pes[p]["right"]
                    if lv.size == 0 or not resident:
                        continue
                    wv = np.array([w for w, _ in resident], dtype=np.int64)
                    rvals = np.stack([vals for _, vals in resident])
                    both = a_ok[lv][:, None, :] & b_ok[wv][None, :, :]
                    if keep_padding:
                        li, wi, j = np.indices(both.shape).reshape(3, -1)
                    else:
                        li, wi, j = np.nonzero(both)
                    ok = both[li, wi, j]
                    ri = np.where(ok, ae.index[lv[li], j], INVALID).astype(np.uint32)
                    ci = np.where(ok, be.index[wv[wi], j], INVALID).astype(np.uint32)
                    val = np.where(ok, ae.value[lv[li], j] * rvals[wi, j], 0.0)
                    chunks.setdefault(p, []).append((ri, ci, val))
                    pairs = lv.size * wv.size
                    steps = max(steps, pairs)
                    pe_steps += pairs
                    valid_rows += int(both.sum())
                    slots += pairs * n
                    ell_pairs += pairs
                if pe_steps:
                    total = pe_steps * n
                    zf = (valid_rows * vzf + (total - valid_rows)) / total
                    ledger.charge(CostEvent("mult", cycles=steps * cfg.mult_cycles,
                                            pe_cycles=pe_steps * cfg.mult_cycles, zero_fraction=zf,
                                            valid_rows=valid_rows, total_rows=total,
                                            counter="mult_rounds", count=steps))
                ring_broadcast(placement, pes, ledger, cfg, n)
        if bi == len(batches) - 1:
            coo = _coo_overflow(a, b, cfg, ledger)
            if coo[0].size:
                chunks.setdefault(t, []).append(coo)
                slots += coo[0].size
        stores.append(IntermediateStore.from_chunks(out_shape[0], out_shape[1], chunks, slots))
    ledger.count("batches", len(batches))
    ledger.count("intermediate_elements", sum(s.slots for s in stores))
    coo_products = int((stores[-1].pe == t).sum())
    return SccpRun(stores, ledger, full, len(batches), ell_pairs, coo_products)


def _ell_column_entries(ell: EllpackMatrix):
    """Valid ELLPACK slots as (position, index, value), sorted by position then index."""
    v, j = np.nonzero(ell.valid)
    order = np.lexsort((ell.index[v, j], j))
    v, j = v[order], j[order]
    return j.astype(np.int64), ell.index[v, j].astype(np.int64), ell.value[v, j]


def _group(keys, n):
    """CSR-like pointer over sorted ``keys`` in 0..n-1."""
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=ptr[1:])
    return ptr


def _expand(outer_pos, outer_idx, outer_val, inner_ptr, inner_idx, inner_val):
    """Pair each outer entry with every inner entry at the same position."""
    counts = inner_ptr[outer_pos + 1] - inner_ptr[outer_pos]
    rep = np.repeat(np.arange(outer_pos.size), counts)
    starts = np.repeat(inner_ptr[outer_pos], counts)
    offs = np.arange(rep.size) - np.repeat(np.cumsum(counts) - counts, counts)
    k = starts + offs
    return outer_idx[rep], inner_idx[k], outer_val[rep] * inner_val[k]


def _coo_overflow(a: HybridMatrix, b: HybridMatrix, cfg: SccpConfig, ledger: CostLedger):
    """Products involving overflow entries, computed on the COO PE.

    Left overflow pairs with all of B's row ``j``; right overflow pairs with
    the ELLPACK part of A's column ``j``. Each product costs one exact
    access to fetch its partner word; multiplies are row-parallel.
    """
    n = a.shape[1]
    a_ov, b_ov = a.overflow, b.overflow
    empty = (np.empty(0, np.uint32), np.empty(0, np.uint32), np.empty(0))
    if a_ov.nnz == 0 and b_ov.nnz == 0:
        return empty
    # all of B by row (ELL + overflow), and A's ELL part by column
    bj, bc, bv = _ell_column_entries(b.ell)
    bj = np.r_[bj, b_ov.rows]
    bc = np.r_[bc, b_ov.cols]
    bv = np.r_[bv, b_ov.vals]
    order = np.lexsort((bc, bj))
    bj, bc, bv = bj[order], bc[order], bv[order]
    b_ptr = _group(bj, n)
    aj, ar, av = _ell_column_entries(a.ell)
    a_ptr = _group(aj, n)

    r1, c1, v1 = _expand(a_ov.cols, a_ov.rows, a_ov.vals, b_ptr, bc, bv)
    # second part emits (row of A, col of B): outer is B overflow, inner is A column
    c2, r2, v2 = _expand(b_ov.rows, b_ov.cols, b_ov.vals, a_ptr, ar, av)
    ri = np.r_[r1, r2].astype(np.uint32)
    ci = np.r_[c1, c2].astype(np.uint32)
    val = np.r_[v1, v2]
    products = ri.size
    if products:
        per_op = cfg.arrays_per_pe * cfg.array_rows
        ops = math.ceil(products / per_op)
        ledger.charge(CostEvent("io", cycles=products * cfg.coo_access_cycles,
                                nbytes=int(products * cfg.word_bits // 8), counter="coo_accesses", count=products))
        ledger.charge(CostEvent("mult", cycles=ops * cfg.mult_cycles, pe_cycles=ops * cfg.mult_cycles,
                                zero_fraction=cfg.energy.valid_zero_fraction, valid_rows=products,
                                total_rows=products, counter="coo_mult_ops", count=ops))
    return ri, ci, val
