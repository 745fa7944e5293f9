import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from examples_small import EX_A, EX_B, a_, b_, h_, k_, l_, m_
from splim.accumulator import accumulate, merge_outputs, search_cost_estimate
from splim.formats import COL_WISE, INVALID, ROW_WISE, hybrid_split
from splim.matrix_io import CooMatrix, gen_uniform, transpose
from splim.sccp import IntermediateStore, SccpConfig, run_sccp

CFG = SccpConfig()


def _store(entries, pe=None, shape=(8, 8)):
    return IntermediateStore.from_entries(shape[0], shape[1], entries, pe)


def _both(store):
    l1, l2 = CFG.new_ledger(), CFG.new_ledger()
    o1 = accumulate(store, CFG, l1, engine="insitu")
    o2 = accumulate(store, CFG, l2, engine="vectorized")
    return o1, o2, l1, l2


def test_small_example_emission_order():
    run = run_sccp(hybrid_split(EX_A, orientation=ROW_WISE), hybrid_split(EX_B, orientation=COL_WISE),
                   SccpConfig(num_pes=2))
    out = accumulate(run.stores[0], engine="insitu")
    e = out.entries()
    assert e[0] == (0, 0, a_ * h_)
    assert e[1] == (0, 2, a_ * k_ + b_ * l_)
    assert e[2] == (0, 3, b_ * m_)


def test_sums_holders_and_counts_searches():
    s = _store([(1, 2, 1.0), (0, 5, 2.0), (1, 2, 3.0), (1, 0, 4.0), (INVALID, INVALID, 0.0)])
    out, _, led, _ = _both(s)
    assert out.entries() == [(0, 5, 2.0), (1, 0, 4.0), (1, 2, 4.0)]
    c = led.counters
    # 2 rows + terminal, 3 emissions + one terminal per row
    assert c["ri_searches"] == 3 and c["ci_searches"] == 5
    assert c["invalidations"] == 5 and c["emissions"] == 3
    assert led.cycles["search"] == 8 * 32 + 5 * CFG.write_cycles


def test_cancelled_sum_is_emitted():
    out, _, _, _ = _both(_store([(0, 0, 2.5), (0, 0, -2.5)]))
    assert out.entries() == [(0, 0, 0.0)]


def test_empty_store():
    out, out2, l1, l2 = _both(_store([]))
    assert out.nnz == 0 and out2.nnz == 0 and l1 == l2
    assert l1.counters["ri_searches"] == 1


def test_acc_cycles_local_then_merge():
    # PE0 holds 3 copies of (0,0), PE1 holds 1: 3 local adds plus 1 merge
    s = _store([(0, 0, 1.0)] * 3 + [(0, 0, 1.0)], pe=[0, 0, 0, 1])
    out, _, led, _ = _both(s)
    assert out.entries() == [(0, 0, 4.0)]
    assert led.cycles["acc"] == 4 and led.pe_cycles["acc"] == 5


def test_summation_order_per_pe_then_pe_order():
    big, tiny = 1e16, 1.0
    # PE0 partial: big + tiny (tiny lost), PE1 partial: -big
    s = _store([(0, 0, big), (0, 0, -big), (0, 0, tiny)], pe=[0, 1, 0])
    out, out2, _, _ = _both(s)
    assert out.vals[0] == out2.vals[0] == (big + tiny) + (-big)


entry = st.tuples(st.integers(0, 6), st.integers(0, 6), st.floats(-100, 100, allow_nan=False),
                  st.integers(0, 3))


@given(st.lists(entry, max_size=60), st.integers(0, 5))
def test_engines_agree_bit_for_bit(raw, n_invalid):
    entries = [(r, c, v) for r, c, v, _ in raw] + [(INVALID, INVALID, 0.0)] * n_invalid
    pe = [p for *_, p in raw] + [0] * n_invalid
    o1, o2, l1, l2 = _both(_store(entries, pe))
    assert o1.entries() == o2.entries()
    assert l1 == l2
    # output sorted by (row, col) and free of duplicates
    keys = list(zip(o1.rows.tolist(), o1.cols.tolist()))
    assert keys == sorted(set(keys))


def test_engines_agree_on_full_pipeline_store():
    m = gen_uniform(64, 5, 9)
    run = run_sccp(hybrid_split(m, orientation=ROW_WISE), hybrid_split(transpose(m), orientation=COL_WISE),
                   SccpConfig(num_pes=3))
    o1, o2, l1, l2 = _both(run.stores[0])
    assert o1.entries() == o2.entries() and l1 == l2


def test_insitu_spans_several_arrays_per_pe():
    cfg = SccpConfig(array_rows=4)
    rng = np.random.default_rng(1)
    entries = [(int(r), int(c), float(v)) for r, c, v in
               zip(rng.integers(0, 5, 30), rng.integers(0, 5, 30), rng.standard_normal(30))]
    s = _store(entries, pe=rng.integers(0, 2, 30))
    l1, l2 = cfg.new_ledger(), cfg.new_ledger()
    assert accumulate(s, cfg, l1, "insitu").entries() == accumulate(s, cfg, l2, "vectorized").entries()
    assert l1 == l2


def test_search_cost_estimate():
    assert search_cost_estimate(10, 3) == 10 * 32 + 10 * 3 * 32
    assert search_cost_estimate(0, 5) == 0


def test_unknown_engine():
    with pytest.raises(ValueError):
        accumulate(_store([]), engine="gpu")


def test_merge_outputs_sums_in_batch_order():
    p1 = CooMatrix.from_entries(2, 2, [(0, 0, 1.0), (1, 1, 2.0)])
    p2 = CooMatrix.from_entries(2, 2, [(0, 0, 3.0), (0, 1, 4.0)])
    assert merge_outputs([p1, p2], 2, 2).entries() == [(0, 0, 4.0), (0, 1, 4.0), (1, 1, 2.0)]
    assert merge_outputs([], 2, 2).nnz == 0
