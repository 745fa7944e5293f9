import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splim.cost import CostLedger
from splim.crossbar import Crossbar, WideArray, bss_compose, lockstep_min_search, rowclone


def _loaded(values, rows=None, word_bits=32):
    xb = Crossbar(rows=rows or max(1, len(values)), cols=64, word_bits=word_bits)
    for r, v in enumerate(values):
        xb.write_word(r, 0, v)
    return xb


@pytest.mark.parametrize("n_inputs", [1, 2, 3])
def test_nor_truth_table(n_inputs):
    combos = list(itertools.product([False, True], repeat=n_inputs))
    xb = Crossbar(rows=len(combos), cols=8)
    for r, bits in enumerate(combos):
        xb.cells[r, :n_inputs] = bits
    xb.init_column(7)
    xb.nor_columns(range(n_inputs), 7)
    for r, bits in enumerate(combos):
        assert xb.cells[r, 7] == (not any(bits))


def test_nor_output_never_switches_up_and_honours_mask():
    xb = Crossbar(rows=4, cols=4)
    xb.cells[:, 0] = [False, True, False, True]
    xb.init_column(3, xb.mask([0, 1]))
    xb.nor_columns([0], 3, active=xb.mask([0, 1, 2]))
    # row 0: NOR(0)=1, row 1: NOR(1)=0, row 2 was not preset, row 3 inactive
    assert xb.cells[:, 3].tolist() == [True, False, False, False]


def test_nor_rejects_overlap():
    with pytest.raises(ValueError):
        Crossbar(rows=2, cols=4).nor_columns([0, 1], 1)


def test_nor_charges_one_cycle():
    ledger = CostLedger()
    xb = Crossbar(rows=2, cols=4, ledger=ledger)
    xb.nor_columns([0], 1)
    assert ledger.cycles["mult"] == 1


def test_word_round_trip_10k():
    rng = np.random.default_rng(5)
    vals = rng.integers(0, 2 ** 32, 10_000, dtype=np.uint64)
    xb = Crossbar(rows=10_000, cols=64)
    xb.write_words(np.arange(vals.size), 32, vals)
    assert np.array_equal(xb.read_words(32), vals)
    for r in rng.integers(0, vals.size, 50):
        assert xb.read_word(int(r), 32) == int(vals[r])
    xb.write_word(3, 0, 0x80000001)
    assert xb.cells[3, 0] and xb.cells[3, 31] and not xb.cells[3, 1:31].any()


def test_word_bounds():
    xb = Crossbar(rows=2, cols=40)
    with pytest.raises(IndexError):
        xb.write_word(0, 10, 1)
    with pytest.raises(ValueError):
        xb.write_word(0, 0, 2 ** 32)


def test_rowclone_copies_and_costs():
    src, dst = Crossbar(rows=4, cols=64), Crossbar(rows=4, cols=64)
    src.write_word(1, 0, 123456)
    src.write_word(1, 32, 42)
    ledger = CostLedger()
    rowclone(src, dst, 1, 3, ledger)
    assert dst.read_word(3, 0) == 123456 and dst.read_word(3, 32) == 42
    assert ledger.cycles["rowclone"] == 2 and ledger.counters["rowclones"] == 1
    assert ledger.bytes_moved == 8


def test_rowclone_self_same_row_is_noop():
    xb = Crossbar(rows=2, cols=32)
    xb.write_word(0, 0, 9)
    ledger = CostLedger()
    rowclone(xb, xb, 0, 0, ledger)
    assert xb.read_word(0, 0) == 9 and ledger.total_cycles == 0


def test_rowclone_width_mismatch():
    with pytest.raises(ValueError):
        rowclone(Crossbar(rows=2, cols=32), Crossbar(rows=2, cols=64), 0, 0)


def test_min_search_examples():
    xb = _loaded([5, 3, 7, 3, 6, 2], word_bits=8)
    v, h = xb.min_search(0)
    assert v == 2 and np.flatnonzero(h).tolist() == [5]
    xb = _loaded([5, 3, 7, 4], word_bits=8)
    v, h = xb.min_search(0, xb.mask([1, 3]))
    assert v == 3 and np.flatnonzero(h).tolist() == [1]


def test_min_search_ties_and_cost():
    ledger = CostLedger()
    xb = _loaded([4, 1, 9, 1])
    xb.ledger = ledger
    v, h = xb.min_search(0)
    assert v == 1 and np.flatnonzero(h).tolist() == [1, 3]
    assert ledger.cycles["search"] == 32


def test_min_search_empty_mask():
    xb = _loaded([1, 2])
    with pytest.raises(ValueError):
        xb.min_search(0, np.zeros(2, bool))


@given(st.lists(st.integers(0, 2 ** 32 - 1), min_size=1, max_size=40), st.data())
def test_min_search_matches_linear_scan(vals, data):
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=len(vals), max_size=len(vals))))
    if not mask.any():
        mask[0] = True
    xb = _loaded(vals)
    v, h = xb.min_search(0, mask)
    live = [x for x, m in zip(vals, mask) if m]
    assert v == min(live)
    assert np.flatnonzero(h).tolist() == [i for i, x in enumerate(vals) if mask[i] and x == v]


def test_invalidate_moves_rows_past_valid_words():
    xb = _loaded([5, 3, 7])
    xb.invalidate(0, xb.mask([1]))
    assert xb.read_word(1, 0) == 0x80000003
    v, h = xb.min_search(0)
    assert v == 5 and np.flatnonzero(h).tolist() == [0]


def test_sorted_extraction_by_repeated_search():
    rng = np.random.default_rng(2)
    vals = rng.integers(0, 1000, 30)
    xb = _loaded(vals)
    out = []
    while True:
        v, h = xb.min_search(0)
        if v & 0x80000000:
            break
        out.extend([v] * int(h.sum()))
        xb.invalidate(0, h)
    assert out == sorted(vals.tolist())


def test_wide_array_locate():
    wide = WideArray([Crossbar(rows=4, cols=1024), Crossbar(rows=4, cols=1024)])
    assert wide.cols == 2048
    assert wide.locate(1500) == (1, 476)
    assert wide.locate(0) == (0, 0) and wide.locate(1024) == (1, 0)
    with pytest.raises(IndexError):
        wide.locate(2048)


def test_wide_array_rejects_mixed_heights():
    with pytest.raises(ValueError):
        WideArray([Crossbar(rows=4, cols=8), Crossbar(rows=8, cols=8)])


@given(st.lists(st.integers(0, 2 ** 32 - 1), min_size=1, max_size=16), st.integers(0, 56))
def test_wide_array_behaves_like_one_array(vals, offset):
    n = len(vals)
    wide = bss_compose([Crossbar(rows=n, cols=40), Crossbar(rows=n, cols=48)])
    mono = Crossbar(rows=n, cols=88)
    for r, v in enumerate(vals):
        wide.write_word(r, offset, v)
        mono.write_word(r, offset, v)
    assert [wide.read_word(r, offset) for r in range(n)] == list(vals)
    wv, wh = wide.min_search(offset)
    mv, mh = mono.min_search(offset)
    assert wv == mv and np.array_equal(wh, mh)
    wide.invalidate(offset, wh)
    mono.invalidate(offset, mh)
    assert [wide.read_word(r, offset) for r in range(n)] == mono.read_words(offset).tolist()


def test_lockstep_search_spans_arrays():
    a, b = _loaded([9, 4, 6]), _loaded([4, 8])
    ledger = CostLedger()
    v, hs = lockstep_min_search([a, b], 0, [a.mask(), b.mask()], ledger, pes=2)
    assert v == 4
    assert np.flatnonzero(hs[0]).tolist() == [1] and np.flatnonzero(hs[1]).tolist() == [0]
    assert ledger.cycles["search"] == 32 and ledger.pe_cycles["search"] == 64


def test_dump_rows():
    xb = Crossbar(rows=2, cols=4, word_bits=4)
    xb.write_word(1, 0, 0b1010)
    assert xb.dump().splitlines()[1].endswith("1010")
