import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from examples_small import EX_A, EX_B
from splim.baseline import oracle_spgemm
from splim.cost import CostLedger
from splim.experiments import outputs_match
from splim.formats import COL_WISE, INVALID, ROW_WISE, hybrid_split, to_ellpack
from splim.matrix_io import CooMatrix, gen_uniform, transpose
from splim.pipeline import run_splim
from splim.sccp import (SccpConfig, map_matrices, pe_capacity_words, right_batch_size, ring_broadcast,
                        run_sccp, vector_multiply)
from test_matrix_io import coo_matrices
from conftest import random_coo


def _ell_of_width(k, n=8):
    m = CooMatrix.from_entries(n, n, [(r, 0, 1.0) for r in range(k)])
    return to_ellpack(m, ROW_WISE)


def _pairs_covered(pl):
    seen = []
    for rnd in range(pl.num_pes):
        for p in range(pl.num_pes):
            seen += [(v, w) for v in pl.left[p] for w in pl.right_at(p, rnd)]
    return seen


def test_mapping_two_by_two():
    ea, eb = to_ellpack(EX_A, ROW_WISE), to_ellpack(EX_B, COL_WISE)
    pl = map_matrices(ea, eb, SccpConfig(num_pes=2))
    assert pl.left == ((0,), (1,)) and pl.right == ((0,), (1,))
    assert pl.right_at(0, 1) == (1,) and pl.right_at(1, 1) == (0,)


def test_mapping_wraps_round_robin():
    pl = map_matrices(_ell_of_width(5), _ell_of_width(2), SccpConfig(num_pes=2))
    assert pl.left == ((0, 2, 4), (1, 3))
    assert pl.right == ((0,), (1,))


def test_mapping_uses_only_needed_pes():
    pl = map_matrices(_ell_of_width(3), _ell_of_width(2), SccpConfig(num_pes=32))
    assert pl.num_pes == 3 and pl.right[2] == ()


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 8))
def test_every_pair_meets_exactly_once(k_a, k_b, t):
    pl = map_matrices(_ell_of_width(k_a, 16), _ell_of_width(k_b, 16), SccpConfig(num_pes=t))
    seen = _pairs_covered(pl)
    assert sorted(seen) == [(v, w) for v in range(k_a) for w in range(k_b)]


def test_mapping_dimension_check():
    with pytest.raises(ValueError):
        map_matrices(_ell_of_width(1, 4), _ell_of_width(1, 5), SccpConfig())


def test_vector_multiply_marks_padding():
    ri, ci, val = vector_multiply([0, INVALID, 2], [2.0, 0, 3.0], [1, 1, INVALID], [5.0, 1.0, 0])
    assert ri.tolist() == [0, INVALID, INVALID] and ci.tolist() == [1, INVALID, INVALID]
    assert val.tolist() == [10.0, 0.0, 0.0]


def test_broadcast_returns_after_full_cycle():
    pl = map_matrices(_ell_of_width(5), _ell_of_width(5), SccpConfig(num_pes=5))
    pes = [{"right": [(w, None) for w in pl.right[p]]} for p in range(5)]
    start = [list(p["right"]) for p in pes]
    for step in range(5):
        for p in range(5):
            assert [w for w, _ in pes[p]["right"]] == list(pl.right_at(p, step))
        ring_broadcast(pl, pes)
    assert [p["right"] for p in pes] == start


def test_broadcast_moves_value_planes_only():
    t, n = 4, 64
    pl = map_matrices(_ell_of_width(t, n), _ell_of_width(t, n), SccpConfig(num_pes=t))
    pes = [{"right": [(w, None) for w in pl.right[p]]} for p in range(t)]
    ledger = CostLedger()
    ring_broadcast(pl, pes, ledger, SccpConfig(num_pes=t), n)
    assert ledger.bytes_moved == t * n * 32 // 8
    assert ledger.counters["rowclone_phases"] == 2


def test_uniform_slot_count():
    m = gen_uniform(64, 4, 1)
    run = run_sccp(hybrid_split(m, orientation=ROW_WISE), hybrid_split(transpose(m), orientation=COL_WISE))
    assert run.intermediate_slots == 1024
    assert run.ell_pairs == 16 and run.coo_products == 0
    assert run.ledger.counters["mult_rounds"] == 4


def test_mult_rounds_when_vectors_exceed_pes():
    m = gen_uniform(32, 8, 3)
    cfg = SccpConfig(num_pes=4)
    run = run_sccp(hybrid_split(m, orientation=ROW_WISE), hybrid_split(transpose(m), orientation=COL_WISE), cfg)
    # 4 rounds, each PE holds 2 left and 2 right vectors
    assert run.ledger.counters["mult_rounds"] == 16
    assert run.ledger.cycles["mult"] == 16 * cfg.mult_cycles


def test_empty_right_matrix():
    a = gen_uniform(16, 2, 0)
    b = CooMatrix.empty(16, 16)
    run = run_sccp(hybrid_split(a, orientation=ROW_WISE), hybrid_split(b, orientation=COL_WISE))
    assert run.intermediate_slots == 0 and len(run.stores) == 1 and len(run.stores[0]) == 0
    assert run_splim(a, b).output.nnz == 0


def test_orientation_checked():
    m = gen_uniform(8, 2, 0)
    with pytest.raises(ValueError):
        run_sccp(hybrid_split(m, orientation=COL_WISE), hybrid_split(m, orientation=COL_WISE))


def test_capacity_and_batch_size():
    cfg = SccpConfig(num_pes=4, arrays_per_pe=1)
    assert pe_capacity_words(cfg, 100) == 32
    assert pe_capacity_words(cfg.with_(arrays_per_pe=5), 2048) == 64
    assert right_batch_size(16, 16, 100, cfg) == 1
    assert right_batch_size(4, 16, 100, cfg.with_(arrays_per_pe=4)) == 16
    with pytest.raises(ValueError):
        right_batch_size(64, 64, 100, cfg)


def test_batched_run_matches_single_batch():
    m = gen_uniform(48, 16, 4)
    t = transpose(m)
    small = SccpConfig(num_pes=4, arrays_per_pe=1)
    run = run_splim(m, t, small)
    assert run.sccp.n_batches == 16
    assert outputs_match(run.output, run_splim(m, t, small.with_(arrays_per_pe=1000)).output)
    assert run.intermediate_elements == 48 * 16 * 16


def test_keep_padding_materializes_all_slots():
    m = CooMatrix.from_entries(6, 6, [(0, 0, 1.0), (1, 0, 2.0), (2, 3, 3.0), (4, 5, 4.0)])
    a = hybrid_split(m, orientation=ROW_WISE)
    b = hybrid_split(transpose(m), orientation=COL_WISE)
    lean = run_sccp(a, b)
    fat = run_sccp(a, b, keep_padding=True)
    assert len(fat.stores[0]) == fat.intermediate_slots == lean.intermediate_slots
    assert int(fat.stores[0].valid.sum()) == len(lean.stores[0])
    assert run_splim(m, transpose(m), keep_padding=True).output == run_splim(m, transpose(m)).output


def test_overflow_products_go_to_coo_pe():
    rng = np.random.default_rng(0)
    a = random_coo(rng, 40, 40, 0.05)
    extra = [(r, 7, 1.0 + r) for r in range(30)]
    a = CooMatrix.from_entries(40, 40, sorted(set(a.entries()) | set(extra)), allow_duplicates=True)
    b = transpose(a)
    ha, hb = hybrid_split(a, orientation=ROW_WISE), hybrid_split(b, orientation=COL_WISE)
    assert ha.overflow.nnz > 0
    run = run_sccp(ha, hb)
    t = run.placement.num_pes
    assert run.coo_products > 0 and run.ledger.counters["coo_accesses"] == run.coo_products
    assert set(np.unique(run.stores[-1].pe)) <= set(range(t + 1))


@settings(max_examples=40)
@given(coo_matrices(max_dim=10), st.integers(1, 6))
def test_intermediates_hold_every_product_once(m, t):
    b = transpose(m)
    ha, hb = hybrid_split(m, orientation=ROW_WISE), hybrid_split(b, orientation=COL_WISE)
    run = run_sccp(ha, hb, SccpConfig(num_pes=t))
    got = {}
    for s in run.stores:
        for r, c, v in zip(s.ri[s.valid], s.ci[s.valid], s.val[s.valid]):
            got.setdefault((int(r), int(c)), []).append(v)
    want = {}
    for i, k, x in m.entries():
        for k2, j, y in b.entries():
            if k == k2:
                want.setdefault((i, j), []).append(x * y)
    assert sorted(got) == sorted(want)
    for key in want:
        assert sorted(got[key]) == pytest.approx(sorted(want[key]))


def test_small_example_against_oracle():
    out = run_splim(EX_A, EX_B, SccpConfig(num_pes=2)).output
    assert out == oracle_spgemm(EX_A, EX_B)
