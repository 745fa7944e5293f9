"""End-to-end SPLIM product: hybrid split, SCCP, search-based accumulation."""

from __future__ import annotations

from dataclasses import dataclass

from .accumulator import accumulate, merge_outputs
from .cost import CostLedger
from .formats import COL_WISE, ROW_WISE, HybridMatrix, hybrid_split
from .matrix_io import CooMatrix
from .sccp import SccpConfig, SccpRun, run_sccp


@dataclass
class SplimRun:
    output: CooMatrix
    ledger: CostLedger
    left: HybridMatrix
    right: HybridMatrix
    sccp: SccpRun

    @property
    def intermediate_elements(self):
        return self.sccp.intermediate_slots


def run_splim(a: CooMatrix, b: CooMatrix, cfg: SccpConfig | None = None, engine="auto",
              keep_padding=False) -> SplimRun:
    """Compute ``a @ b`` on the modeled accelerator.

    The left operand is condensed row-wise (split on its column counts),
    the right one column-wise (split on its row counts).
    """
    cfg = cfg or SccpConfig()
    if a.n_cols != b.n_rows:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    ledger = cfg.new_ledger()
    ha = hybrid_split(a, orientation=ROW_WISE)
    hb = hybrid_split(b, orientation=COL_WISE)
    run = run_sccp(ha, hb, cfg, ledger, keep_padding=keep_padding)
    parts = [accumulate(store, cfg, ledger, engine=engine) for store in run.stores]
    out = merge_outputs(parts, a.n_rows, b.n_cols)
    return SplimRun(out, ledger, ha, hb, run)
