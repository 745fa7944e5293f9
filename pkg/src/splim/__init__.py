"""Functional and cost simulator of an in-memory SpGEMM accelerator."""

from .baseline import BaselineRun, oracle_spgemm, run_coo_splim
from .cost import CostEvent, CostLedger, EnergyConfig, breakdown, predict, utilization
from .formats import (COL_WISE, INVALID, ROW_WISE, EllpackMatrix, HybridMatrix, hybrid_split, to_csc,
                      to_csr, to_ellpack)
from .matrix_io import (CooMatrix, MatrixStats, compute_stats, gen_powerlaw, gen_random, gen_uniform,
                        generate, parse_matrix_market, read_matrix_market, redistribute, thin, transpose,
                        write_matrix_market)
from .pipeline import SplimRun, run_splim
from .sccp import SccpConfig

__version__ = "0.1.0"
