"""Cycle / energy / utilization accounting and the analytic complexity predictors.

Cycle counters hold critical-path cycles per category. Energy is derived
from the power constants in :class:`EnergyConfig`: a compute event costs
``pe_cycles * (PE array power / clock)`` split into a dynamic part and a
leakage part that scales with the fraction of activated cells that sit in
the high-resistance ('0') state. The controller is powered for every cycle
of every event.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

CYCLE_CATEGORIES = ("mult", "search", "acc", "rowclone", "io", "ctrl")
ENERGY_CATEGORIES = ("array", "leakage", "io", "ctrl")

# categories whose cycles drive memristor arrays
_ARRAY_KINDS = {"mult", "search", "rowclone"}


@dataclass(frozen=True)
class EnergyConfig:
    clock_hz: float = 1e9
    pe_array_power: float = 6.14           # W, 1000 arrays of one PE
    buffer_power: float = 79.4e-3          # W per PE, I/O buffers
    acc_power: float = 0.2e-3              # W per PE accumulator
    ctrl_power: float = 207.8e-3           # W, single controller
    interconnect_bw: float = 1000e9        # B/s on-chip interconnect
    leakage_fraction: float = 0.1          # share of array power lost through '0' cells
    valid_zero_fraction: float = 0.5       # '0' share of cells in a non-zero word

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")
        if not self.leakage_fraction < 1:
            raise ValueError("leakage_fraction must be < 1")

    @property
    def e_array(self):
        """Dynamic array energy per PE-cycle (J)."""
        return self.pe_array_power * (1 - self.leakage_fraction) / self.clock_hz

    @property
    def e_leak(self):
        """Leakage energy per PE-cycle with every activated cell at '0' (J)."""
        return self.pe_array_power * self.leakage_fraction / self.clock_hz

    @property
    def e_buffer(self):
        return self.buffer_power / self.clock_hz

    @property
    def e_acc(self):
        return self.acc_power / self.clock_hz

    @property
    def e_ctrl(self):
        return self.ctrl_power / self.clock_hz

    @property
    def bytes_per_cycle(self):
        return self.interconnect_bw / self.clock_hz

    def transfer_cycles(self, nbytes):
        return math.ceil(nbytes / self.bytes_per_cycle) if nbytes > 0 else 0


@dataclass(frozen=True)
class CostEvent:
    """One chargeable occurrence.

    ``cycles`` is the critical-path latency. ``pes`` is the number of PEs
    busy for those cycles; ``pe_cycles`` overrides ``cycles * pes`` when PEs
    are busy for different lengths. ``zero_fraction`` is the share of
    activated cells holding '0' (drives leakage).
    """

    kind: str
    cycles: int = 0
    pes: int = 1
    pe_cycles: int | None = None
    zero_fraction: float | None = None
    nbytes: int = 0
    valid_rows: int = 0
    total_rows: int = 0
    counter: str | None = None
    count: int = 0


@dataclass
class CostLedger:
    """Per-category cycle and PE-cycle tallies; energy is derived from them.

    Keeping integer tallies (and zero-cell weights) instead of running
    energy sums makes merging exact and independent of event order.
    """

    energy_config: EnergyConfig = field(default_factory=EnergyConfig)
    cycles: dict = field(default_factory=lambda: dict.fromkeys(CYCLE_CATEGORIES, 0))
    pe_cycles: dict = field(default_factory=lambda: dict.fromkeys(CYCLE_CATEGORIES, 0))
    zero_cells: dict = field(default_factory=lambda: dict.fromkeys(sorted(_ARRAY_KINDS), 0.0))
    bytes_moved: int = 0
    valid_rows: int = 0
    total_rows: int = 0
    counters: dict = field(default_factory=dict)

    def charge(self, event: CostEvent):
        if event.kind not in self.cycles:
            raise ValueError(f"unknown cost category '{event.kind}'")
        pe_cycles = event.cycles * event.pes if event.pe_cycles is None else event.pe_cycles
        if min(event.cycles, pe_cycles, event.nbytes, event.valid_rows, event.total_rows, event.count) < 0:
            raise ValueError("cost magnitudes must be non-negative")
        self.cycles[event.kind] += int(event.cycles)
        self.pe_cycles[event.kind] += int(pe_cycles)
        if event.kind in _ARRAY_KINDS and pe_cycles:
            zf = self.energy_config.valid_zero_fraction if event.zero_fraction is None else event.zero_fraction
            self.zero_cells[event.kind] += pe_cycles * zf
        self.bytes_moved += int(event.nbytes)
        self.valid_rows += int(event.valid_rows)
        self.total_rows += int(event.total_rows)
        if event.counter:
            self.counters[event.counter] = self.counters.get(event.counter, 0) + int(event.count)

    def count(self, name, n=1):
        self.counters[name] = self.counters.get(name, 0) + n

    def merge(self, other: "CostLedger") -> "CostLedger":
        """Sum of two ledgers (commutative, associative)."""
        out = CostLedger(self.energy_config)
        for led in (self, other):
            for k, v in led.cycles.items():
                out.cycles[k] += v
            for k, v in led.pe_cycles.items():
                out.pe_cycles[k] += v
            for k, v in led.zero_cells.items():
                out.zero_cells[k] += v
            out.bytes_moved += led.bytes_moved
            out.valid_rows += led.valid_rows
            out.total_rows += led.total_rows
            for k, v in led.counters.items():
                out.counters[k] = out.counters.get(k, 0) + v
        return out

    __add__ = merge

    def __eq__(self, other):
        if not isinstance(other, CostLedger):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    @property
    def energy(self):
        """Energy in joules per category."""
        cfg = self.energy_config
        pc = self.pe_cycles
        array_pc = sum(pc[k] for k in _ARRAY_KINDS)
        return {
            "array": array_pc * cfg.e_array + pc["acc"] * cfg.e_acc,
            "leakage": sum(self.zero_cells[k] for k in sorted(_ARRAY_KINDS)) * cfg.e_leak,
            "io": pc["io"] * cfg.e_buffer,
            "ctrl": self.total_cycles * cfg.e_ctrl,
        }

    @property
    def total_cycles(self):
        return sum(self.cycles.values())

    @property
    def latency_s(self):
        return self.total_cycles / self.energy_config.clock_hz

    @property
    def total_energy(self):
        return sum(self.energy.values())

    def to_dict(self):
        return {
            "cycles": dict(self.cycles),
            "pe_cycles": dict(self.pe_cycles),
            "total_cycles": self.total_cycles,
            "latency_s": self.latency_s,
            "energy_j": self.energy,
            "total_energy_j": self.total_energy,
            "bytes_moved": self.bytes_moved,
            "valid_rows": self.valid_rows,
            "total_rows": self.total_rows,
            "utilization": utilization(self),
            "counters": dict(sorted(self.counters.items())),
        }


def charge(ledger: CostLedger | None, event: CostEvent):
    if ledger is not None:
        ledger.charge(event)


def utilization(ledger: CostLedger):
    """Valid activated rows over all activated rows; None when nothing ran."""
    if ledger.total_rows == 0:
        return None
    return ledger.valid_rows / ledger.total_rows


def breakdown(ledger: CostLedger):
    """Energy shares per category, or None for a zero-energy ledger."""
    total = ledger.total_energy
    if total <= 0:
        return None
    return {k: v / total for k, v in ledger.energy.items()}


@dataclass(frozen=True)
class ComplexityReport:
    N: int
    K: int
    intermediates: int
    splim_mult: int
    baseline_mult: int
    alignment: int
    input_memory: int
    splim_memory: int
    baseline_memory: int

    def to_dict(self):
        return asdict(self)


def predict(N: int, K: int) -> ComplexityReport:
    """Analytic memory/time complexity for N x N inputs with K non-zeros per row."""
    if N < 0 or K < 0:
        raise ValueError("N and K must be non-negative")
    if K == 0:
        return ComplexityReport(N, 0, 0, 0, 0, 0, 0, 0, 0)
    return ComplexityReport(
        N=N,
        K=K,
        intermediates=N * K * K,
        splim_mult=N * K * K,
        baseline_mult=N ** 3,
        alignment=(N * K) ** 2,
        input_memory=2 * N * K,
        splim_memory=N * K * K,
        baseline_memory=N * N,
    )
