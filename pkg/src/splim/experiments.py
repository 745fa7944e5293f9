"""A x A^T experiment runner: sweeps, functional gate and report rows."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baseline import oracle_spgemm, run_coo_splim
from .cost import predict
from .formats import ROW_WISE, axis_stats
from .matrix_io import CooMatrix, generate, read_matrix_market, redistribute, thin, transpose
from .pipeline import run_splim
from .sccp import SccpConfig

PIPELINES = ("splim", "coo-splim")
SWEEPS = {
    "none": ("base",),
    "tau": ("1", "1/2", "1/3"),
    "sigma": ("sigma", "sigma/2", "sigma/3"),
    "pes": ("8", "16", "32"),
}
CSV_FIELDS = (
    "matrix_id", "sweep", "point", "pipeline", "n", "nnz", "num_pes", "seed",
    "cycles_mult", "cycles_search", "cycles_acc", "cycles_rowclone", "cycles_io", "cycles_ctrl",
    "total_cycles", "latency_s",
    "energy_array_j", "energy_leakage_j", "energy_io_j", "energy_ctrl_j", "total_energy_j",
    "utilization", "intermediates", "predicted_intermediates", "mult_rounds", "ell_padding", "output_nnz",
)
OUT_DIR_ENV = "SPLIM_OUT_DIR"


class FunctionalMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    input: str | None = None
    gen: str | None = None
    pipeline: str = "both"
    sweep: str = "none"
    num_pes: int = 32
    arrays_per_pe: int = 1000
    word_bits: int = 32
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    atol: float = 0.0

    def __post_init__(self):
        if (self.input is None) == (self.gen is None):
            raise ValueError("exactly one of input and gen must be given")
        if self.pipeline not in PIPELINES + ("both",):
            raise ValueError(f"unknown pipeline '{self.pipeline}'")
        if self.sweep not in SWEEPS:
            raise ValueError(f"unknown sweep '{self.sweep}'")
        if self.num_pes < 1 or self.arrays_per_pe < 1:
            raise ValueError("PE counts must be positive")
        if not self.atol >= 0:
            raise ValueError("atol must be non-negative")

    @property
    def pipelines(self):
        return PIPELINES if self.pipeline == "both" else (self.pipeline,)

    @property
    def matrix_id(self):
        return Path(self.input).stem if self.input else self.gen

    def config(self, num_pes=None) -> SccpConfig:
        return SccpConfig(num_pes=num_pes or self.num_pes, arrays_per_pe=self.arrays_per_pe,
                          word_bits=self.word_bits, **self.overrides)

    def load(self) -> CooMatrix:
        if self.input:
            return read_matrix_market(self.input)
        return generate(self.gen)


def outputs_match(got: CooMatrix, want: CooMatrix, rtol=1e-9, atol=0.0):
    """Same structure, values within ``atol + rtol * |want|`` elementwise."""
    if got.shape != want.shape or got.nnz != want.nnz:
        return False
    if not (np.array_equal(got.rows, want.rows) and np.array_equal(got.cols, want.cols)):
        return False
    return bool(np.all(np.abs(got.vals - want.vals) <= atol + rtol * np.abs(want.vals)))


def sweep_operand(a: CooMatrix, sweep, point, seed) -> tuple[CooMatrix, int | None]:
    """Left operand and PE override for one sweep point."""
    if sweep == "tau":
        keep = {"1": 1.0, "1/2": 0.5, "1/3": 1 / 3}[point]
        return (a if keep == 1 else thin(a, keep, seed)), None
    if sweep == "sigma":
        if point == "sigma":
            return a, None
        div = {"sigma/2": 2, "sigma/3": 3}[point]
        # sigma is measured over the columns of A, the condensing axis of the left operand
        target = axis_stats(a, ROW_WISE).sigma / div
        return transpose(redistribute(transpose(a), seed, target_sigma=target)), None
    if sweep == "pes":
        return a, int(point)
    return a, None


def run_point(spec: ExperimentSpec, a: CooMatrix, point: str):
    """Run every selected pipeline on one sweep point.

    Returns report rows, or raises :class:`FunctionalMismatch` before any
    row exists when an output disagrees with the oracle.
    """
    left, pes = sweep_operand(a, spec.sweep, point, spec.seed)
    right = transpose(left)
    cfg = spec.config(pes)
    want = oracle_spgemm(left, right)
    n = left.n_rows
    k_avg = round(left.nnz / n) if n else 0
    predicted = predict(n, k_avg).intermediates
    runs = []
    for name in spec.pipelines:
        if name == "splim":
            r = run_splim(left, right, cfg)
            out, ledger = r.output, r.ledger
            extra = {"intermediates": r.intermediate_elements,
                     "ell_padding": r.left.ell.padding + r.right.ell.padding}
        else:
            r = run_coo_splim(left, right, cfg)
            out, ledger = r.output, r.ledger
            extra = {"intermediates": r.intermediate_elements, "ell_padding": 0}
        if not outputs_match(out, want, atol=spec.atol):
            raise FunctionalMismatch(f"{spec.matrix_id} [{spec.sweep}={point}] {name}: output differs from oracle")
        runs.append((name, ledger, extra, out.nnz))
    rows = []
    for name, ledger, extra, out_nnz in runs:
        d = ledger.to_dict()
        row = {
            "matrix_id": spec.matrix_id, "sweep": spec.sweep, "point": point, "pipeline": name,
            "n": n, "nnz": left.nnz, "num_pes": cfg.num_pes, "seed": spec.seed,
            "total_cycles": d["total_cycles"], "latency_s": d["latency_s"],
            "total_energy_j": d["total_energy_j"], "utilization": d["utilization"],
            "predicted_intermediates": predicted,
            "mult_rounds": d["counters"].get("mult_rounds", 0), "output_nnz": out_nnz,
        }
        row.update({f"cycles_{k}": v for k, v in d["cycles"].items()})
        row.update({f"energy_{k}_j": v for k, v in d["energy_j"].items()})
        row.update(extra)
        rows.append({k: row[k] for k in CSV_FIELDS})
    return rows


def _run_point_args(args):
    spec, a, point = args
    try:
        return run_point(spec, a, point), None
    except FunctionalMismatch as exc:
        return [], str(exc)


def run_experiment(spec: ExperimentSpec, workers=1):
    """All sweep points of ``spec``; returns ``(report, errors)``.

    Points are independent, so they may run in worker processes; rows are
    always collected in sweep order.
    """
    a = spec.load()
    jobs = [(spec, a, p) for p in SWEEPS[spec.sweep]]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point_args, jobs))
    else:
        results = [_run_point_args(j) for j in jobs]
    rows, errors = [], []
    for r, err in results:
        rows.extend(r)
        if err:
            errors.append(err)
    spec_d = asdict(spec)
    report = {"spec": spec_d, "seed": spec.seed, "rows": rows}
    return report, errors


def dumps_report(report, fmt="json") -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in report["rows"]:
            w.writerow({k: _csv_value(row[k]) for k in CSV_FIELDS})
        return buf.getvalue()
    raise ValueError(f"unknown report format '{fmt}'")


def _csv_value(v):
    if v is None:
        return "NA"
    return repr(v) if isinstance(v, float) else v


def default_out_path(fmt):
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / f"splim-report.{fmt}"


def load_report_rows(path):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)["rows"]
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append({k: _parse_csv_value(v) for k, v in row.items()})
    return rows


def _parse_csv_value(v):
    if v == "NA":
        return None
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def compare(rows_a, rows_b, pipeline_a=None, pipeline_b=None):
    """Per-(matrix, sweep point) ratios of report A against report B.

    speedup = latency_B / latency_A, energy_saving = energy_B / energy_A,
    utilization_ratio = utilization_A / utilization_B.
    """
    ia = _index(rows_a, pipeline_a, "A")
    ib = _index(rows_b, pipeline_b, "B")
    missing_b = sorted(set(ia) - set(ib))
    missing_a = sorted(set(ib) - set(ia))
    if missing_a or missing_b:
        parts = []
        if missing_b:
            parts.append("missing in B: " + ", ".join("/".join(k) for k in missing_b))
        if missing_a:
            parts.append("missing in A: " + ", ".join("/".join(k) for k in missing_a))
        raise ValueError("reports do not share matrix ids; " + "; ".join(parts))
    table = []
    for key in sorted(ia):
        ra, rb = ia[key], ib[key]
        table.append({
            "matrix_id": key[0], "sweep": key[1], "point": key[2],
            "speedup": _ratio(rb["latency_s"], ra["latency_s"]),
            "energy_saving": _ratio(rb["total_energy_j"], ra["total_energy_j"]),
            "utilization_ratio": _ratio(ra["utilization"], rb["utilization"]),
        })
    return table


def _index(rows, pipeline, label):
    out = {}
    for r in rows:
        if pipeline and r["pipeline"] != pipeline:
            continue
        key = (str(r["matrix_id"]), str(r["sweep"]), str(r["point"]))
        if key in out:
            raise ValueError(f"report {label} has several pipelines for {'/'.join(key)}; select one")
        out[key] = r
    return out


def _ratio(num, den):
    if num is None or den is None or den == 0:
        return None
    return num / den

