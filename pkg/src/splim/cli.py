"""Command line driver: ``splim run | compare | predict``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cost import predict
from .experiments import (PIPELINES, SWEEPS, ExperimentSpec, compare, default_out_path, dumps_report,
                          load_report_rows, run_experiment)
from .matrix_io import MatrixMarketError


def build_parser():
    p = argparse.ArgumentParser(prog="splim", description="In-memory SpGEMM simulator experiments (A x A^T).")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment and write a report")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="Matrix Market file")
    src.add_argument("--gen", help="generator spec, e.g. uniform:n=1024,k=16,seed=7")
    r.add_argument("--pipeline", choices=PIPELINES + ("both",), default="both")
    r.add_argument("--sweep", choices=tuple(SWEEPS), default="none")
    r.add_argument("--pes", type=int, default=32, help="number of PEs (ignored by the pes sweep)")
    r.add_argument("--arrays-per-pe", type=int, default=1000)
    r.add_argument("--word-bits", type=int, default=32)
    r.add_argument("--mult-cycles", type=int, help="cycles of one in-situ multiply")
    r.add_argument("--seed", type=int, default=0, help="seed for thinning and redistribution")
    r.add_argument("--atol", type=float, default=0.0,
                   help="absolute slack of the oracle check, for inputs whose products cancel to rounding noise")
    r.add_argument("--out", help="report path (default: $SPLIM_OUT_DIR/splim-report.<format>)")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("compare", help="ratio table of two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--pipeline-a", choices=PIPELINES)
    c.add_argument("--pipeline-b", choices=PIPELINES)
    c.add_argument("--out", help="write the table as JSON here instead of stdout")

    q = sub.add_parser("predict", help="analytic complexity for N x N inputs with K non-zeros per row")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--k", type=int, required=True)
    return p


def _cmd_run(args):
    overrides = {}
    if args.mult_cycles is not None:
        overrides["mult_cycles"] = args.mult_cycles
    spec = ExperimentSpec(input=args.input, gen=args.gen, pipeline=args.pipeline, sweep=args.sweep,
                          num_pes=args.pes, arrays_per_pe=args.arrays_per_pe, word_bits=args.word_bits,
                          seed=args.seed, overrides=overrides, atol=args.atol)
    report, errors = run_experiment(spec, workers=args.workers)
    out = Path(args.out) if args.out else default_out_path(args.format)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps_report(report, args.format))
    for row in report["rows"]:
        print(f"{row['matrix_id']} {row['sweep']}={row['point']} {row['pipeline']}: "
              f"{row['total_cycles']} cycles, {row['total_energy_j']:.4g} J, utilization {row['utilization']}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    print(f"report written to {out}")
    return 2 if errors else 0


def _cmd_compare(args):
    table = compare(load_report_rows(args.report_a), load_report_rows(args.report_b),
                    args.pipeline_a, args.pipeline_b)
    text = json.dumps(table, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_predict(args):
    sys.stdout.write(json.dumps(predict(args.n, args.k).to_dict(), indent=1) + "\n")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_predict(args)
    except (OSError, ValueError, MatrixMarketError) as exc:
        parser.exit(1, f"splim: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
