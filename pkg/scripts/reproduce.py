#!/usr/bin/env python3
"""Run the reference experiment and print the headline comparison.

    python3 scripts/reproduce.py --out out/reference [--runs 10] [--parallel 4]

Writes the same artifacts as ``rails-sim run`` and then prints cross-run means,
the RAILS/RAES runtime ratio and a step trace for run 0.
"""

import argparse
import json
from pathlib import Path

from rails_sim.cli import main as cli_main
from rails_sim.harness import emit_trace, format_trace, read_records

def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="out/reference")
    ap.add_argument("--runs", type=int, default=None)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    argv = ["run", "--out", args.out, "--parallel", str(args.parallel)]
    if args.runs is not None:
        argv += ["--runs", str(args.runs)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    rc = cli_main(argv)
    if rc:
        raise SystemExit(rc)

    out = Path(args.out)
    summary = json.loads((out / "summary.json").read_text())
    agg = summary
    print(f"{'method':<7} {'mean':>7} {'std':>7} {'wall total [s]':>15}")
    for m, row in agg["methods"].items():
        print(f"{m:<7} {row['mean']:7.4f} {row['std']:7.4f} {row['wall_time_total']:15.2f}")
    ratio = agg.get("rails_raes_runtime_ratio")
    if ratio is not None:
        print(f"RAILS/RAES runtime ratio: {ratio:.3f}")

    with open(out / "records.csv", newline="") as fh:
        records = read_records(fh)
    n_domains = len(records[0].delays)
    print()
    print(format_trace(emit_trace(records, [0, 5, 10, 15], run=0, methods=("nra", "rails", "opt")), n_domains))


if __name__ == "__main__":
    main()
