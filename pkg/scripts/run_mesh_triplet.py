#!/usr/bin/env python3
"""Mesh-sensitivity experiment: simulate the fine/medium/coarse triplet and
produce assembly-wise percent-error maps plus the per-layer summaries.

The three grids scale the cell size by 1 : 7/6 : 1.4 (the published
base-size ratios).  Artifacts land in --workdir:

    <fidelity>.pfd (+ .json / .sidecar.json / .residuals.csv)
    <ref>_vs_<cmp>_layer*.csv, *_summary.csv, optional *.pgm heatmaps
"""

import argparse
import sys
import time
from pathlib import Path

from plenumlab.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="mesh_triplet")
    parser.add_argument("--nx", type=int, default=42,
                        help="fine-grid cells per horizontal axis")
    parser.add_argument("--nz", type=int, default=84)
    parser.add_argument("--dt", type=float, default=0.004)
    parser.add_argument("--develop", type=float, default=0.8)
    parser.add_argument("--record", type=float, default=0.4,
                        help="recording window length [s]")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--heatmaps", action="store_true")
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    common = [
        "--seed", str(args.seed),
        "--set", f"domain.nx={args.nx}",
        "--set", f"domain.ny={args.nx}",
        "--set", f"domain.nz={args.nz}",
        "--set", f"solver.dt={args.dt}",
        "--set", f"solver.t_develop={args.develop}",
        "--set", f"solver.t_end={args.develop + args.record}",
    ]
    for fidelity in ("fine", "medium", "coarse"):
        out = work / f"{fidelity}.pfd"
        print(f"== simulate {fidelity} -> {out}")
        t0 = time.time()
        code = cli_main(["simulate", *common, "--fidelity", fidelity,
                         "--out", str(out)])
        if code != 0:
            return code
        print(f"   {time.time() - t0:.0f} s")
    for ref, cmp_ in (("fine", "medium"), ("fine", "coarse"),
                      ("medium", "coarse")):
        out = work / f"{ref}_vs_{cmp_}"
        argv = ["meshstudy", "--reference", str(work / f"{ref}.pfd"),
                "--compare", str(work / f"{cmp_}.pfd"), "--out", str(out)]
        if args.heatmaps:
            argv.append("--heatmaps")
        code = cli_main(argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
