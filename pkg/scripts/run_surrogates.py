#!/usr/bin/env python3
"""End-to-end surrogate experiment on one dataset.

Builds (or reuses) an assembly mass-flow dataset, trains the masked
inpainting net over the first four axial levels, trains the three one-step
forecasters on the base layer under matched budgets, and evaluates
everything on held-out test windows.
"""

import argparse
import sys
import time
from pathlib import Path

from plenumlab.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="surrogates")
    parser.add_argument("--data", help="existing .pfd; default: synthetic")
    parser.add_argument("--synth-kind", default="drift",
                        choices=("drift", "blobs", "noise"))
    parser.add_argument("--T", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--inpaint-epochs", type=int, default=25)
    parser.add_argument("--channels", type=int, default=32)
    parser.add_argument("--blocks", type=int, default=4)
    args = parser.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    if args.data:
        data = Path(args.data)
    else:
        data = work / "dataset.pfd"
        code = cli_main(["synth", "--kind", args.synth_kind,
                         "--T", str(args.T), "--seed", str(args.seed),
                         "--out", str(data)])
        if code != 0:
            return code

    print("== inpainting")
    t0 = time.time()
    ckpt = work / "inpaint.ptn"
    code = cli_main([
        "train-inpaint", "--data", str(data), "--out", str(ckpt),
        "--seed", str(args.seed),
        "--set", f"ml.epochs={args.inpaint_epochs}",
        "--set", f"ml.inpaint_channels={args.channels}",
        "--set", f"ml.inpaint_blocks={args.blocks}",
    ])
    if code != 0:
        return code
    code = cli_main(["eval", "--checkpoint", str(ckpt), "--data", str(data),
                     "--out", str(work / "inpaint")])
    if code != 0:
        return code
    print(f"   {time.time() - t0:.0f} s")

    for kind in ("lstm", "deeponet", "convlstm"):
        print(f"== forecaster {kind}")
        t0 = time.time()
        ckpt = work / f"forecast_{kind}.ptn"
        code = cli_main([
            "train-forecast", "--data", str(data), "--model", kind,
            "--out", str(ckpt), "--seed", str(args.seed),
            "--set", f"ml.epochs={args.epochs}",
        ])
        if code != 0:
            return code
        code = cli_main(["eval", "--checkpoint", str(ckpt),
                         "--data", str(data),
                         "--out", str(work / f"forecast_{kind}")])
        if code != 0:
            return code
        print(f"   {time.time() - t0:.0f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
