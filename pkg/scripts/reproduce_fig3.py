#!/usr/bin/env python3
"""Overlap-vs-noise curve for the chain structure (preset fig3).

Runs the full production sweep (N = 30000, c = 6, 19 noise levels, 10
samples) and writes rows/summary CSVs plus a gnuplot script.  Expect a few
hours on a single worker; use --threads on a multicore machine.
"""
import argparse
import sys

from sbmdetect.cli import main


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="fig3")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n", type=int, default=None, help="override graph size")
    parser.add_argument("--samples", type=int, default=10)
    args = parser.parse_args()
    argv = [
        "--seed", str(args.seed), "--threads", str(args.threads),
        "--out", args.out, "sweep", "--preset", "fig3",
        "--samples", str(args.samples),
    ]
    if args.n:
        argv += ["--n", str(args.n)]
    sys.exit(main(argv))
