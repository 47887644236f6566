#!/usr/bin/env python3
"""Three-degree comparison on the regular stand-in structure (preset fig2-demo).

The structure demo-regular-q3 realizes the boundary case |lambda2| sqrt(c) = a
at c = 4 (undetectable at every noise level) with thresholds near 0.0729 and
0.1303 at c = 5 and 6.  Writes rows/summary CSVs plus a gnuplot script.
"""
import argparse
import sys

from sbmdetect.cli import main


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="fig2_demo")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n", type=int, default=None, help="override graph size")
    parser.add_argument("--samples", type=int, default=10)
    args = parser.parse_args()
    argv = [
        "--seed", str(args.seed), "--threads", str(args.threads),
        "--out", args.out, "sweep", "--preset", "fig2-demo",
        "--samples", str(args.samples),
    ]
    if args.n:
        argv += ["--n", str(args.n)]
    sys.exit(main(argv))
