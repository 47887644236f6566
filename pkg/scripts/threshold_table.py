#!/usr/bin/env python3
"""Detectability-threshold table for the built-in structures."""
import argparse
import json

from sbmdetect.model import load_structure
from sbmdetect.threshold import analyze_structure

STRUCTURES = ["community:2", "community:3", "community:4", "fig1c", "demo-regular-q3"]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--degrees", default="4,5,6,9,16")
    args = parser.parse_args()
    degrees = [float(x) for x in args.degrees.split(",")]
    print(f"{'structure':18s} {'c':>5s} {'method':26s} {'epsilon*':>12s}")
    for name in STRUCTURES:
        s = load_structure(name)
        for c in degrees:
            rep = analyze_structure(s.w, s.gamma_prior.weights, c)
            eps = "undetectable" if rep["undetectable"] else f"{rep['epsilon_star']:.6f}"
            print(f"{name:18s} {c:5g} {rep['method']:26s} {eps:>12s}")
