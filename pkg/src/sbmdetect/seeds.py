"""Stable 64-bit seed derivation shared by the generator and the sweep harness.

Cell seeds follow a documented formula so any single experiment cell can be
regenerated externally:

    h = splitmix64(splitmix64(splitmix64(ci + 1) ^ (ei + 1)) ^ (si + 1))
    cell_seed = (base ^ h) mod 2^64

with ci, ei, si the 0-based c-index, epsilon-index, and sample-index.
"""
from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def cell_seed(base: int, c_index: int, eps_index: int, sample_index: int) -> int:
    h = splitmix64(c_index + 1)
    h = splitmix64(h ^ (eps_index + 1))
    h = splitmix64(h ^ (sample_index + 1))
    return (base ^ h) & MASK64
