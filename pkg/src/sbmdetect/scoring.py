"""Scoring inferred partitions against planted truth.

Cluster labels are exchangeable, so the overlap (fraction of correctly
classified vertices) is maximized over label permutations via a
maximum-weight assignment on the confusion matrix.
"""
from __future__ import annotations

import numpy as np

from .model import ModelError


def hard_assign(marginals) -> np.ndarray:
    """Argmax label per vertex; ties break toward the smallest index."""
    m = np.asarray(marginals, dtype=float)
    return m.argmax(axis=1)


def confusion_matrix(planted, inferred, q: int) -> np.ndarray:
    """Counts[planted, inferred]; total equals the number of vertices."""
    p = np.asarray(planted, dtype=np.int64)
    f = np.asarray(inferred, dtype=np.int64)
    if p.shape != f.shape:
        raise ModelError("label arrays differ in length")
    if p.size and (p.min() < 0 or p.max() >= q or f.min() < 0 or f.max() >= q):
        raise ModelError("label out of range")
    return np.bincount(p * q + f, minlength=q * q).reshape(q, q)


def max_weight_assignment(weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Column-to-row assignment maximizing the total weight.

    Shortest-augmenting-path algorithm with potentials on the negated
    matrix; exact, O(q^3).  Returns (row_of_column, total_weight).
    """
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ModelError("assignment needs a square matrix")
    cost = (w.max() - w) if n else w
    inf = float("inf")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.full(n + 1, n, dtype=np.int64)  # row assigned to column, n = none
    for r in range(n):
        row_of[n] = r
        j_cur = n
        min_to = np.full(n + 1, inf)
        prev = np.full(n + 1, -1, dtype=np.int64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j_cur] = True
            r_cur = row_of[j_cur]
            delta = inf
            j_next = -1
            for j in range(n):
                if used[j]:
                    continue
                cur = cost[r_cur, j] - u[r_cur] - v[j]
                if cur < min_to[j]:
                    min_to[j] = cur
                    prev[j] = j_cur
                if min_to[j] < delta:
                    delta = min_to[j]
                    j_next = j
            for j in range(n + 1):
                if used[j]:
                    u[row_of[j]] += delta
                    v[j] -= delta
                else:
                    min_to[j] -= delta
            j_cur = j_next
            if row_of[j_cur] == n:
                break
        while j_cur != n:
            j_prev = prev[j_cur]
            row_of[j_cur] = row_of[j_prev]
            j_cur = j_prev
    perm = row_of[:n]
    total = float(w[perm, np.arange(n)].sum())
    return perm, total


def overlap(planted, inferred, q: int) -> float:
    """Fraction of correctly classified vertices, maximized over relabelings."""
    counts = confusion_matrix(planted, inferred, q)
    if counts.sum() == 0:
        return 0.0
    _, best = max_weight_assignment(counts.astype(float))
    return best / counts.sum()


def chance_baseline(gamma_planted) -> float:
    """Overlap of the all-in-largest-cluster classifier."""
    g = np.asarray(gamma_planted, dtype=float)
    return float(g.max())
