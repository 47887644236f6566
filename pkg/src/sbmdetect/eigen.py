"""Dense eigenvalue routines for small matrices (q <= 64).

Symmetric matrices go through cyclic Jacobi rotations; general real matrices
are reduced to Hessenberg form and iterated with a shifted QR in complex
arithmetic.  A batched Jacobi variant handles large enumerations of small
matrices in one vectorized pass.
"""
from __future__ import annotations

import cmath
import math

import numpy as np


def is_symmetric(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a, dtype=float)
    scale = np.abs(a).max() if a.size else 0.0
    return bool(np.abs(a - a.T).max() <= rtol * max(1.0, scale))


def jacobi_eigenvalues(a, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi.

    Runs on plain Python floats; for a handful of rows this beats array
    overhead by a wide margin.
    """
    m = np.asarray(a, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 1:
        return m.reshape(1).copy()
    rows = [list(map(float, r)) for r in m]
    scale = max(abs(x) for r in rows for x in r)
    if scale == 0.0:
        return np.zeros(n)
    stop = (1e-15 * scale) ** 2 * n * n
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            rp = rows[p]
            for q in range(p + 1, n):
                off += rp[q] * rp[q]
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = rows[p][q]
                if apq == 0.0:
                    continue
                app = rows[p][p]
                aqq = rows[q][q]
                theta = 0.5 * (aqq - app) / apq
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    if i == p or i == q:
                        continue
                    aip = rows[i][p]
                    aiq = rows[i][q]
                    rows[i][p] = rows[p][i] = c * aip - s * aiq
                    rows[i][q] = rows[q][i] = s * aip + c * aiq
                rows[p][p] = app - t * apq
                rows[q][q] = aqq + t * apq
                rows[p][q] = rows[q][p] = 0.0
    return np.sort([rows[i][i] for i in range(n)])


def jacobi_eigenvalues_batch(mats: np.ndarray, sweeps: int = 14) -> np.ndarray:
    """Eigenvalues (ascending) for a (B, n, n) stack of symmetric matrices.

    Applies the same cyclic pivot schedule to every matrix; rotation angles
    are computed elementwise, so the whole batch advances in numpy ops.
    """
    a = np.array(mats, dtype=float)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("expected a (B, n, n) stack")
    b, n, _ = a.shape
    if n == 1:
        return a.reshape(b, 1).copy()
    scale = np.abs(a).max(axis=(1, 2))
    tiny = 1e-15 * np.maximum(scale, 1e-300)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q].copy()  # views would alias the writes below
                act = np.abs(apq) > tiny
                if not act.any():
                    continue
                off = max(off, float(np.abs(apq[act]).max()))
                app = a[:, p, p].copy()
                aqq = a[:, q, q].copy()
                theta = np.zeros(b)
                np.divide(0.5 * (aqq - app), apq, out=theta, where=act)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t[theta == 0.0] = 1.0  # theta = 0 means a 45-degree rotation
                t[~act] = 0.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                new_p = c[:, None] * col_p - s[:, None] * col_q
                new_q = s[:, None] * col_p + c[:, None] * col_q
                a[:, :, p] = new_p
                a[:, :, q] = new_q
                a[:, p, :] = new_p
                a[:, q, :] = new_q
                a[:, p, p] = app - t * apq
                a[:, q, q] = aqq + t * apq
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
        if off == 0.0:
            break
    diag = a[:, np.arange(n), np.arange(n)]
    return np.sort(diag, axis=1)


def _hessenberg(a: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form."""
    h = np.array(a, dtype=float)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        norm = math.sqrt(float(x @ x))
        if norm == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(norm, x[0] if x[0] != 0 else 1.0)
        vnorm2 = float(v @ v)
        if vnorm2 == 0.0:
            continue
        v = v / math.sqrt(vnorm2)
        # H := P H P with P = I - 2 v v^T on the trailing block
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
    return h


def hessenberg_qr_eigenvalues(a, max_iter_per_eig: int = 60) -> np.ndarray:
    """Eigenvalues of a general real matrix: Hessenberg + shifted complex QR."""
    m = np.asarray(a, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 1:
        return m.astype(complex).reshape(1).copy()
    h = _hessenberg(m).astype(complex)
    eigs = np.empty(n, dtype=complex)
    found = 0
    hi = n - 1
    iters = 0
    budget = max_iter_per_eig * n
    while hi >= 0:
        if hi == 0:
            eigs[found] = h[0, 0]
            found += 1
            break
        # deflate converged subdiagonal entries from the bottom
        tol = 1e-15 * (abs(h[hi, hi]) + abs(h[hi - 1, hi - 1]) + 1e-300)
        if abs(h[hi, hi - 1]) <= tol:
            eigs[found] = h[hi, hi]
            found += 1
            hi -= 1
            continue
        iters += 1
        if iters > budget:
            raise RuntimeError("QR iteration failed to converge")
        # active block start: first negligible subdiagonal above hi
        lo = hi
        while lo > 0:
            t = 1e-15 * (abs(h[lo, lo]) + abs(h[lo - 1, lo - 1]) + 1e-300)
            if abs(h[lo, lo - 1]) <= t:
                break
            lo -= 1
        # Wilkinson shift from the trailing 2x2 of the active block
        a11 = h[hi - 1, hi - 1]
        a12 = h[hi - 1, hi]
        a21 = h[hi, hi - 1]
        a22 = h[hi, hi]
        tr = a11 + a22
        disc = cmath.sqrt((a11 - a22) ** 2 + 4.0 * a12 * a21)
        r1 = 0.5 * (tr + disc)
        r2 = 0.5 * (tr - disc)
        mu = r1 if abs(r1 - a22) <= abs(r2 - a22) else r2
        if iters % 17 == 0:
            # exceptional shift to break rare stagnation cycles
            mu = a22 + 1.1 * abs(h[hi, hi - 1])
        # one shifted QR step on the active block via Givens rotations
        blk = slice(lo, hi + 1)
        size = hi - lo + 1
        hb = h[blk, blk]
        for i in range(size):
            hb[i, i] -= mu
        gs = []
        for i in range(size - 1):
            x, y = hb[i, i], hb[i + 1, i]
            r = math.hypot(abs(x), abs(y))
            if r == 0.0:
                c_, s_ = 1.0 + 0j, 0.0 + 0j
            else:
                c_ = x / r
                s_ = y / r
            gs.append((c_, s_))
            row_i = hb[i, i:].copy()
            row_j = hb[i + 1, i:].copy()
            hb[i, i:] = np.conj(c_) * row_i + np.conj(s_) * row_j
            hb[i + 1, i:] = -s_ * row_i + c_ * row_j
        for i, (c_, s_) in enumerate(gs):
            col_i = hb[: min(i + 2, size), i].copy()
            col_j = hb[: min(i + 2, size), i + 1].copy()
            hb[: min(i + 2, size), i] = col_i * c_ + col_j * s_
            hb[: min(i + 2, size), i + 1] = -col_i * np.conj(s_) + col_j * np.conj(c_)
        for i in range(size):
            hb[i, i] += mu
        h[blk, blk] = hb
    return eigs


def eigenvalues(a) -> np.ndarray:
    """All eigenvalues (complex dtype), dispatching on symmetry."""
    m = np.asarray(a, dtype=float)
    if is_symmetric(m):
        return jacobi_eigenvalues(m).astype(complex)
    return hessenberg_qr_eigenvalues(m)


def leading_abs_eigenvalue(a) -> float:
    """Modulus of the spectrum's largest element."""
    return float(np.abs(eigenvalues(a)).max())
