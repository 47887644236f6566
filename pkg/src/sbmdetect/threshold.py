"""Stability analysis of the uninformative belief-propagation fixed point.

At a factorized fixed point (every cavity message equals the prior), the
linear response of one message to a perturbation of an incoming message is
governed by a q x q transfer matrix T.  The fixed point destabilizes, and
the planted structure becomes detectable, when c * nu^2 > 1 with nu the
leading eigenvalue modulus of T; the equality condition locates the
detectability threshold in the noise strength epsilon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import eigen
from .model import IndicatorMatrix, ModelError, UnsupportedStructureError, flip

EPS_LO = 1e-6          # lower end of the bisection bracket
BISECT_TOL = 1e-10     # width tolerance in epsilon

METHOD_REGULAR = "closed-form-regular"
METHOD_ORTHOGONAL = "closed-form-orthogonal"
METHOD_BISECTION = "bisection"
UNDETECTABLE = "undetectable-for-all-eps"


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    entries: np.ndarray
    omega_bar: float
    fixed_point: np.ndarray


@dataclass(frozen=True)
class ThresholdResult:
    epsilon_star: float | None
    nu_at_star: float | None
    method: str
    undetectable: bool = False

    @property
    def flag(self) -> str | None:
        return UNDETECTABLE if self.undetectable else None


def factorized_fixed_point(w: IndicatorMatrix, gamma_prior) -> np.ndarray | None:
    """The prior itself, iff gamma W is a positive multiple of the ones vector."""
    g = np.asarray(gamma_prior, dtype=float)
    if g.size != w.q:
        raise ModelError("gamma length does not match q")
    prod = g @ w.as_float()
    k = prod.mean()
    if k > 0 and np.abs(prod - k).max() <= 1e-12:
        return g.copy()
    return None


def transfer_matrix(w: IndicatorMatrix, psi_bar, omega_bar: float) -> TransferMatrix:
    """Linear response of the message update at a fixed point with messages psi_bar.

    T[s', s] = omega_bar / (1 + omega_bar * Psi[s']) * psi[s'] * (W[s', s] - Psi[s])
    with Psi = psi_bar W.  The O(1/N) external-field response is dropped.
    """
    psi = np.asarray(psi_bar, dtype=float)
    if psi.size != w.q:
        raise ModelError("psi_bar length does not match q")
    big = psi @ w.as_float()
    denom = 1.0 + omega_bar * big
    if (denom <= 0).any():
        raise ModelError("1 + omega_bar * (psi W) must stay positive")
    entries = (omega_bar / denom * psi)[:, None] * (w.as_float() - big[None, :])
    return TransferMatrix(entries=entries, omega_bar=omega_bar, fixed_point=psi.copy())


def _entries(t) -> np.ndarray:
    return t.entries if isinstance(t, TransferMatrix) else np.asarray(t, dtype=float)


def leading_eigenvalue(t) -> float:
    """Modulus of the spectrum's largest element (Jacobi or Hessenberg-QR)."""
    return eigen.leading_abs_eigenvalue(_entries(t))


def _leading_checked(entries: np.ndarray) -> float:
    """Leading eigenvalue modulus, insisting the leading eigenvalue is real."""
    spec = eigen.eigenvalues(entries)
    lead = spec[np.argmax(np.abs(spec))]
    if abs(lead.imag) > 1e-9 * (1.0 + abs(lead)):
        raise ModelError(
            f"leading transfer-matrix eigenvalue is complex ({lead!r}); "
            "stability analysis for this structure is not supported"
        )
    return float(abs(lead))


@dataclass(frozen=True)
class SecondEigen:
    lambda2_signed: float
    lambda2_abs: float
    spectrum: np.ndarray


def second_eigenvalue(w: IndicatorMatrix) -> SecondEigen:
    """Second eigenvalue of a regular W on the complement of the ones vector.

    The top eigenvalue of a regular binary symmetric matrix is its row sum a
    with eigenvector 1/sqrt(q); removing one copy of it leaves the spectrum
    orthogonal to 1, which stays well-defined when a is degenerate
    (disconnected module graphs).
    """
    a = w.regular_degree  # raises UnsupportedStructureError if not regular
    spec = eigen.jacobi_eigenvalues(w.as_float())  # ascending
    rest = spec[:-1]  # drop one copy of the top eigenvalue (= a)
    return SecondEigen(
        lambda2_signed=float(rest.max()) if rest.size else 0.0,
        lambda2_abs=float(np.abs(rest).max()) if rest.size else 0.0,
        spectrum=spec,
    )


def threshold_regular(w: IndicatorMatrix, c: float) -> ThresholdResult:
    """Closed-form threshold for regular W with a uniform prior.

    eps* = (|l2| sqrt(c) - a) / (|l2| sqrt(c) - a + q); when |l2| sqrt(c) <= a the
    planted structure is undetectable at every noise level.
    """
    a = w.regular_degree
    l2 = second_eigenvalue(w).lambda2_abs
    x = l2 * math.sqrt(c)
    # tolerance absorbs eigensolver noise at exact-boundary structures
    if x <= a + 1e-9 * max(1.0, a):
        return ThresholdResult(None, None, METHOD_REGULAR, undetectable=True)
    eps = (x - a) / (x - a + w.q)
    wbar = 1.0 / eps - 1.0
    nu = wbar * l2 / (w.q + a * wbar)
    return ThresholdResult(eps, nu, METHOD_REGULAR)


def _distinct_columns(w: IndicatorMatrix) -> list[np.ndarray]:
    cols = []
    for j in range(w.q):
        col = w.entries[:, j]
        if not any(np.array_equal(col, c) for c in cols):
            cols.append(col)
    return cols


def orthogonal_columns(w: IndicatorMatrix) -> bool:
    """True when every pair of columns is either identical or orthogonal."""
    cols = _distinct_columns(w)
    if any((c == 0).all() for c in cols):
        return False
    for i in range(len(cols)):
        for j in range(i + 1, len(cols)):
            if int(cols[i] @ cols[j]) != 0:
                return False
    return True


def threshold_orthogonal(
    w: IndicatorMatrix, gamma_prior, c: float
) -> ThresholdResult:
    """Closed-form threshold eps* = (sqrt(c)-1)/(sqrt(c)+1) for balanced
    two-column orthogonal structures.

    Requires the distinct columns of W to be mutually orthogonal, a prior
    with gamma W proportional to ones, and a balance constant of exactly 1/2
    (two distinct columns); otherwise the bisection route applies.
    """
    psi = factorized_fixed_point(w, gamma_prior)
    if psi is None:
        raise UnsupportedStructureError(
            "no factorized fixed point for this prior; use threshold_bisection"
        )
    if not orthogonal_columns(w):
        raise UnsupportedStructureError(
            "columns are not orthogonal; use threshold_bisection"
        )
    k = float((psi @ w.as_float()).mean())
    if abs(k - 0.5) > 1e-12:
        raise UnsupportedStructureError(
            "balance constant differs from 1/2; use threshold_bisection"
        )
    root = math.sqrt(c)
    eps = (root - 1.0) / (root + 1.0)
    if eps < 0:
        return ThresholdResult(None, None, METHOD_ORTHOGONAL, undetectable=True)
    if eps == 0.0:
        return ThresholdResult(0.0, 1.0, METHOD_ORTHOGONAL)
    wbar = 1.0 / eps - 1.0
    nu = wbar * k / (1.0 + wbar * k)
    return ThresholdResult(eps, nu, METHOD_ORTHOGONAL)


def _nu_of_epsilon(w: IndicatorMatrix, psi: np.ndarray, eps: float, flipped: bool) -> float:
    # In the flipped parametrization the noise coordinate is 1/eps, so the
    # effective omega_bar is eps - 1 (in (-1, 0]); directly it is 1/eps - 1.
    wbar = (eps - 1.0) if flipped else (1.0 / eps - 1.0)
    t = transfer_matrix(w, psi, wbar)
    return _leading_checked(t.entries)


def threshold_bisection(
    w: IndicatorMatrix, gamma_prior, c: float, flipped: bool = False
) -> ThresholdResult:
    """Numeric threshold: root of c * nu(eps)^2 - 1 on [1e-6, 1] by bisection.

    nu(eps) is evaluated through the transfer matrix at the factorized fixed
    point and is monotone decreasing there, so a sign change brackets a
    unique root.  With flipped=True the same graph ensemble is analyzed
    through the complemented indicator matrix and inverse noise coordinate;
    the returned threshold lives in the original epsilon coordinate either way.
    """
    base = flip(w) if flipped else w
    psi = factorized_fixed_point(base, gamma_prior)
    if psi is None:
        raise UnsupportedStructureError(
            "the trivial fixed point is not known for this structure"
        )

    def f(eps: float) -> float:
        nu = _nu_of_epsilon(base, psi, eps, flipped)
        return c * nu * nu - 1.0

    lo, hi = EPS_LO, 1.0
    if f(lo) <= 0.0:
        return ThresholdResult(None, None, METHOD_BISECTION, undetectable=True)
    if f(hi) > 0.0:
        raise ModelError("no sign change on [1e-6, 1]; nu(1) should vanish")
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    eps = 0.5 * (lo + hi)
    return ThresholdResult(eps, _nu_of_epsilon(base, psi, eps, flipped), METHOD_BISECTION)


def bisection_batch_regular(ws: list[IndicatorMatrix], c: float):
    """Vectorized bisection over many regular structures with uniform priors.

    Returns (eps_star, undetectable) arrays aligned with ws.  Equivalent to
    calling threshold_bisection per structure, but the per-step eigensolves
    run through one batched Jacobi pass, which is what makes exhaustive
    enumerations cheap.
    """
    if not ws:
        return np.empty(0), np.empty(0, dtype=bool)
    q = ws[0].q
    if any(m.q != q for m in ws):
        raise ModelError("batch requires a uniform q")
    wf = np.stack([m.as_float() for m in ws])
    psi = np.full(q, 1.0 / q)
    big = psi @ wf  # (B, q)

    def nu(eps_vec, rows):
        wbar = 1.0 / eps_vec - 1.0
        denom = 1.0 + wbar[:, None] * big[rows]
        pref = (wbar[:, None] / denom) * psi[None, :]
        t = pref[:, :, None] * (wf[rows] - big[rows][:, None, :])
        vals = eigen.jacobi_eigenvalues_batch(_symmetrize_similar(t, psi))
        return np.abs(vals).max(axis=1)

    b = len(ws)
    every = np.arange(b)
    lo = np.full(b, EPS_LO)
    hi = np.ones(b)
    f_lo = c * nu(lo, every) ** 2 - 1.0
    undet = f_lo <= 0.0
    live = ~undet
    steps = int(math.ceil(math.log2((1.0 - EPS_LO) / BISECT_TOL)))
    live_rows = np.flatnonzero(live)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        f_mid = np.full(b, -1.0)
        if live_rows.size:
            f_mid[live_rows] = c * nu(mid[live_rows], live_rows) ** 2 - 1.0
        up = live & (f_mid > 0.0)
        lo[up] = mid[up]
        down = live & (f_mid <= 0.0)
        hi[down] = mid[down]
    eps = 0.5 * (lo + hi)
    eps[undet] = np.nan
    return eps, undet


def _symmetrize_similar(t: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Similarity transform making diag(psi)-weighted transfer matrices symmetric.

    T = s * diag(psi) (W - k 11^T) is similar to
    s * diag(sqrt(psi)) (W - k 11^T) diag(sqrt(psi)), which is symmetric, so the
    batched symmetric solver applies.  Requires psi > 0.
    """
    root = np.sqrt(psi)
    return t * (root[None, None, :] / root[None, :, None])


def edge_expansion(w: IndicatorMatrix) -> float:
    """Exact minimum cut ratio of the module graph: min |E(S, V-S)| / (a min(|S|,|V-S|)).

    Self-loops (diagonal entries) count toward a but never cross a cut.
    Enumerates all 2^q - 2 nonempty proper subsets; q <= 20.
    """
    a = w.regular_degree
    q = w.q
    if q > 20:
        raise UnsupportedStructureError("edge_expansion enumerates subsets; q <= 20")
    if a == 0:
        raise UnsupportedStructureError("module graph has no edges")
    pairs = [(i, j) for i in range(q) for j in range(i + 1, q) if w.entries[i, j]]
    n_masks = 1 << q
    masks = np.arange(n_masks, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(q)) & 1).astype(np.int8)
    sizes = bits.sum(axis=1)
    crossing = np.zeros(n_masks, dtype=np.int64)
    for i, j in pairs:
        crossing += bits[:, i] ^ bits[:, j]
    valid = (sizes > 0) & (sizes < q)
    denom = a * np.minimum(sizes, q - sizes)
    ratios = crossing[valid] / denom[valid]
    return float(ratios.min())


@dataclass(frozen=True)
class CheegerReport:
    lower: float
    upper: float
    lambda2_normalized: float
    expansion: float


def cheeger_bounds(w: IndicatorMatrix) -> CheegerReport:
    """Bounds 1 - 2h <= lambda2/a <= 1 - h^2/2 for the a-regular module graph.

    The comparison eigenvalue is the signed second-largest one, normalized
    by a so the bounds are dimensionless.
    """
    h = edge_expansion(w)
    a = w.regular_degree
    se = second_eigenvalue(w)
    return CheegerReport(
        lower=1.0 - 2.0 * h,
        upper=1.0 - 0.5 * h * h,
        lambda2_normalized=se.lambda2_signed / a,
        expansion=h,
    )


def enumerate_regular_indicator_matrices(
    q: int, include_zero: bool = False
) -> list[IndicatorMatrix]:
    """All symmetric binary q x q matrices with constant row sums (a >= 1)."""
    if q > 6:
        raise ValueError("enumeration is exponential; q <= 6")
    idx = [(i, j) for i in range(q) for j in range(i, q)]
    nfree = len(idx)
    out = []
    for mask in range(1 << nfree):
        m = np.zeros((q, q), dtype=np.int8)
        for b, (i, j) in enumerate(idx):
            if (mask >> b) & 1:
                m[i, j] = m[j, i] = 1
        rs = m.sum(axis=1)
        if (rs == rs[0]).all() and (include_zero or rs[0] > 0):
            out.append(IndicatorMatrix(m))
    return out


def analyze_structure(w: IndicatorMatrix, gamma_prior, c: float) -> dict:
    """Full threshold report for one structure, choosing the best route.

    Closed forms are preferred when their preconditions hold: the regular
    formula (uniform prior), then the balanced orthogonal-column formula,
    then generic bisection.  Raises UnsupportedStructureError when no
    factorized fixed point exists.
    """
    g = np.asarray(gamma_prior, dtype=float)
    uniform = np.abs(g - 1.0 / w.q).max() <= 1e-12
    spectrum = eigen.jacobi_eigenvalues(w.as_float())
    report: dict = {
        "q": w.q,
        "c": c,
        "regular": w.is_regular,
        "a": w.regular_degree if w.is_regular else None,
        "spectrum": [float(v) for v in spectrum],
        "lambda2_abs": None,
        "epsilon_star": None,
        "nu_at_star": None,
        "method": None,
        "undetectable": False,
        "edge_expansion": None,
        "cheeger": None,
    }
    if w.is_regular:
        report["lambda2_abs"] = second_eigenvalue(w).lambda2_abs
        if w.regular_degree > 0:
            ch = cheeger_bounds(w)
            report["edge_expansion"] = ch.expansion
            report["cheeger"] = [ch.lower, ch.upper]
    result = None
    if w.is_regular and uniform:
        result = threshold_regular(w, c)
    else:
        try:
            result = threshold_orthogonal(w, g, c)
        except UnsupportedStructureError:
            result = threshold_bisection(w, g, c)  # may raise Unsupported
    report["epsilon_star"] = result.epsilon_star
    report["nu_at_star"] = result.nu_at_star
    report["method"] = result.method
    report["undetectable"] = result.undetectable
    return report
