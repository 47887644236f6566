"""Belief propagation for block-structured sparse graphs.

Cavity messages live on directed edges; the update for message i -> j is

    psi_ij  propto  gamma o prod_{k in di \\ j} [1 + omega_bar (psi_ki W)] o exp(-h)

with the external field h = omega_bar * omega_out * sum_l (psi_l W) standing
in for all non-edges.  Two schedules are provided:

* "async": visits directed edges in a fresh random order per sweep, applies
  each update immediately, and maintains marginals and the field
  incrementally.  This is the reference schedule; cost is dominated by
  Python-level per-edge work.
* "parallel": recomputes every message from the previous state in one
  vectorized pass (Jacobi-style); cheap enough for N ~ 3e4 but can lock
  into collective oscillations at strong coupling.
* "auto" (default): parallel first, with an automatic restart under the
  asynchronous schedule when the parallel run ends visibly trapped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .generator import Graph, PlantedPartition
from .model import InferenceParams, ModelError, ModelSpec

INIT_MODES = ("perturbed-prior", "random", "planted")

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 1000
FIELD_REFRESH_EVERY = 50   # async: wash out incremental float drift
OSCILLATION_STREAK = 10    # sweeps of rising delta before damping engages
STAGNATION_WINDOW = 25     # sweeps without progress before damping engages
AUTO_DAMPING = 0.5
AUTO_FALLBACK_SWEEPS = 400  # budget for the asynchronous ordering pass
CYCLE_DELTA = 1e-2          # residual delta that marks a trapped parallel run


@dataclass
class BpReport:
    converged: bool
    sweeps: int
    final_delta: float


class MessageState:
    """Messages (2M, q), marginals (N, q), and the external field (q,)."""

    def __init__(self, msg, marginals, field, omega_bar, prior):
        self.msg = np.asarray(msg, dtype=float)
        self.marginals = np.asarray(marginals, dtype=float)
        self.field = np.asarray(field, dtype=float)
        self.omega_bar = float(omega_bar)
        self.prior = np.asarray(prior, dtype=float)

    def copy(self) -> "MessageState":
        return MessageState(
            self.msg.copy(),
            self.marginals.copy(),
            self.field.copy(),
            self.omega_bar,
            self.prior.copy(),
        )


def _params_of(spec) -> InferenceParams:
    if isinstance(spec, ModelSpec):
        return spec.inference_params()
    if isinstance(spec, InferenceParams):
        return spec
    raise ModelError(f"expected ModelSpec or InferenceParams, got {type(spec)!r}")


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    s = a.sum(axis=-1, keepdims=True)
    if (s <= 0).any():
        raise ModelError("zero normalizer in belief update")
    return a / s


def _log_prior(prior: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(prior)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    out = np.exp(logits - m)
    return _normalize_rows(out)


def _incoming_log_factors(graph: Graph, params: InferenceParams, msg: np.ndarray):
    """Per-edge log[1 + omega_bar (msg W)] and its per-vertex incoming sums."""
    w = params.w.as_float()
    logfac = np.log1p(params.omega_bar * (msg @ w))
    acc = np.zeros((graph.n, params.q))
    d = graph.directed
    if d.in_rows.size:
        acc[d.in_rows] = np.add.reduceat(logfac[d.in_order], d.in_starts, axis=0)
    return logfac, acc


def _marginals_and_field(graph: Graph, params: InferenceParams, msg: np.ndarray):
    """One marginal pass: beliefs from messages, then the field from beliefs.

    The returned field is recomputed from the returned beliefs, so the
    incremental bookkeeping of the asynchronous sweep starts consistent.
    """
    _, acc = _incoming_log_factors(graph, params, msg)
    logg = _log_prior(params.gamma_prior)
    pre = _softmax_rows(logg[None, :] + acc)
    bootstrap = params.field_scale * (pre.sum(axis=0) @ params.w.as_float())
    marg = _softmax_rows(logg[None, :] + acc - bootstrap[None, :])
    field = params.field_scale * (marg.sum(axis=0) @ params.w.as_float())
    return marg, field


def init_messages(
    graph: Graph,
    spec,
    mode: str = "perturbed-prior",
    noise: float = 0.1,
    seed: int = 0,
    partition: PlantedPartition | None = None,
) -> MessageState:
    """Fresh message state; `planted` mixes one-hot truth with the prior."""
    params = _params_of(spec)
    if mode not in INIT_MODES:
        raise ModelError(f"unknown init mode {mode!r}")
    if not 0.0 <= noise <= 1.0:
        raise ModelError("noise must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_dir = 2 * graph.m
    q = params.q
    prior = params.gamma_prior
    if mode == "perturbed-prior":
        msg = prior[None, :] + noise * rng.random((n_dir, q))
    elif mode == "random":
        msg = rng.random((n_dir, q))
    else:
        if partition is None:
            raise ModelError("planted init needs the partition")
        onehot = np.eye(q)[partition.labels]
        msg = (1.0 - noise) * onehot[graph.directed.src] + noise * prior[None, :]
    msg = _normalize_rows(np.asarray(msg, dtype=float))
    marg, field = _marginals_and_field(graph, params, msg)
    return MessageState(msg, marg, field, params.omega_bar, prior)


def update_message(
    state: MessageState, graph: Graph, spec, i: int, j: int
) -> np.ndarray:
    """Fresh cavity message i -> j from the current state (no mutation).

    Linear-domain product over the neighbors of i except j, renormalized
    after every factor to keep exponents tame at O(c) degrees.
    """
    params = _params_of(spec)
    w = params.w.as_float()
    adj = graph.adjacency
    sl = slice(adj.ptr[i], adj.ptr[i + 1])
    v = params.gamma_prior.copy()
    for nb, in_edge in zip(adj.neighbor[sl], adj.in_edge[sl]):
        if nb == j:
            continue
        v = v * (1.0 + params.omega_bar * (state.msg[in_edge] @ w))
        v /= v.sum()
    v = v * np.exp(-state.field)
    total = v.sum()
    if total <= 0:
        raise ModelError("zero normalizer in belief update")
    return v / total


def marginal(state: MessageState, graph: Graph, spec, i: int) -> np.ndarray:
    """Belief of vertex i: full-neighborhood product, no cavity exclusion."""
    params = _params_of(spec)
    w = params.w.as_float()
    adj = graph.adjacency
    sl = slice(adj.ptr[i], adj.ptr[i + 1])
    v = params.gamma_prior.copy()
    for in_edge in adj.in_edge[sl]:
        v = v * (1.0 + params.omega_bar * (state.msg[in_edge] @ w))
        v /= v.sum()
    v = v * np.exp(-state.field)
    total = v.sum()
    if total <= 0:
        raise ModelError("zero normalizer in belief update")
    return v / total


def sweep(
    state: MessageState,
    graph: Graph,
    spec,
    damping: float = 0.0,
    order_seed: int = 0,
) -> float:
    """One asynchronous pass over all directed edges in random order.

    Each visit writes the damped update immediately, refreshes the target
    vertex's belief, and shifts the field by field_scale * (new - old) W.
    Returns the max L-inf message change.

    The inner loop runs on plain Python floats; per-edge numpy calls would
    dominate the runtime at production sizes.  Falls back to the per-factor
    renormalized arithmetic of update_message when raw neighborhood products
    could leave the float range.
    """
    params = _params_of(spec)
    if not 0.0 <= damping < 1.0:
        raise ModelError("damping must lie in [0, 1)")
    if not _linear_path_safe(graph, params):
        return _sweep_async_careful(state, graph, params, damping, order_seed)
    if params.q == 3:
        return _sweep_async_fast3(state, graph, params, damping, order_seed)
    w = params.w.as_float()
    q = params.q
    order = np.random.default_rng(order_seed).permutation(2 * graph.m)

    wbar = params.omega_bar
    scale = params.field_scale
    w_rows = [tuple(float(x) for x in w[r]) for r in range(q)]
    gamma = [float(x) for x in params.gamma_prior]
    msg = [[float(x) for x in row] for row in state.msg]
    beliefs = [[float(x) for x in row] for row in state.marginals]
    field = [float(x) for x in state.field]
    adj = graph.adjacency
    ptr = adj.ptr.tolist()
    in_edge = adj.in_edge.tolist()
    src = graph.directed.src.tolist()
    dst = graph.directed.dst.tolist()
    rev = graph.directed.rev.tolist()
    rng_sigma = range(q)

    def cavity_products(v: int, skip: int) -> list[float]:
        out = [1.0] * q
        for slot in range(ptr[v], ptr[v + 1]):
            f = in_edge[slot]
            if f == skip:
                continue
            m = msg[f]
            for s in rng_sigma:
                acc = 0.0
                for sp in rng_sigma:
                    acc += m[sp] * w_rows[sp][s]
                out[s] *= 1.0 + wbar * acc
        return out

    delta = 0.0
    for eid in order:
        i = src[eid]
        j = dst[eid]
        prods = cavity_products(i, rev[eid])
        vals = [gamma[s] * math.exp(-field[s]) * prods[s] for s in rng_sigma]
        total = sum(vals)
        if total <= 0.0:
            raise ModelError("zero normalizer in belief update")
        old = msg[eid]
        if damping > 0.0:
            vals = [
                (1.0 - damping) * vals[s] / total + damping * old[s]
                for s in rng_sigma
            ]
            total = sum(vals)
        for s in rng_sigma:
            new_s = vals[s] / total
            change = abs(new_s - old[s])
            if change > delta:
                delta = change
            vals[s] = new_s
        msg[eid] = vals
        # refresh the target belief and shift the field by the difference
        prods = cavity_products(j, -1)
        bvals = [gamma[s] * math.exp(-field[s]) * prods[s] for s in rng_sigma]
        btot = sum(bvals)
        old_b = beliefs[j]
        new_b = [x / btot for x in bvals]
        beliefs[j] = new_b
        for s in rng_sigma:
            acc = 0.0
            for sp in rng_sigma:
                acc += (new_b[sp] - old_b[sp]) * w_rows[sp][s]
            field[s] += scale * acc
    state.msg = np.asarray(msg, dtype=float)
    state.marginals = np.asarray(beliefs, dtype=float)
    state.field = np.asarray(field, dtype=float)
    return float(delta)


def _sweep_async_fast3(
    state: MessageState, graph: Graph, params: InferenceParams, damping: float,
    order_seed: int,
) -> float:
    """q = 3 unrolled asynchronous sweep with cached neighborhood products.

    Leave-one-out products come from dividing a per-vertex running product by
    the excluded edge's factor; the running products are rebuilt from scratch
    every sweep, so the multiplicative drift stays below ~1e-12.  Semantics
    match the per-edge reference path to float precision.
    """
    w = params.w.as_float()
    wbar = params.omega_bar
    scale = params.field_scale
    ((w00, w01, w02), (w10, w11, w12), (w20, w21, w22)) = (
        tuple(map(float, row)) for row in w
    )
    g0, g1, g2 = map(float, params.gamma_prior)
    h0, h1, h2 = map(float, state.field)
    d = graph.directed
    fac_arr = 1.0 + wbar * (state.msg @ w)
    prods = np.ones((graph.n, 3))
    if d.in_rows.size:
        prods[d.in_rows] = np.multiply.reduceat(
            fac_arr[d.in_order], d.in_starts, axis=0
        )
    msg = [tuple(row) for row in state.msg.tolist()]
    fac = [tuple(row) for row in fac_arr.tolist()]
    p = [tuple(row) for row in prods.tolist()]
    beliefs = [tuple(row) for row in state.marginals.tolist()]
    src = d.src.tolist()
    dst = d.dst.tolist()
    order = np.random.default_rng(order_seed).permutation(2 * graph.m).tolist()
    exp = math.exp
    keep = damping
    mix = 1.0 - damping
    delta = 0.0
    for eid in order:
        i = src[eid]
        j = dst[eid]
        fr0, fr1, fr2 = fac[eid ^ 1]
        pi0, pi1, pi2 = p[i]
        e0 = g0 * exp(-h0)
        e1 = g1 * exp(-h1)
        e2 = g2 * exp(-h2)
        v0 = e0 * pi0 / fr0
        v1 = e1 * pi1 / fr1
        v2 = e2 * pi2 / fr2
        tot = v0 + v1 + v2
        if tot <= 0.0:
            raise ModelError("zero normalizer in belief update")
        o0, o1, o2 = msg[eid]
        if keep > 0.0:
            v0 = mix * v0 / tot + keep * o0
            v1 = mix * v1 / tot + keep * o1
            v2 = mix * v2 / tot + keep * o2
            tot = v0 + v1 + v2
        v0 /= tot
        v1 /= tot
        v2 /= tot
        c0 = abs(v0 - o0)
        c1 = abs(v1 - o1)
        c2 = abs(v2 - o2)
        if c0 > delta:
            delta = c0
        if c1 > delta:
            delta = c1
        if c2 > delta:
            delta = c2
        msg[eid] = (v0, v1, v2)
        fo0, fo1, fo2 = fac[eid]
        fn0 = 1.0 + wbar * (v0 * w00 + v1 * w10 + v2 * w20)
        fn1 = 1.0 + wbar * (v0 * w01 + v1 * w11 + v2 * w21)
        fn2 = 1.0 + wbar * (v0 * w02 + v1 * w12 + v2 * w22)
        fac[eid] = (fn0, fn1, fn2)
        pj0, pj1, pj2 = p[j]
        pj0 *= fn0 / fo0
        pj1 *= fn1 / fo1
        pj2 *= fn2 / fo2
        p[j] = (pj0, pj1, pj2)
        b0 = g0 * exp(-h0) * pj0
        b1 = g1 * exp(-h1) * pj1
        b2 = g2 * exp(-h2) * pj2
        bt = b0 + b1 + b2
        b0 /= bt
        b1 /= bt
        b2 /= bt
        q0, q1, q2 = beliefs[j]
        beliefs[j] = (b0, b1, b2)
        db0 = b0 - q0
        db1 = b1 - q1
        db2 = b2 - q2
        h0 += scale * (db0 * w00 + db1 * w10 + db2 * w20)
        h1 += scale * (db0 * w01 + db1 * w11 + db2 * w21)
        h2 += scale * (db0 * w02 + db1 * w12 + db2 * w22)
    state.msg = np.asarray(msg, dtype=float)
    state.marginals = np.asarray(beliefs, dtype=float)
    state.field = np.asarray([h0, h1, h2], dtype=float)
    return float(delta)


def _sweep_async_careful(
    state: MessageState, graph: Graph, params: InferenceParams, damping: float,
    order_seed: int,
) -> float:
    """Per-edge sweep through update_message (renormalizes factor by factor)."""
    w = params.w.as_float()
    d = graph.directed
    order = np.random.default_rng(order_seed).permutation(2 * graph.m)
    delta = 0.0
    for eid in order:
        i = int(d.src[eid])
        j = int(d.dst[eid])
        fresh = update_message(state, graph, params, i, j)
        mixed = (1.0 - damping) * fresh + damping * state.msg[eid]
        mixed /= mixed.sum()
        change = np.abs(mixed - state.msg[eid]).max()
        if change > delta:
            delta = float(change)
        state.msg[eid] = mixed
        old_b = state.marginals[j].copy()
        new_b = marginal(state, graph, params, j)
        state.marginals[j] = new_b
        state.field += params.field_scale * ((new_b - old_b) @ w)
    return delta


def _linear_path_safe(graph: Graph, params: InferenceParams) -> bool:
    # products of [1, 1 + omega_bar] factors must stay inside float range
    if params.omega_bar < 0.0:
        return False
    if graph.m == 0:
        return True
    max_deg = graph.degrees().max()
    return max_deg * np.log1p(params.omega_bar) < 600.0


def _scatter_reduce(table: np.ndarray, graph: Graph, ufunc, fill: float) -> np.ndarray:
    """Per-vertex ufunc-reduction of a per-directed-edge table over incoming edges."""
    d = graph.directed
    out = np.full((graph.n, table.shape[1]), fill)
    if d.in_rows.size:
        out[d.in_rows] = ufunc.reduceat(table[d.in_order], d.in_starts, axis=0)
    return out


def _sweep_parallel(
    state: MessageState, graph: Graph, spec, damping: float = 0.0
) -> float:
    """One fully parallel pass: every message recomputed from the old state.

    Beliefs (and so the next sweep's field) also come from the sweep-start
    state: letting the field react to this sweep's own writes tightens the
    message-field feedback loop enough to destabilize it.
    """
    params = _params_of(spec)
    d = graph.directed
    w = params.w.as_float()
    logg = _log_prior(params.gamma_prior)
    if graph.m == 0:
        marg = _softmax_rows(np.tile(logg - state.field, (graph.n, 1)))
        state.marginals = marg
        state.field = params.field_scale * (marg.sum(axis=0) @ w)
        return 0.0
    if _linear_path_safe(graph, params):
        # linear domain: factors are >= 1, so plain products cannot underflow
        base = params.gamma_prior * np.exp(-state.field)
        fac = 1.0 + params.omega_bar * (state.msg @ w)
        prod = _scatter_reduce(fac, graph, np.multiply, 1.0)
        marg = _normalize_rows(base[None, :] * prod)
        new = _normalize_rows(base[None, :] * prod[d.src] / fac[d.rev])
    else:
        logbase = logg - state.field
        logfac = np.log1p(params.omega_bar * (state.msg @ w))
        acc = _scatter_reduce(logfac, graph, np.add, 0.0)
        marg = _softmax_rows(logbase[None, :] + acc)
        new = _softmax_rows(logbase[None, :] + acc[d.src] - logfac[d.rev])
    if damping > 0.0:
        new = _normalize_rows((1.0 - damping) * new + damping * state.msg)
    delta = float(np.abs(new - state.msg).max())
    state.msg = new
    state.marginals = marg
    state.field = params.field_scale * (marg.sum(axis=0) @ w)
    return delta


def refresh_beliefs(state: MessageState, graph: Graph, spec) -> None:
    """Recompute marginals and field from scratch (drift control)."""
    params = _params_of(spec)
    state.marginals, state.field = _marginals_and_field(graph, params, state.msg)


SCHEDULES = ("auto", "parallel", "async")
DEFAULT_SCHEDULE = "auto"


def _run_one_schedule(
    graph, params, schedule, state, tol, max_sweeps, damping, seed
) -> tuple[MessageState, BpReport]:
    rng = np.random.default_rng(seed)
    delta = np.inf
    prev = np.inf
    rising = 0
    history: list[float] = []
    sweeps_done = 0
    eff_damping = damping
    for t in range(1, max_sweeps + 1):
        if schedule == "async":
            delta = sweep(
                state, graph, params, eff_damping, order_seed=int(rng.integers(2**63))
            )
            if t % FIELD_REFRESH_EVERY == 0:
                refresh_beliefs(state, graph, params)
        else:
            delta = _sweep_parallel(state, graph, params, eff_damping)
        sweeps_done = t
        if delta < tol:
            return state, BpReport(True, sweeps_done, delta)
        rising = rising + 1 if delta > prev else 0
        prev = delta
        history.append(delta)
        # Plateau-triggered damping helps only the sequential schedule; under
        # simultaneous updates it freezes healthy ordering transients into
        # symmetric limit cycles, so there it stays off.
        stalled = (
            schedule == "async"
            and len(history) > STAGNATION_WINDOW
            and delta > 0.95 * history[-1 - STAGNATION_WINDOW]
            and delta > 100.0 * tol
        )
        if (rising >= OSCILLATION_STREAK or stalled) and eff_damping < AUTO_DAMPING:
            eff_damping = AUTO_DAMPING
            rising = 0
            history.clear()
    return state, BpReport(False, sweeps_done, float(delta))


def run(
    graph: Graph,
    spec,
    init: str = "perturbed-prior",
    noise: float = 0.1,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    damping: float = 0.0,
    seed: int = 0,
    schedule: str = DEFAULT_SCHEDULE,
    partition: PlantedPartition | None = None,
    state: MessageState | None = None,
) -> tuple[MessageState, BpReport]:
    """Sweep to a fixed point; non-convergence is reported, not raised.

    Damping escalates to 0.5 automatically if the message change grows for
    ten consecutive sweeps; the asynchronous schedule additionally engages
    it when the change stops shrinking (cycles sit at constant delta, which
    the rising-delta test misses).

    schedule="auto" runs the vectorized parallel schedule first.  If that
    ends trapped in a collective oscillation (order-one delta), the run
    restarts from the same initialization with the per-edge asynchronous
    schedule, which does not feel those traps; once the asynchronous pass
    has ordered the state, the parallel schedule finishes the precision
    work.  A parallel run that merely mixes slowly (small residual delta,
    typical near a detectability threshold) is returned as-is, since the
    sequential schedule obeys the same physics there and costs two orders
    of magnitude more per sweep.
    """
    params = _params_of(spec)
    if tol <= 0:
        raise ModelError("tol must be positive")
    if schedule not in SCHEDULES:
        raise ModelError(f"unknown schedule {schedule!r}; have {SCHEDULES}")
    if state is None:
        state = init_messages(graph, params, init, noise, seed, partition)
    else:
        state.omega_bar = params.omega_bar
        state.prior = params.gamma_prior
        refresh_beliefs(state, graph, params)
    if schedule != "auto":
        return _run_one_schedule(
            graph, params, schedule, state, tol, max_sweeps, damping, seed
        )
    snapshot = state.copy()
    state, report = _run_one_schedule(
        graph, params, "parallel", state, tol, max_sweeps, damping, seed
    )
    if report.converged or report.final_delta < CYCLE_DELTA:
        return state, report
    total = report.sweeps
    state, coarse = _run_one_schedule(
        graph, params, "async", snapshot, max(1e-2, 100.0 * tol),
        min(max_sweeps, AUTO_FALLBACK_SWEEPS), damping, seed,
    )
    total += coarse.sweeps
    state, fine = _run_one_schedule(
        graph, params, "parallel", state, tol, max_sweeps, damping, seed
    )
    total += fine.sweeps
    if fine.converged:
        return state, BpReport(True, total, fine.final_delta)
    state, last = _run_one_schedule(
        graph, params, "async", state, tol, max_sweeps, damping, seed
    )
    return state, BpReport(last.converged, total + last.sweeps, last.final_delta)


def marginals_dump(state: MessageState, report: BpReport) -> dict:
    """JSON payload: beliefs, hard assignments, and the run report."""
    return {
        "marginals": state.marginals.tolist(),
        "assignments": state.marginals.argmax(axis=1).tolist(),
        "report": {
            "converged": report.converged,
            "sweeps": report.sweeps,
            "final_delta": report.final_delta,
        },
    }
