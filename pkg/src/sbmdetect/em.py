"""Expectation-maximization around the BP engine.

E-step: run BP to (near) convergence at the current parameters.
M-step: closed-form updates for the cluster fractions and the two-level
connection probabilities, built from edge posteriors and an aggregated
belief vector so the pair sum costs O(Nq + q^2) instead of O(N^2).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bp
from .generator import Graph, PlantedPartition
from .model import AffinityParams, EPSILON_MIN, InferenceParams, IndicatorMatrix, ModelError


class DegeneratePosteriorError(RuntimeError):
    """The posterior puts all (or no) pair mass inside the dense blocks."""


@dataclass(frozen=True)
class EmConfig:
    learn_gamma: bool = True
    learn_omega: bool = True
    max_iters: int = 50
    param_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ModelError("max_iters must be >= 1")
        if self.param_tol <= 0:
            raise ModelError("param_tol must be positive")


@dataclass
class BpOptions:
    init: str = "perturbed-prior"
    noise: float = 0.1
    tol: float = bp.DEFAULT_TOL
    max_sweeps: int = bp.DEFAULT_MAX_SWEEPS
    damping: float = 0.0
    schedule: str = bp.DEFAULT_SCHEDULE
    seed: int = 0


@dataclass(frozen=True)
class MStepEstimates:
    gamma: np.ndarray
    omega_in: float
    omega_out: float
    edge_w_sum: float
    d_in: float


@dataclass
class EmHistoryRow:
    iteration: int
    gamma: tuple
    omega_in: float
    omega_out: float
    bp_sweeps: int
    bp_delta: float
    bp_converged: bool


@dataclass
class EmResult:
    params: InferenceParams
    state: bp.MessageState
    history: list[EmHistoryRow]
    converged: bool
    iterations: int
    bp_converged: bool


def estimate_gamma(marginals: np.ndarray) -> np.ndarray:
    """Cluster fractions: the plain average of vertex beliefs."""
    m = np.asarray(marginals, dtype=float)
    return m.mean(axis=0)


def estimate_w_edge(state: bp.MessageState, spec, graph: Graph, i: int, j: int) -> float:
    """Posterior probability that edge (i, j) lies inside a dense bicluster.

    omega_in x / ((omega_in - omega_out) x + omega_out) with
    x = psi_ij W psi_ji^T on the cavity messages.
    """
    params = spec.inference_params() if hasattr(spec, "inference_params") else spec
    e_fwd = graph.directed_edge_id(i, j)
    e_bwd = graph.directed_edge_id(j, i)
    x = float(state.msg[e_fwd] @ params.w.as_float() @ state.msg[e_bwd])
    return params.omega_in * x / ((params.omega_in - params.omega_out) * x + params.omega_out)


def m_step(graph: Graph, state: bp.MessageState, spec) -> MStepEstimates:
    """Closed-form parameter updates from the current posterior.

    The inside-pair denominator is (1/2) s W s^T with s the summed beliefs;
    this keeps the i = j diagonal terms of the narrow-peak approximation.
    """
    params = spec.inference_params() if hasattr(spec, "inference_params") else spec
    w = params.w.as_float()
    n = graph.n
    npairs = n * (n - 1) / 2.0
    if graph.m:
        fwd = state.msg[0::2]
        bwd = state.msg[1::2]
        x = np.einsum("ek,ek->e", fwd @ w, bwd)
        edge_w = params.omega_in * x / (
            (params.omega_in - params.omega_out) * x + params.omega_out
        )
        edge_w_sum = float(edge_w.sum())
    else:
        edge_w_sum = 0.0
    s = state.marginals.sum(axis=0)
    d_in = 0.5 * float(s @ w @ s)
    if d_in <= 0 or d_in >= npairs:
        raise DegeneratePosteriorError(
            f"inside-pair mass d_in = {d_in:.6g} of {npairs:.6g} total pairs"
        )
    omega_in = edge_w_sum / d_in
    omega_out = (graph.m - edge_w_sum) / (npairs - d_in)
    return MStepEstimates(
        gamma=estimate_gamma(state.marginals),
        omega_in=omega_in,
        omega_out=omega_out,
        edge_w_sum=edge_w_sum,
        d_in=d_in,
    )


def _next_params(params: InferenceParams, est: MStepEstimates, config: EmConfig):
    gamma = est.gamma if config.learn_gamma else params.gamma_prior
    if config.learn_omega:
        omega_in = est.omega_in
        # keep the BP-side noise strength inside the supported range
        omega_out = min(max(est.omega_out, EPSILON_MIN * omega_in), 1.0)
        omega_in = min(omega_in, 1.0)
    else:
        omega_in, omega_out = params.omega_in, params.omega_out
    return InferenceParams(params.w, np.asarray(gamma, float), omega_in, omega_out)


def em_run(
    graph: Graph,
    w: IndicatorMatrix,
    config: EmConfig,
    bp_options: BpOptions,
    init_affinity: AffinityParams | tuple,
    init_gamma,
    partition: PlantedPartition | None = None,
) -> EmResult:
    """Alternate BP and M-steps until the parameters settle.

    Stops when the largest parameter change (gamma in absolute terms, omegas
    relative to omega_in) drops below param_tol.  A degenerate posterior
    aborts with the history preserved on the raised error.
    """
    if isinstance(init_affinity, AffinityParams):
        omega_in, omega_out = init_affinity.omega_in, init_affinity.omega_out
    else:
        omega_in, omega_out = init_affinity
    params = InferenceParams(w, np.asarray(init_gamma, dtype=float), omega_in, omega_out)
    state: bp.MessageState | None = None
    history: list[EmHistoryRow] = []
    converged = False
    last_report = None
    iters = 0
    for it in range(1, config.max_iters + 1):
        iters = it
        state, report = bp.run(
            graph,
            params,
            init=bp_options.init,
            noise=bp_options.noise,
            tol=bp_options.tol,
            max_sweeps=bp_options.max_sweeps,
            damping=bp_options.damping,
            seed=bp_options.seed,
            schedule=bp_options.schedule,
            partition=partition,
            state=state,
        )
        last_report = report
        try:
            est = m_step(graph, state, params)
        except DegeneratePosteriorError as exc:
            exc.history = history  # type: ignore[attr-defined]
            raise
        history.append(
            EmHistoryRow(
                iteration=it,
                gamma=tuple(float(g) for g in est.gamma),
                omega_in=est.omega_in,
                omega_out=est.omega_out,
                bp_sweeps=report.sweeps,
                bp_delta=report.final_delta,
                bp_converged=report.converged,
            )
        )
        new_params = _next_params(params, est, config)
        scale = max(params.omega_in, 1e-300)
        change = max(
            float(np.abs(new_params.gamma_prior - params.gamma_prior).max()),
            abs(new_params.omega_in - params.omega_in) / scale,
            abs(new_params.omega_out - params.omega_out) / scale,
        )
        params = new_params
        if change < config.param_tol:
            converged = True
            break
    assert state is not None and last_report is not None
    return EmResult(
        params=params,
        state=state,
        history=history,
        converged=converged,
        iterations=iters,
        bp_converged=last_report.converged,
    )
