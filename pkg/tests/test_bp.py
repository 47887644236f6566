import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbmdetect import bp, scoring
from sbmdetect.generator import Graph, PlantedPartition, generate
from sbmdetect.model import (
    InferenceParams,
    IndicatorMatrix,
    ModelError,
    load_structure,
    spec_from_structure,
)

from oracles import exact_posterior_marginals, random_tree_edges

W_CHAIN3 = IndicatorMatrix([[1, 0, 1], [0, 1, 0], [1, 0, 1]])
PRIOR_CHAIN = np.array([0.25, 0.5, 0.25])


def path_graph(n):
    return Graph(n, [[i, i + 1] for i in range(n - 1)])


def sparse_params(w, gamma, eps, scale=1e-12):
    """Inference parameters deep in the sparse regime (omega ~ 1e-12)."""
    return InferenceParams(w, np.asarray(gamma, float), scale, eps * scale)


class TestInitMessages:
    def test_zero_noise_prior(self):
        spec = spec_from_structure(load_structure("fig1c"), 60, 4.0, 0.3)
        graph, part = generate(spec, "exact-sizes", 0)
        state = bp.init_messages(graph, spec, "perturbed-prior", 0.0, 1)
        assert np.abs(state.msg - PRIOR_CHAIN[None, :]).max() == 0.0

    def test_planted_zero_noise(self):
        # at nearly-zero noise the planted one-hot messages dominate every
        # neighborhood product, so the derived beliefs recover the truth
        spec = spec_from_structure(load_structure("community:2"), 60, 4.0, 0.001)
        graph, part = generate(spec, "exact-sizes", 0)
        state = bp.init_messages(graph, spec, "planted", 0.0, 1, partition=part)
        onehot = np.eye(2)[part.labels[graph.directed.src]]
        assert np.array_equal(state.msg, onehot)
        labels = scoring.hard_assign(state.marginals)
        assert scoring.overlap(part.labels, labels, 2) == 1.0

    def test_random_deterministic(self):
        spec = spec_from_structure(load_structure("community:2"), 60, 4.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 0)
        s1 = bp.init_messages(graph, spec, "random", 0.5, 7)
        s2 = bp.init_messages(graph, spec, "random", 0.5, 7)
        assert np.array_equal(s1.msg, s2.msg)
        assert np.array_equal(s1.field, s2.field)

    def test_planted_needs_partition(self):
        spec = spec_from_structure(load_structure("community:2"), 60, 4.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 0)
        with pytest.raises(ModelError):
            bp.init_messages(graph, spec, "planted", 0.0, 1)

    def test_simplex(self):
        spec = spec_from_structure(load_structure("fig1c"), 80, 5.0, 0.4)
        graph, _ = generate(spec, "exact-sizes", 2)
        state = bp.init_messages(graph, spec, "random", 1.0, 3)
        assert np.abs(state.msg.sum(axis=1) - 1.0).max() < 1e-12
        assert (state.msg >= 0).all()


class TestUpdateMessage:
    def test_degree_one_vertex(self):
        # path end: empty cavity product leaves gamma o exp(-h)
        graph = path_graph(2)
        params = sparse_params(W_CHAIN3, PRIOR_CHAIN, 0.3)
        state = bp.init_messages(graph, params, "random", 1.0, 5)
        got = bp.update_message(state, graph, params, 0, 1)
        expected = params.gamma_prior * np.exp(-state.field)
        expected /= expected.sum()
        assert np.abs(got - expected).max() < 1e-14

    def test_regular_factorized_point(self):
        spec = spec_from_structure(load_structure("demo-regular-q3"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        state = bp.init_messages(graph, spec, "perturbed-prior", 0.0, 1)
        for i, j in graph.edges[:20]:
            got = bp.update_message(state, graph, spec, int(i), int(j))
            assert np.abs(got - 1 / 3).max() < 1e-12

    def test_chain_balanced_prior_fixed_point(self):
        # prior W = (1/2, 1/2, 1/2): the balanced prior is a fixed point
        assert np.allclose(PRIOR_CHAIN @ W_CHAIN3.as_float(), 0.5)
        spec = spec_from_structure(load_structure("fig1c"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        state = bp.init_messages(graph, spec, "perturbed-prior", 0.0, 1)
        for i, j in graph.edges[:20]:
            got = bp.update_message(state, graph, spec, int(i), int(j))
            assert np.abs(got - PRIOR_CHAIN).max() < 1e-12

    def test_zero_prior_component_pinned(self):
        # the prior multiplies every update, so a zero component dies after
        # one sweep even if the initialization put mass on it
        params = InferenceParams(
            W_CHAIN3, np.array([0.5, 0.5, 0.0]), 1e-3, 5e-4
        )
        graph = path_graph(4)
        state = bp.init_messages(graph, params, "random", 1.0, 2)
        got = bp.update_message(state, graph, params, 1, 2)
        assert got[2] == 0.0
        bp.sweep(state, graph, params, order_seed=0)
        assert state.msg[:, 2].max() == 0.0
        assert state.marginals[:, 2].max() == 0.0


class TestSweep:
    def test_delta_zero_at_fixed_point(self):
        spec = spec_from_structure(load_structure("fig1c"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        for schedule in ("parallel", "async"):
            state = bp.init_messages(graph, spec, "perturbed-prior", 0.0, 1)
            if schedule == "parallel":
                delta = bp._sweep_parallel(state, graph, spec.inference_params())
            else:
                delta = bp.sweep(state, graph, spec, order_seed=3)
            assert delta < 1e-12

    def test_parallel_damping_scales_exactly(self):
        spec = spec_from_structure(load_structure("fig1c"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        params = spec.inference_params()
        s0 = bp.init_messages(graph, spec, "perturbed-prior", 0.2, 4)
        s1 = s0.copy()
        d0 = bp._sweep_parallel(s0, graph, params, 0.0)
        d1 = bp._sweep_parallel(s1, graph, params, 0.99)
        assert d1 == pytest.approx(0.01 * d0, rel=1e-9)

    def test_async_damping_shrinks(self):
        spec = spec_from_structure(load_structure("fig1c"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        s0 = bp.init_messages(graph, spec, "perturbed-prior", 0.2, 4)
        s1 = s0.copy()
        d0 = bp.sweep(s0, graph, spec, damping=0.0, order_seed=9)
        d1 = bp.sweep(s1, graph, spec, damping=0.99, order_seed=9)
        assert d1 <= 0.05 * d0

    def test_uniform_graph_collapses_to_prior(self):
        # eps = 1 means omega_bar = 0; one sweep lands exactly on the prior
        spec = spec_from_structure(load_structure("fig1c"), 200, 5.0, 1.0)
        graph, _ = generate(spec, "exact-sizes", 1)
        state, report = bp.run(graph, spec, noise=0.5, seed=3, schedule="parallel")
        assert report.converged
        assert report.sweeps <= 3
        assert np.abs(state.marginals - PRIOR_CHAIN[None, :]).max() < 1e-12

    def test_fast_async_matches_careful(self):
        spec = spec_from_structure(load_structure("demo-regular-q3"), 120, 6.0, 0.2)
        graph, _ = generate(spec, "exact-sizes", 1)
        params = spec.inference_params()
        s1 = bp.init_messages(graph, params, "random", 1.0, 4)
        s2 = s1.copy()
        d1 = bp.sweep(s1, graph, params, damping=0.25, order_seed=77)
        d2 = bp._sweep_async_careful(s2, graph, params, 0.25, 77)
        assert np.abs(s1.msg - s2.msg).max() < 1e-12
        assert np.abs(s1.field - s2.field).max() < 1e-12
        assert d1 == pytest.approx(d2, abs=1e-12)

    def test_incremental_field_bookkeeping(self):
        # the running field must equal the field of the stored beliefs
        spec = spec_from_structure(load_structure("fig1c"), 60, 5.0, 0.35)
        graph, _ = generate(spec, "exact-sizes", 6)
        params = spec.inference_params()
        state = bp.init_messages(graph, params, "random", 1.0, 8)
        for t in range(30):
            bp.sweep(state, graph, params, order_seed=t)
        implied = params.field_scale * (state.marginals.sum(axis=0) @ params.w.as_float())
        assert np.abs(state.field - implied).max() < 1e-9

    def test_incremental_field_stays_consistent(self):
        # after converging, the field agrees with a from-scratch recompute
        spec = spec_from_structure(load_structure("fig1c"), 60, 5.0, 0.7)
        graph, _ = generate(spec, "exact-sizes", 6)
        params = spec.inference_params()
        state = bp.init_messages(graph, params, "random", 1.0, 8)
        for t in range(100):
            bp.sweep(state, graph, params, order_seed=t)
        _, fresh_field = bp._marginals_and_field(graph, params, state.msg)
        assert np.abs(state.field - fresh_field).max() < 1e-9


class TestMarginal:
    def test_isolated_vertex(self):
        graph = Graph(3, [[0, 1]])
        params = sparse_params(W_CHAIN3, PRIOR_CHAIN, 0.4)
        state = bp.init_messages(graph, params, "random", 1.0, 5)
        got = bp.marginal(state, graph, params, 2)
        expected = params.gamma_prior * np.exp(-state.field)
        expected /= expected.sum()
        assert np.abs(got - expected).max() < 1e-14

    def test_factorized_point_returns_prior(self):
        spec = spec_from_structure(load_structure("fig1c"), 90, 5.0, 0.3)
        graph, _ = generate(spec, "exact-sizes", 1)
        state = bp.init_messages(graph, spec, "perturbed-prior", 0.0, 1)
        for v in range(0, 90, 13):
            got = bp.marginal(state, graph, spec, v)
            assert np.abs(got - PRIOR_CHAIN).max() < 1e-12

    def test_path3_matches_enumeration(self):
        graph = path_graph(3)
        w = IndicatorMatrix(np.eye(2, dtype=int))
        gamma = np.array([0.6, 0.4])
        params = sparse_params(w, gamma, 0.3)
        state, report = bp.run(
            graph, params, tol=1e-13, max_sweeps=60, schedule="parallel", noise=0.5,
            seed=2,
        )
        assert report.converged
        oracle = exact_posterior_marginals(
            3, [(0, 1), (1, 2)], w.entries, gamma,
            params.omega_in, params.omega_out,
        )
        assert np.abs(state.marginals - oracle).max() < 1e-9


class TestRun:
    def test_tree_exactness_path10(self):
        edges = [(i, i + 1) for i in range(9)]
        graph = Graph(10, edges)
        w = IndicatorMatrix([[1, 0, 1], [0, 1, 0], [1, 0, 1]])
        gamma = np.array([0.25, 0.5, 0.25])
        params = sparse_params(w, gamma, 0.2)
        state, report = bp.run(
            graph, params, tol=1e-13, max_sweeps=80, schedule="parallel",
            noise=0.5, seed=3,
        )
        assert report.converged
        oracle = exact_posterior_marginals(
            10, edges, w.entries, gamma, params.omega_in, params.omega_out
        )
        assert np.abs(state.marginals - oracle).max() < 1e-8

    def test_random_trees_exact(self):
        rng = np.random.default_rng(10)
        for trial in range(15):
            n = int(rng.integers(4, 9))
            q = int(rng.integers(2, 4))
            edges = random_tree_edges(n, rng)
            graph = Graph(n, edges)
            m = rng.integers(0, 2, size=(q, q))
            w = IndicatorMatrix(np.triu(m) + np.triu(m, 1).T)
            weights = rng.random(q) + 0.2
            gamma = weights / weights.sum()
            eps = float(rng.uniform(0.1, 0.9))
            params = sparse_params(w, gamma, eps)
            state, report = bp.run(
                graph, params, tol=1e-13, max_sweeps=100, schedule="parallel",
                noise=0.5, seed=trial,
            )
            assert report.converged
            oracle = exact_posterior_marginals(
                n, edges, w.entries, gamma, params.omega_in, params.omega_out
            )
            assert np.abs(state.marginals - oracle).max() < 1e-8

    def test_detectable_regime_orders(self):
        spec = spec_from_structure(load_structure("fig1c"), 4000, 6.0, 0.1)
        graph, part = generate(spec, "exact-sizes", 5)
        state, report = bp.run(graph, spec, seed=2)
        assert report.converged
        ov = scoring.overlap(part.labels, scoring.hard_assign(state.marginals), 3)
        # the chain pattern makes its two end clusters statistically
        # identical, capping the overlap at 2/3; well above chance is the
        # detectability statement
        assert ov > 0.55

    def test_undetectable_regime_stays_at_chance(self):
        spec = spec_from_structure(load_structure("fig1c"), 3000, 6.0, 0.9)
        graph, part = generate(spec, "exact-sizes", 5)
        state, report = bp.run(graph, spec, seed=2)
        ov = scoring.overlap(part.labels, scoring.hard_assign(state.marginals), 3)
        assert abs(ov - 1 / 3) < 0.05
        assert np.abs(state.marginals - PRIOR_CHAIN[None, :]).max() < 0.05

    def test_non_convergence_reported(self):
        spec = spec_from_structure(load_structure("fig1c"), 500, 6.0, 0.42)
        graph, _ = generate(spec, "exact-sizes", 0)
        state, report = bp.run(graph, spec, seed=1, max_sweeps=3, schedule="parallel")
        assert not report.converged
        assert report.sweeps == 3

    def test_empty_graph(self):
        graph = Graph(5, np.empty((0, 2), dtype=np.int64))
        params = sparse_params(W_CHAIN3, PRIOR_CHAIN, 0.5)
        state, report = bp.run(graph, params, seed=0)
        assert report.converged
        assert np.abs(state.marginals - PRIOR_CHAIN[None, :]).max() < 1e-9

    @given(st.integers(0, 2**30))
    @settings(max_examples=15, deadline=None)
    def test_simplex_preserved(self, seed):
        rng = np.random.default_rng(seed)
        spec = spec_from_structure(
            load_structure("fig1c"), 60, 4.0, float(rng.uniform(0.05, 1.0))
        )
        graph, _ = generate(spec, "exact-sizes", int(rng.integers(100)))
        state = bp.init_messages(graph, spec, "random", 1.0, seed)
        for t in range(5):
            bp.sweep(state, graph, spec, order_seed=t)
            assert np.abs(state.msg.sum(axis=1) - 1.0).max() < 1e-10
            assert state.msg.min() >= 0
            bp._sweep_parallel(state, graph, spec.inference_params())
            assert np.abs(state.msg.sum(axis=1) - 1.0).max() < 1e-10

    def test_marginals_dump_schema(self):
        spec = spec_from_structure(load_structure("community:2"), 40, 3.0, 0.5)
        graph, _ = generate(spec, "exact-sizes", 0)
        state, report = bp.run(graph, spec, seed=1)
        dump = bp.marginals_dump(state, report)
        assert set(dump) == {"marginals", "assignments", "report"}
        assert len(dump["marginals"]) == 40
        assert set(dump["report"]) == {"converged", "sweeps", "final_delta"}
