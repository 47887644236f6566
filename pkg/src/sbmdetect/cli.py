"""Command-line harness: generate, infer, threshold, sweep.

Exit codes: 0 ok (including non-converged inference), 2 bad input,
3 unsupported structure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bp, em, scoring, sweep as sweep_mod, threshold
from .generator import generate, derive_seed, graph_to_dict, load_graph_file, write_graph_file
from .model import (
    EPSILON_MIN,
    ModelError,
    UnsupportedStructureError,
    load_structure,
    spec_from_structure,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_UNSUPPORTED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbmdetect",
        description=(
            "Block-structured random graphs: generation, belief-propagation "
            "inference with EM, and detectability analysis."
        ),
    )
    parser.add_argument("--seed", type=int, default=0, help="base seed")
    parser.add_argument("--threads", type=int, default=1, help="worker count for sweeps")
    parser.add_argument("--out", type=str, default=None, help="output path or basename")
    parser.add_argument(
        "--format", choices=("json", "csv"), default="json", help="report encoding"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a graph and write it to a JSON file")
    g.add_argument("--structure", required=True, help="preset name or structure file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--c", type=float, required=True)
    g.add_argument("--eps", type=float, required=True)
    g.add_argument(
        "--partition", choices=("exact-sizes", "multinomial"), default="exact-sizes"
    )

    i = sub.add_parser("infer", help="run EM+BP on a graph file and score the result")
    i.add_argument("--graph", required=True, help="graph JSON or plain edge list")
    i.add_argument("--structure", default=None, help="override or supply the structure")
    i.add_argument("--c", type=float, default=None, help="initial average degree")
    i.add_argument("--eps", type=float, default=None, help="initial noise strength")
    i.add_argument("--fix-gamma", action="store_true", help="keep the prior fixed")
    i.add_argument("--fix-omega", action="store_true", help="keep the omegas fixed")
    i.add_argument(
        "--learn-from",
        choices=("truth", "random"),
        default="truth",
        help="parameter initialization: embedded truth or a random draw",
    )
    i.add_argument("--tol", type=float, default=bp.DEFAULT_TOL)
    i.add_argument("--max-sweeps", type=int, default=bp.DEFAULT_MAX_SWEEPS)
    i.add_argument("--damping", type=float, default=0.0)
    i.add_argument("--max-iters", type=int, default=50)
    i.add_argument("--noise", type=float, default=0.1, help="message init noise")

    t = sub.add_parser("threshold", help="detectability analysis of a structure")
    t.add_argument("--structure", required=True)
    t.add_argument("--c", type=float, required=True)

    s = sub.add_parser("sweep", help="run a (c, epsilon, sample) grid experiment")
    s.add_argument("--preset", default=None, help="named preset (fig3, fig2-demo)")
    s.add_argument("--config", default=None, help="SweepConfig JSON file")
    s.add_argument("--structure", default=None)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--c-list", type=str, default=None, help="comma-separated degrees")
    s.add_argument("--eps-start", type=float, default=0.05)
    s.add_argument("--eps-stop", type=float, default=0.95)
    s.add_argument("--eps-count", type=int, default=19)
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--fix-gamma", action="store_true")
    s.add_argument("--fix-omega", action="store_true")
    return parser


def _cmd_generate(args) -> int:
    structure = load_structure(args.structure)
    spec = spec_from_structure(structure, args.n, args.c, args.eps)
    graph, partition = generate(spec, args.partition, args.seed)
    payload = graph_to_dict(graph, spec, partition, args.seed, structure.name)
    out = args.out or (
        f"{structure.name.replace(':', '')}_n{args.n}_c{args.c:g}"
        f"_eps{args.eps:g}_seed{args.seed}.json"
    )
    write_graph_file(out, payload)
    print(
        f"wrote {out}: n={graph.n} m={graph.m} mean_degree={graph.mean_degree():.4f}"
    )
    return EXIT_OK


def _infer_initial_params(args, loaded, structure):
    if args.learn_from == "random":
        rng = np.random.default_rng(args.seed)
        eps = float(rng.uniform(0.1, 0.9))
        c = args.c if args.c is not None else loaded.graph.mean_degree()
    else:
        if args.c is not None and args.eps is not None:
            c, eps = args.c, args.eps
        elif loaded.spec is not None:
            c, eps = loaded.spec.c, loaded.spec.affinity.epsilon
        else:
            raise ModelError(
                "no embedded parameters; pass --c and --eps (or --learn-from random)"
            )
    eps = max(eps, EPSILON_MIN)
    spec = spec_from_structure(structure, loaded.graph.n, c, eps)
    return spec


def _cmd_infer(args) -> int:
    loaded = load_graph_file(args.graph)
    if args.structure is not None:
        structure = load_structure(args.structure)
    elif loaded.structure is not None:
        structure = loaded.structure
    else:
        raise ModelError("edge-list input needs --structure")
    spec = _infer_initial_params(args, loaded, structure)
    result = em.em_run(
        loaded.graph,
        spec.w,
        em.EmConfig(
            learn_gamma=not args.fix_gamma,
            learn_omega=not args.fix_omega,
            max_iters=args.max_iters,
        ),
        em.BpOptions(
            noise=args.noise,
            tol=args.tol,
            max_sweeps=args.max_sweeps,
            damping=args.damping,
            seed=derive_seed(args.seed, 3),
        ),
        init_affinity=spec.affinity,
        init_gamma=spec.gamma_prior.weights,
    )
    labels = scoring.hard_assign(result.state.marginals)
    payload = bp.marginals_dump(
        result.state,
        bp.BpReport(result.bp_converged, sum(r.bp_sweeps for r in result.history),
                    result.history[-1].bp_delta),
    )
    payload["report"]["em_iters"] = result.iterations
    payload["report"]["em_converged"] = result.converged
    payload["report"]["omega_in_hat"] = result.params.omega_in
    payload["report"]["omega_out_hat"] = result.params.omega_out
    payload["em_history"] = [
        {
            "iter": row.iteration,
            "gamma_hat": list(row.gamma),
            "omega_in_hat": row.omega_in,
            "omega_out_hat": row.omega_out,
            "bp_sweeps": row.bp_sweeps,
            "delta": row.bp_delta,
        }
        for row in result.history
    ]
    summary = (
        f"converged={result.bp_converged} em_iters={result.iterations} "
        f"omega_in_hat={result.params.omega_in:.6g} "
        f"omega_out_hat={result.params.omega_out:.6g}"
    )
    if loaded.partition is not None:
        ov = scoring.overlap(loaded.partition.labels, labels, structure.w.q)
        payload["overlap"] = ov
        summary += f" overlap={ov:.4f}"
    out = args.out or (args.graph + ".marginals.json")
    if args.format == "csv":
        with open(out, "w") as fh:
            fh.write("vertex,assignment\n")
            for vtx, lab in enumerate(payload["assignments"]):
                fh.write(f"{vtx},{lab}\n")
    else:
        with open(out, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
    print(summary)
    return EXIT_OK


def _cmd_threshold(args) -> int:
    structure = load_structure(args.structure)
    report = threshold.analyze_structure(
        structure.w, structure.gamma_prior.weights, args.c
    )
    if report["undetectable"]:
        report["flag"] = threshold.UNDETECTABLE
    if args.format == "csv":
        keys = sorted(report)
        flat = {
            k: (";".join(repr(x) for x in v) if isinstance(v, list) else v)
            for k, v in report.items()
        }
        text = ",".join(keys) + "\n" + ",".join(str(flat[k]) for k in keys) + "\n"
    else:
        text = json.dumps(report, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _sweep_config(args) -> sweep_mod.SweepConfig:
    if args.preset:
        cfg = sweep_mod.preset_config(args.preset)
        if args.structure:
            cfg.structure = args.structure
        if args.n:
            cfg.n = args.n
        if args.samples != 10:
            cfg.samples = args.samples
        cfg.seed_base = args.seed
        return cfg
    if args.config:
        cfg = sweep_mod.SweepConfig.from_json(args.config)
        return cfg
    if not args.structure or not args.n or not args.c_list:
        raise ModelError("sweep needs --preset, --config, or --structure/--n/--c-list")
    return sweep_mod.SweepConfig(
        structure=args.structure,
        n=args.n,
        c_list=[float(x) for x in args.c_list.split(",")],
        epsilon_grid=sweep_mod.epsilon_grid(
            args.eps_start, args.eps_stop, args.eps_count
        ),
        samples=args.samples,
        seed_base=args.seed,
        fix_gamma=args.fix_gamma,
        fix_omega=args.fix_omega,
    )


def _cmd_sweep(args) -> int:
    config = _sweep_config(args)
    records = sweep_mod.run_sweep(config, workers=max(1, args.threads))
    out_base = args.out or "sweep"
    paths = sweep_mod.write_outputs(config, records, out_base)
    failed = sum(1 for r in records if r.error)
    print(
        f"wrote {paths['rows']}, {paths['summary']}, {paths['plot']} "
        f"({len(records)} cells, {failed} failed)"
    )
    if failed == len(records):
        print("all cells failed", file=sys.stderr)
        return 1
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "infer":
            return _cmd_infer(args)
        if args.command == "threshold":
            return _cmd_threshold(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        raise ModelError(f"unknown command {args.command!r}")
    except UnsupportedStructureError as exc:
        print(f"unsupported structure: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ModelError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
