"""Experiment harness: (c, epsilon, sample) grids of generate-infer-score cells.

Every cell derives its own 64-bit seed from the base seed and its grid
indices (see seeds.cell_seed), so any cell can be regenerated in isolation
and worker scheduling cannot change numeric output.  Results land in a rows
CSV, a per-(c, epsilon) summary CSV, and a gnuplot script that renders the
overlap curves from the summary.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import bp, em, scoring, threshold
from .generator import generate, derive_seed
from .model import load_structure, spec_from_structure
from .seeds import cell_seed

ROW_FIELDS = [
    "structure_id",
    "n",
    "q",
    "c",
    "epsilon",
    "sample_index",
    "seed",
    "overlap",
    "chance",
    "converged",
    "bp_sweeps",
    "em_iters",
    "omega_in_hat",
    "omega_out_hat",
    "wall_ms",
    "error",
]

SUMMARY_FIELDS = ["c", "epsilon", "mean_overlap", "std_overlap", "n_converged"]


@dataclass
class SweepConfig:
    structure: str
    n: int
    c_list: list
    epsilon_grid: list
    samples: int = 10
    seed_base: int = 0
    partition_mode: str = "exact-sizes"
    fix_gamma: bool = False
    fix_omega: bool = False
    init_noise: float = 0.1
    tol: float = bp.DEFAULT_TOL
    max_sweeps: int = bp.DEFAULT_MAX_SWEEPS
    damping: float = 0.0
    em_max_iters: int = 50
    em_param_tol: float = 1e-6

    def __post_init__(self):
        self.c_list = [float(c) for c in self.c_list]
        self.epsilon_grid = [float(e) for e in self.epsilon_grid]
        if any(not (0.0 < e <= 1.0) for e in self.epsilon_grid):
            raise ValueError("epsilon values must lie in (0, 1]")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")

    @classmethod
    def from_json(cls, path: str) -> "SweepConfig":
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def epsilon_grid(start: float, stop: float, count: int) -> list:
    return [float(x) for x in np.linspace(start, stop, count)]


PRESETS = {
    # overlap-vs-noise curve for the fig1c structure at its working size
    "fig3": SweepConfig(
        structure="fig1c",
        n=30000,
        c_list=[6.0],
        epsilon_grid=epsilon_grid(0.05, 0.95, 19),
        samples=10,
        fix_gamma=True,
    ),
    # three-degree comparison on the regular stand-in structure
    "fig2-demo": SweepConfig(
        structure="demo-regular-q3",
        n=30000,
        c_list=[4.0, 5.0, 6.0],
        epsilon_grid=epsilon_grid(0.05, 0.95, 19),
        samples=10,
        fix_gamma=True,
    ),
}


def preset_config(name: str) -> SweepConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return SweepConfig(**asdict(cfg))


@dataclass
class SweepRecord:
    structure_id: str
    n: int
    q: int
    c: float
    epsilon: float
    sample_index: int
    seed: int
    overlap: float | None
    chance: float
    converged: bool | None
    bp_sweeps: int | None
    em_iters: int | None
    omega_in_hat: float | None
    omega_out_hat: float | None
    wall_ms: float
    error: str = ""


def run_cell(config: SweepConfig, ci: int, ei: int, si: int) -> SweepRecord:
    """Generate, infer, and score one grid cell."""
    structure = load_structure(config.structure)
    c = config.c_list[ci]
    eps = config.epsilon_grid[ei]
    seed = cell_seed(config.seed_base, ci, ei, si)
    chance = scoring.chance_baseline(structure.gamma_planted.weights)
    t0 = time.perf_counter()
    base = SweepRecord(
        structure_id=structure.name,
        n=config.n,
        q=structure.w.q,
        c=c,
        epsilon=eps,
        sample_index=si,
        seed=seed,
        overlap=None,
        chance=chance,
        converged=None,
        bp_sweeps=None,
        em_iters=None,
        omega_in_hat=None,
        omega_out_hat=None,
        wall_ms=0.0,
    )
    try:
        spec = spec_from_structure(structure, config.n, c, eps)
        graph, partition = generate(spec, config.partition_mode, seed)
        result = em.em_run(
            graph,
            spec.w,
            em.EmConfig(
                learn_gamma=not config.fix_gamma,
                learn_omega=not config.fix_omega,
                max_iters=config.em_max_iters,
                param_tol=config.em_param_tol,
            ),
            em.BpOptions(
                noise=config.init_noise,
                tol=config.tol,
                max_sweeps=config.max_sweeps,
                damping=config.damping,
                seed=derive_seed(seed, 3),
            ),
            init_affinity=spec.affinity,
            init_gamma=spec.gamma_prior.weights,
        )
        labels = scoring.hard_assign(result.state.marginals)
        base.overlap = scoring.overlap(partition.labels, labels, spec.q)
        base.converged = result.bp_converged
        base.bp_sweeps = sum(r.bp_sweeps for r in result.history)
        base.em_iters = result.iterations
        base.omega_in_hat = result.params.omega_in
        base.omega_out_hat = result.params.omega_out
    except Exception as exc:  # recorded per-row, sweep continues
        base.error = f"{type(exc).__name__}: {exc}"
    base.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return base


def _cell_worker(args):
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    config_dict, ci, ei, si = args
    return run_cell(SweepConfig(**config_dict), ci, ei, si)


def run_sweep(config: SweepConfig, workers: int = 1) -> list[SweepRecord]:
    """All cells in deterministic (c, epsilon, sample) order."""
    cells = [
        (ci, ei, si)
        for ci in range(len(config.c_list))
        for ei in range(len(config.epsilon_grid))
        for si in range(config.samples)
    ]
    if workers <= 1:
        return [run_cell(config, *cell) for cell in cells]
    cfg = asdict(config)
    args = [(cfg, ci, ei, si) for ci, ei, si in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(_cell_worker, args, chunksize=1))
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_csv(records: list[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    for r in records:
        writer.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
    return buf.getvalue()


def summarize(records: list[SweepRecord]) -> list[dict]:
    """Mean/std of overlap per (c, epsilon), failed cells excluded."""
    out = []
    seen = []
    for r in records:
        key = (r.c, r.epsilon)
        if key not in seen:
            seen.append(key)
    for c, eps in seen:
        group = [r for r in records if (r.c, r.epsilon) == (c, eps)]
        ovs = np.array([r.overlap for r in group if r.overlap is not None])
        out.append(
            {
                "c": c,
                "epsilon": eps,
                "mean_overlap": float(ovs.mean()) if ovs.size else None,
                "std_overlap": float(ovs.std(ddof=1)) if ovs.size > 1 else 0.0,
                "n_converged": sum(1 for r in group if r.converged),
            }
        )
    return out


def summary_csv(records: list[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for row in summarize(records):
        writer.writerow([_fmt(row[f]) for f in SUMMARY_FIELDS])
    return buf.getvalue()


def plot_script(config: SweepConfig, summary_path: str) -> str:
    """Gnuplot text rendering mean overlap with std bars per degree."""
    structure = load_structure(config.structure)
    chance = scoring.chance_baseline(structure.gamma_planted.weights)
    lines = [
        "# gnuplot script generated by sbmdetect sweep",
        'set datafile separator ","',
        "set xlabel 'epsilon'",
        "set ylabel 'overlap'",
        "set yrange [0:1.05]",
        "set key top right",
        f"chance = {chance!r}",
        "set arrow from graph 0, first chance to graph 1, first chance nohead dt 3",
    ]
    for c in config.c_list:
        try:
            report = threshold.analyze_structure(
                structure.w, structure.gamma_prior.weights, c
            )
            eps_star = report["epsilon_star"]
        except Exception:
            eps_star = None
        if eps_star is not None:
            lines.append(
                f"set arrow from first {eps_star!r}, graph 0 "
                f"to first {eps_star!r}, graph 1 nohead dt 2"
            )
    plots = [
        f"'{summary_path}' using ($1=={c!r}?$2:1/0):3:4 with yerrorlines title 'c={c:g}'"
        for c in config.c_list
    ]
    lines.append("plot \\")
    lines.append(", \\\n".join("  " + p for p in plots))
    lines.append("")
    return "\n".join(lines)


def write_outputs(
    config: SweepConfig, records: list[SweepRecord], out_base: str
) -> dict:
    paths = {
        "rows": out_base + "_rows.csv",
        "summary": out_base + "_summary.csv",
        "plot": out_base + "_plot.gp",
    }
    with open(paths["rows"], "w") as fh:
        fh.write(rows_csv(records))
    with open(paths["summary"], "w") as fh:
        fh.write(summary_csv(records))
    with open(paths["plot"], "w") as fh:
        fh.write(plot_script(config, paths["summary"]))
    return paths
