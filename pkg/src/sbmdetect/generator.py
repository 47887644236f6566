"""Sampling graphs from the restricted block model in expected O(N + M) time.

Edges are drawn block pair by block pair: the edge count of a pair of
clusters is binomial over the pair population, and the edges themselves are
placed by rejection on duplicates.  In the sparse regime this is distribution
identical to the naive per-pair Bernoulli scan but avoids the O(N^2) cost.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .model import (
    ModelError,
    ModelSpec,
    StructureDef,
    structure_from_dict,
    structure_to_dict,
)

RNG_NAME = "numpy-pcg64"

PARTITION_MODES = ("exact-sizes", "multinomial")


@dataclass(frozen=True, eq=False)
class PlantedPartition:
    labels: np.ndarray
    q: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64).copy()
        if lab.ndim != 1:
            raise ModelError("labels must be one-dimensional")
        if lab.size and (lab.min() < 0 or lab.max() >= self.q):
            raise ModelError("labels out of range")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.labels.size

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == r) for r in range(self.q)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.q)


class Graph:
    """Simple undirected graph with cached directed-edge indexing."""

    def __init__(self, n: int, edges):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ModelError("edge endpoint out of range")
            if (e[:, 0] == e[:, 1]).any():
                raise ModelError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            dup = (e[1:] == e[:-1]).all(axis=1)
            if dup.any():
                raise ModelError("duplicate edges are not allowed")
        e.flags.writeable = False
        self.n = int(n)
        self.edges = e
        self._directed = None
        self._adjacency = None

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.m:
            deg += np.bincount(self.edges[:, 0], minlength=self.n)
            deg += np.bincount(self.edges[:, 1], minlength=self.n)
        return deg

    def mean_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    @property
    def directed(self):
        """Directed-edge arrays: ids 2e and 2e+1 are the two orientations of edge e."""
        if self._directed is None:
            m = self.m
            src = np.empty(2 * m, dtype=np.int64)
            dst = np.empty(2 * m, dtype=np.int64)
            src[0::2] = self.edges[:, 0]
            dst[0::2] = self.edges[:, 1]
            src[1::2] = self.edges[:, 1]
            dst[1::2] = self.edges[:, 0]
            rev = np.arange(2 * m, dtype=np.int64) ^ 1
            in_order = np.argsort(dst, kind="stable")
            counts = np.bincount(dst, minlength=self.n) if m else np.zeros(self.n, np.int64)
            in_rows = np.flatnonzero(counts)
            starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
            self._directed = SimpleNamespace(
                src=src,
                dst=dst,
                rev=rev,
                in_order=in_order,
                in_rows=in_rows,
                in_starts=starts[in_rows],
                indegree=counts,
            )
        return self._directed

    @property
    def adjacency(self):
        """Per-vertex CSR view: neighbors plus incoming/outgoing directed ids."""
        if self._adjacency is None:
            d = self.directed
            order = np.argsort(d.src, kind="stable")
            ptr = np.concatenate(
                ([0], np.cumsum(np.bincount(d.src, minlength=self.n)))
            )
            self._adjacency = SimpleNamespace(
                ptr=ptr,
                neighbor=d.dst[order],
                out_edge=order,          # directed id of v -> neighbor
                in_edge=d.rev[order],    # directed id of neighbor -> v
            )
        return self._adjacency

    def neighbors(self, v: int) -> np.ndarray:
        adj = self.adjacency
        return adj.neighbor[adj.ptr[v]:adj.ptr[v + 1]]

    def directed_edge_id(self, i: int, j: int) -> int:
        """Directed id of i -> j; raises if (i, j) is not an edge."""
        adj = self.adjacency
        sl = slice(adj.ptr[i], adj.ptr[i + 1])
        hits = np.flatnonzero(adj.neighbor[sl] == j)
        if hits.size == 0:
            raise ModelError(f"({i}, {j}) is not an edge")
        return int(adj.out_edge[sl][hits[0]])


def sample_partition(spec: ModelSpec, mode: str, seed: int) -> PlantedPartition:
    """Draw planted labels; exact-sizes pins cluster sizes, multinomial draws iid."""
    if mode not in PARTITION_MODES:
        raise ModelError(f"unknown partition mode {mode!r}")
    rng = np.random.default_rng(seed)
    gamma = spec.gamma_planted.weights
    q, n = spec.q, spec.n
    if mode == "multinomial":
        labels = rng.choice(q, size=n, p=gamma)
        return PlantedPartition(labels, q)
    sizes = np.floor(gamma * n).astype(np.int64)
    leftover = n - int(sizes.sum())
    for r in range(leftover):
        sizes[r % q] += 1
    labels = rng.permutation(np.repeat(np.arange(q), sizes))
    return PlantedPartition(labels, q)


def _draw_block_edges(rng, members_r, members_s, same, m, max_draws):
    """m distinct unordered pairs between two vertex pools, rejecting repeats."""
    chosen: set[int] = set()
    pairs = np.empty((m, 2), dtype=np.int64)
    filled = 0
    draws = 0
    pack = max(members_r.max(), members_s.max(), 0) + 1 if m else 1
    while filled < m:
        want = m - filled
        batch = max(want + 16, int(1.2 * want))
        draws += batch
        if draws > 100 * m + 100:
            raise ModelError(
                "edge placement rejected too often; block is too dense for "
                "sparse sampling"
            )
        a = members_r[rng.integers(0, members_r.size, batch)]
        b = members_s[rng.integers(0, members_s.size, batch)]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys = lo * pack + hi
        for idx in range(batch):
            if filled >= m:
                break
            if same and lo[idx] == hi[idx]:
                continue
            k = int(keys[idx])
            if k in chosen:
                continue
            chosen.add(k)
            pairs[filled, 0] = lo[idx]
            pairs[filled, 1] = hi[idx]
            filled += 1
    return pairs


def sample_graph(spec: ModelSpec, partition: PlantedPartition, seed: int) -> Graph:
    """Sample edges given the planted labels via block-pair binomial counts."""
    if partition.n != spec.n or partition.q != spec.q:
        raise ModelError("partition does not match the spec")
    omega = spec.block_probabilities()
    if (omega > 1.0).any():
        raise ModelError("block probability exceeds 1")
    rng = np.random.default_rng(seed)
    members = partition.members()
    blocks = []
    for r in range(spec.q):
        for s in range(r, spec.q):
            nr = members[r].size
            ns = members[s].size
            population = nr * (nr - 1) // 2 if r == s else nr * ns
            if population == 0 or omega[r, s] == 0.0:
                continue
            m_rs = int(rng.binomial(population, omega[r, s]))
            if m_rs == 0:
                continue
            blocks.append(
                _draw_block_edges(
                    rng, members[r], members[s], r == s, m_rs, population
                )
            )
    edges = np.concatenate(blocks) if blocks else np.empty((0, 2), dtype=np.int64)
    return Graph(spec.n, edges)


def derive_seed(seed: int, salt: int) -> int:
    """Stable 64-bit stream split used by the generation pipeline."""
    from .seeds import splitmix64

    return splitmix64((seed & 0xFFFFFFFFFFFFFFFF) ^ salt)


def generate(spec: ModelSpec, mode: str, seed: int) -> tuple[Graph, PlantedPartition]:
    """Partition + graph from one pipeline seed (salts 1 and 2 of splitmix64)."""
    partition = sample_partition(spec, mode, derive_seed(seed, 1))
    graph = sample_graph(spec, partition, derive_seed(seed, 2))
    return graph, partition


# --- graph file I/O ---------------------------------------------------------

def graph_to_dict(
    graph: Graph,
    spec: ModelSpec,
    partition: PlantedPartition | None,
    seed: int,
    structure_name: str = "custom",
) -> dict:
    spec_block = structure_to_dict(
        StructureDef(structure_name, spec.w, spec.gamma_planted, spec.gamma_prior)
    )
    spec_block.update(
        {"n": spec.n, "c": spec.c, "epsilon": spec.affinity.epsilon}
    )
    out = {
        "n": graph.n,
        "seed": seed,
        "rng": RNG_NAME,
        "structure": structure_name,
        "spec": spec_block,
        "edges": graph.edges.tolist(),
    }
    if partition is not None:
        out["planted"] = partition.labels.tolist()
    return out


def write_graph_file(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


@dataclass
class LoadedGraph:
    graph: Graph
    spec: ModelSpec | None
    partition: PlantedPartition | None
    structure: StructureDef | None
    seed: int | None


def load_graph_file(path: str) -> LoadedGraph:
    """Read a graph JSON file, or a plain 0-indexed 'i j' edge list."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        graph = Graph(int(data["n"]), np.asarray(data["edges"], dtype=np.int64))
        spec = None
        structure = None
        if "spec" in data:
            sdata = data["spec"]
            structure = structure_from_dict(
                sdata, name=data.get("structure", "custom")
            )
            if all(k in sdata for k in ("n", "c", "epsilon")):
                spec = ModelSpec.create(
                    w=structure.w,
                    gamma_planted=structure.gamma_planted,
                    gamma_prior=structure.gamma_prior,
                    n=int(sdata["n"]),
                    c=float(sdata["c"]),
                    epsilon=float(sdata["epsilon"]),
                )
        partition = None
        if data.get("planted") is not None:
            q = structure.w.q if structure else int(max(data["planted"])) + 1
            partition = PlantedPartition(np.asarray(data["planted"]), q)
        return LoadedGraph(graph, spec, partition, structure, data.get("seed"))
    # plain edge list
    pairs = []
    n_max = -1
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelError(f"bad edge-list line: {line!r}")
        i, j = int(parts[0]), int(parts[1])
        pairs.append((i, j))
        n_max = max(n_max, i, j)
    graph = Graph(n_max + 1, np.asarray(pairs, dtype=np.int64))
    return LoadedGraph(graph, None, None, None, None)
