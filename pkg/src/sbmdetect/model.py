"""Core model types: indicator structures, cluster fractions, and affinities.

The random-graph ensemble is parametrized by a symmetric 0/1 indicator
matrix W (which cluster pairs are densely connected), cluster fractions
gamma, a target average degree c, and a noise strength epsilon.  The
per-pair connection probabilities are

    omega = (omega_in - omega_out) * W + omega_out * ones((q, q))

with epsilon = omega_out / omega_in, so epsilon = 1 is a uniform random
graph and epsilon -> 0 realizes the block pattern sharply.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Smallest accepted noise strength; omega_bar = 1/eps - 1 diverges at 0.
EPSILON_MIN = 1e-6


class ModelError(ValueError):
    """Invalid model input (bad structure, fractions, or affinity)."""


class UnsupportedStructureError(ValueError):
    """A structure outside the scope of the requested analysis."""


def _as_float_vector(weights) -> np.ndarray:
    v = np.asarray(weights, dtype=float).copy()
    if v.ndim != 1:
        raise ModelError("cluster weights must be a 1-d sequence")
    return v


@dataclass(frozen=True, eq=False)
class IndicatorMatrix:
    """Symmetric q x q 0/1 matrix marking densely connected cluster pairs."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ModelError("indicator matrix must be square")
        if a.shape[0] < 2:
            raise ModelError("indicator matrix needs q >= 2")
        if not np.isin(a, (0, 1)).all():
            raise ModelError("indicator matrix entries must be 0 or 1")
        a = a.astype(np.int8)
        if (a != a.T).any():
            raise ModelError("indicator matrix must be symmetric")
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def q(self) -> int:
        return self.entries.shape[0]

    def flip(self) -> "IndicatorMatrix":
        return IndicatorMatrix(1 - self.entries)

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    @property
    def is_regular(self) -> bool:
        rs = self.row_sums()
        return bool((rs == rs[0]).all())

    @property
    def regular_degree(self) -> int:
        rs = self.row_sums()
        if not (rs == rs[0]).all():
            raise UnsupportedStructureError("indicator matrix is not regular")
        return int(rs[0])

    def quadratic_form(self, gamma) -> float:
        """gamma^T W gamma by explicit double sum (q is small)."""
        g = _as_float_vector(gamma)
        if g.size != self.q:
            raise ModelError("gamma length does not match q")
        total = 0.0
        w = self.entries
        for r in range(self.q):
            for s in range(self.q):
                if w[r, s]:
                    total += g[r] * g[s]
        return total

    def as_float(self) -> np.ndarray:
        return self.entries.astype(float)

    def __eq__(self, other):
        return isinstance(other, IndicatorMatrix) and np.array_equal(
            self.entries, other.entries
        )

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        rows = ",".join("".join(str(int(x)) for x in row) for row in self.entries)
        return f"IndicatorMatrix({rows})"


def flip(w: IndicatorMatrix) -> IndicatorMatrix:
    """Complement of the indicator matrix: 11^T - W."""
    return w.flip()


@dataclass(frozen=True, eq=False)
class ClusterDistribution:
    """Nonnegative cluster fractions summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        v = _as_float_vector(self.weights)
        if (v < 0).any():
            raise ModelError("cluster weights must be nonnegative")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ModelError(f"cluster weights sum to {v.sum()!r}, expected 1")
        v.flags.writeable = False
        object.__setattr__(self, "weights", v)

    @classmethod
    def uniform(cls, q: int) -> "ClusterDistribution":
        return cls(np.full(q, 1.0 / q))

    @property
    def q(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        return isinstance(other, ClusterDistribution) and np.array_equal(
            self.weights, other.weights
        )

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class AffinityParams:
    """Two-level connection probabilities and derived quantities."""

    omega_in: float
    omega_out: float
    epsilon: float
    omega_bar: float  # (omega_in - omega_out) / omega_out = 1/eps - 1

    def __post_init__(self):
        if not (0.0 <= self.omega_out <= self.omega_in <= 1.0):
            raise ModelError(
                f"need 0 <= omega_out <= omega_in <= 1, got "
                f"({self.omega_in!r}, {self.omega_out!r})"
            )
        if not (0.0 < self.epsilon <= 1.0):
            raise ModelError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if abs(self.epsilon - self.omega_out / self.omega_in) > 1e-12:
            raise ModelError("epsilon is inconsistent with omega_out/omega_in")
        expected_bar = (self.omega_in - self.omega_out) / self.omega_out
        if abs(self.omega_bar - expected_bar) > 1e-12 * max(1.0, abs(expected_bar)):
            raise ModelError("omega_bar is inconsistent with the omegas")


def affinity_from(
    c: float,
    epsilon: float,
    w: IndicatorMatrix,
    gamma_planted: ClusterDistribution,
    n: int,
) -> AffinityParams:
    """Solve for (omega_in, omega_out) so the expected average degree is c.

    omega_in = (c/N) / [(1 - eps) * gamma^T W gamma + eps], omega_out = eps * omega_in.
    """
    if c <= 0:
        raise ModelError(f"average degree must be positive, got {c!r}")
    if epsilon < EPSILON_MIN or epsilon > 1.0:
        raise ModelError(
            f"epsilon must lie in [{EPSILON_MIN:g}, 1], got {epsilon!r}"
        )
    if n < 2:
        raise ModelError("need at least two vertices")
    gwg = w.quadratic_form(gamma_planted.weights)
    denom = (1.0 - epsilon) * gwg + epsilon
    if denom <= 0:
        raise ModelError("gamma^T W gamma and epsilon cannot both vanish")
    omega_in = (c / n) / denom
    if omega_in > 1.0:
        raise ModelError(
            f"implied omega_in = {omega_in:.6g} exceeds 1; "
            "decrease c or increase n"
        )
    omega_out = epsilon * omega_in
    return AffinityParams(
        omega_in=omega_in,
        omega_out=omega_out,
        epsilon=epsilon,
        omega_bar=1.0 / epsilon - 1.0,
    )


def epsilon_of(omega_in: float, omega_out: float) -> float:
    """Noise strength omega_out / omega_in."""
    if omega_in <= 0:
        raise ModelError("omega_in must be positive")
    return omega_out / omega_in


@dataclass(frozen=True)
class ModelSpec:
    """Complete ensemble description used for generation and inference."""

    w: IndicatorMatrix
    gamma_planted: ClusterDistribution
    gamma_prior: ClusterDistribution
    n: int
    c: float
    affinity: AffinityParams

    def __post_init__(self):
        if self.gamma_planted.q != self.w.q or self.gamma_prior.q != self.w.q:
            raise ModelError("gamma length does not match q")
        if self.n < 2:
            raise ModelError("need at least two vertices")
        # the affinity must reproduce the target degree
        implied = self.expected_degree()
        if abs(implied - self.c) > 1e-10 * max(1.0, self.c):
            raise ModelError(
                f"affinity implies average degree {implied!r}, expected {self.c!r}"
            )

    @classmethod
    def create(
        cls,
        w: IndicatorMatrix,
        gamma_planted: ClusterDistribution,
        gamma_prior: ClusterDistribution,
        n: int,
        c: float,
        epsilon: float,
    ) -> "ModelSpec":
        aff = affinity_from(c, epsilon, w, gamma_planted, n)
        return cls(
            w=w,
            gamma_planted=gamma_planted,
            gamma_prior=gamma_prior,
            n=n,
            c=c,
            affinity=aff,
        )

    @property
    def q(self) -> int:
        return self.w.q

    def block_probabilities(self) -> np.ndarray:
        """The q x q matrix of per-pair connection probabilities."""
        a = self.affinity
        return (a.omega_in - a.omega_out) * self.w.as_float() + a.omega_out

    def expected_degree(self) -> float:
        g = self.gamma_planted.weights
        return float(self.n * g @ self.block_probabilities() @ g)

    def inference_params(self) -> "InferenceParams":
        return InferenceParams(
            w=self.w,
            gamma_prior=self.gamma_prior.weights,
            omega_in=self.affinity.omega_in,
            omega_out=self.affinity.omega_out,
        )


@dataclass(frozen=True, eq=False)
class InferenceParams:
    """The parameter bundle belief propagation actually consumes.

    Unlike ModelSpec this carries no generation-side bookkeeping, so EM can
    update the omegas freely (including transiently disassortative
    estimates with omega_out > omega_in).
    """

    w: IndicatorMatrix
    gamma_prior: np.ndarray
    omega_in: float
    omega_out: float

    def __post_init__(self):
        g = _as_float_vector(self.gamma_prior)
        if g.size != self.w.q:
            raise ModelError("gamma_prior length does not match q")
        if (g < 0).any() or abs(g.sum() - 1.0) > 1e-9:
            raise ModelError("gamma_prior must be a probability vector")
        g.flags.writeable = False
        object.__setattr__(self, "gamma_prior", g)
        if self.omega_out <= 0 or self.omega_in <= 0:
            raise ModelError("omegas must be positive for inference")

    @property
    def q(self) -> int:
        return self.w.q

    @property
    def omega_bar(self) -> float:
        return (self.omega_in - self.omega_out) / self.omega_out

    @property
    def field_scale(self) -> float:
        # omega_bar * omega_out, kept in this form to stay finite at eps = 1
        return self.omega_in - self.omega_out

    @property
    def epsilon(self) -> float:
        return self.omega_out / self.omega_in

    def with_omegas(self, omega_in: float, omega_out: float) -> "InferenceParams":
        return InferenceParams(self.w, self.gamma_prior, omega_in, omega_out)

    def with_gamma(self, gamma) -> "InferenceParams":
        return InferenceParams(self.w, np.asarray(gamma, float), self.omega_in, self.omega_out)


# --- built-in structures and the structure-file format ---------------------

W_CHAIN3 = [[1, 0, 1], [0, 1, 0], [1, 0, 1]]
W_REGULAR3 = [[1, 1, 0], [1, 0, 1], [0, 1, 1]]


@dataclass(frozen=True)
class StructureDef:
    """A named structure: indicator matrix plus planted/prior fractions."""

    name: str
    w: IndicatorMatrix
    gamma_planted: ClusterDistribution
    gamma_prior: ClusterDistribution


def _preset(name: str) -> StructureDef | None:
    if name.startswith("community:"):
        try:
            q = int(name.split(":", 1)[1])
        except ValueError:
            raise ModelError(f"bad community preset {name!r}; use community:<q>")
        if q < 2:
            raise ModelError("community preset needs q >= 2")
        u = ClusterDistribution.uniform(q)
        return StructureDef(name, IndicatorMatrix(np.eye(q, dtype=int)), u, u)
    if name == "fig1c":
        # 3-cluster pattern [[1,0,1],[0,1,0],[1,0,1]]; the inference prior
        # (1/4, 1/2, 1/4) balances the pattern (gamma W = 1/2 * ones) even
        # though the planted clusters are equal in size.
        return StructureDef(
            name,
            IndicatorMatrix(W_CHAIN3),
            ClusterDistribution.uniform(3),
            ClusterDistribution([0.25, 0.5, 0.25]),
        )
    if name == "demo-regular-q3":
        u = ClusterDistribution.uniform(3)
        return StructureDef(name, IndicatorMatrix(W_REGULAR3), u, u)
    return None


def structure_from_dict(data: dict, name: str = "custom") -> StructureDef:
    if "W" not in data:
        raise ModelError("structure file needs a 'W' entry")
    w = IndicatorMatrix(np.asarray(data["W"]))
    if "q" in data and int(data["q"]) != w.q:
        raise ModelError("structure file 'q' does not match the W shape")
    planted = (
        ClusterDistribution(data["gamma_planted"])
        if data.get("gamma_planted") is not None
        else ClusterDistribution.uniform(w.q)
    )
    prior = (
        ClusterDistribution(data["gamma_prior"])
        if data.get("gamma_prior") is not None
        else ClusterDistribution.uniform(w.q)
    )
    if planted.q != w.q or prior.q != w.q:
        raise ModelError("gamma length does not match q")
    return StructureDef(name, w, planted, prior)


def structure_to_dict(s: StructureDef) -> dict:
    return {
        "q": s.w.q,
        "W": s.w.entries.astype(int).tolist(),
        "gamma_planted": s.gamma_planted.weights.tolist(),
        "gamma_prior": s.gamma_prior.weights.tolist(),
    }


def load_structure(name_or_path: str) -> StructureDef:
    """Resolve a preset name (community:q, fig1c, demo-regular-q3) or a JSON file."""
    preset = _preset(name_or_path)
    if preset is not None:
        return preset
    try:
        with open(name_or_path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ModelError(
            f"unknown structure {name_or_path!r}: not a preset and not a readable file"
        )
    except json.JSONDecodeError as exc:
        raise ModelError(f"structure file {name_or_path!r} is not valid JSON: {exc}")
    return structure_from_dict(data, name=name_or_path)


def spec_from_structure(
    structure: StructureDef, n: int, c: float, epsilon: float
) -> ModelSpec:
    return ModelSpec.create(
        w=structure.w,
        gamma_planted=structure.gamma_planted,
        gamma_prior=structure.gamma_prior,
        n=n,
        c=c,
        epsilon=epsilon,
    )
