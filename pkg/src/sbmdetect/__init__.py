"""Block-structured random graphs: generation, BP inference, detectability."""

from .model import (
    AffinityParams,
    ClusterDistribution,
    EPSILON_MIN,
    IndicatorMatrix,
    InferenceParams,
    ModelError,
    ModelSpec,
    StructureDef,
    UnsupportedStructureError,
    affinity_from,
    epsilon_of,
    flip,
    load_structure,
    spec_from_structure,
)
from .generator import Graph, PlantedPartition, generate, sample_graph, sample_partition

__all__ = [
    "AffinityParams",
    "ClusterDistribution",
    "EPSILON_MIN",
    "Graph",
    "IndicatorMatrix",
    "InferenceParams",
    "ModelError",
    "ModelSpec",
    "PlantedPartition",
    "StructureDef",
    "UnsupportedStructureError",
    "affinity_from",
    "epsilon_of",
    "flip",
    "generate",
    "load_structure",
    "sample_graph",
    "sample_partition",
    "spec_from_structure",
]

__version__ = "0.1.0"
