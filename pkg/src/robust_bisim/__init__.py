"""Probabilistic bisimilarity, robust bisimilarity and bisimilarity distances."""

from .coupling import (
    Coupling,
    CouplingError,
    class_coupling,
    diagonal_coupling,
    maximal_support_coupling,
    north_west_corner,
    tv_distance,
)
from .distance import (
    ConvergenceError,
    DistanceMatrix,
    Policy,
    PolicyValue,
    check_optimal,
    delta,
    extract_policy,
    min_transport,
    policy_value,
)
from .harness import ExampleFamily, SweepRow, build_example, sweep
from .lmc import (
    Distribution,
    LabelledMarkovChain,
    ModelError,
    PairClassification,
    SubDistribution,
    classify_pairs,
    parse_model,
    post_pairs,
    serialize_model,
)
from .relations import (
    PairRelation,
    Partition,
    bisim,
    bisimilarity,
    label_partition,
    partition_to_relation,
    quotient_chain,
    relation_to_partition,
)
from .robust import filter_relation, prune, refine, robust_bisimilarity, robust_partition

__all__ = [
    "bisim",
    "bisimilarity",
    "build_example",
    "check_optimal",
    "class_coupling",
    "classify_pairs",
    "ConvergenceError",
    "Coupling",
    "CouplingError",
    "delta",
    "diagonal_coupling",
    "DistanceMatrix",
    "Distribution",
    "ExampleFamily",
    "extract_policy",
    "filter_relation",
    "label_partition",
    "LabelledMarkovChain",
    "maximal_support_coupling",
    "min_transport",
    "ModelError",
    "north_west_corner",
    "PairClassification",
    "PairRelation",
    "parse_model",
    "Partition",
    "partition_to_relation",
    "Policy",
    "policy_value",
    "PolicyValue",
    "post_pairs",
    "prune",
    "quotient_chain",
    "refine",
    "relation_to_partition",
    "robust_bisimilarity",
    "robust_partition",
    "serialize_model",
    "SubDistribution",
    "sweep",
    "SweepRow",
    "tv_distance",
]

__version__ = "0.1.0"
