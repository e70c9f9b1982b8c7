"""Classical sampling of high-temperature quantum Gibbs states by truncated
cluster expansion of conditional marginals."""

__version__ = "0.1.0"

from .clusters import Cluster, enumerate_connected, enumerate_connected_pair, is_connected
from .estimator import ClusterExpansionSampler
from .expansion import ClusterExpansion, GuaranteeVoidError, choose_order, pair_tail_bound, tail_bound
from .model import HamiltonianSpec, beta_star, derived_constants, from_terms, load, loads, overlap_degree
from .pauli import PauliString, ProjectorProduct, multiply, normalized_trace, parse_pauli
from .sampler import (
    AdaptiveSchedule,
    SampleRecord,
    StaticSchedule,
    estimate_expectation,
    explicit_distribution,
    sample_many,
    sample_one,
)
from .suite import load_bundled

__all__ = [
    "AdaptiveSchedule",
    "Cluster",
    "ClusterExpansion",
    "ClusterExpansionSampler",
    "GuaranteeVoidError",
    "HamiltonianSpec",
    "PauliString",
    "ProjectorProduct",
    "SampleRecord",
    "StaticSchedule",
    "beta_star",
    "choose_order",
    "derived_constants",
    "enumerate_connected",
    "enumerate_connected_pair",
    "estimate_expectation",
    "explicit_distribution",
    "from_terms",
    "is_connected",
    "load",
    "load_bundled",
    "loads",
    "multiply",
    "normalized_trace",
    "overlap_degree",
    "pair_tail_bound",
    "parse_pauli",
    "sample_many",
    "sample_one",
    "tail_bound",
]
