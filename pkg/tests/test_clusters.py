import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clustergibbs.clusters import (
    Cluster,
    ClusterEnumerator,
    brute_force_clusters,
    enumerate_anchored,
    enumerate_connected,
    enumerate_connected_pair,
    is_anchored,
    is_connected,
)
from clustergibbs.model import derived_constants, from_terms, term_overlap_graph
from clustergibbs.suite import random_chain, random_grid


def _plaquette(r, c, letter, cols=5):
    qs = [r * cols + c, r * cols + c + 1, (r + 1) * cols + c, (r + 1) * cols + c + 1]
    return " ".join(f"{letter}{q}" for q in sorted(qs))


def test_cluster_basics():
    W = Cluster.from_terms([3, 1, 3, 3])
    assert W.items == ((1, 1), (3, 3))
    assert W.weight == len(W) == 4
    assert W.factorial == 6
    assert W.multiplicity(3) == 3 and W.multiplicity(2) == 0
    assert W.union(Cluster.from_terms([1])) == Cluster.from_terms([1, 1, 3, 3, 3])
    with pytest.raises(ValueError):
        Cluster(((2, 1), (1, 1)))
    with pytest.raises(ValueError):
        Cluster(((1, 0),))


def test_single_term_connected():
    spec = from_terms(2, [("Z0 Z1", 0.5)])
    g = term_overlap_graph(spec)
    assert is_connected(Cluster.from_terms([0]), g)
    assert is_connected(Cluster.from_terms([0, 0]), g)


def test_far_terms_disconnected():
    spec = from_terms(7, [("Z0 Z1", 0.5), ("Z5 Z6", 0.5)])
    assert not is_connected(Cluster.from_terms([0, 1]), term_overlap_graph(spec))


def test_two_component_plaquette_cluster():
    # Two plaquette terms on identical qubits plus neighbours, in two far corners of a 5x5 lattice.
    terms = [
        (_plaquette(0, 0, "X"), 0.5),
        (_plaquette(0, 0, "Z"), 0.5),
        (_plaquette(0, 1, "X"), 0.5),
        (_plaquette(3, 3, "Z"), 0.5),
        (_plaquette(2, 3, "X"), 0.5),
        (_plaquette(3, 2, "Y"), 0.5),
    ]
    spec = from_terms(25, terms)
    g = term_overlap_graph(spec)
    V1 = Cluster.from_counts({0: 3, 1: 2, 2: 1})
    V2 = Cluster.from_counts({3: 2, 4: 1, 5: 1})
    W = V1.union(V2)
    assert W.weight == 10
    assert W.factorial == 24
    assert is_connected(V1, g) and is_connected(V2, g)
    assert not is_connected(W, g)
    assert W.support(spec) == V1.support(spec) | V2.support(spec)


def test_weight_one_is_terms_on_j():
    spec = random_chain(5, 1)
    got = enumerate_connected(2, 1, spec)
    assert [W.terms[0] for W in got] == [a for a, p in enumerate(spec.paulis) if 2 in p.support]


def test_single_term_model_weight_three():
    spec = from_terms(2, [("Z0 Z1", 0.5)])
    assert enumerate_connected(0, 3, spec) == [Cluster.from_counts({0: 3})]


def test_chain_with_fields_matches_brute_force():
    terms = [(f"Z{q} Z{q + 1}", 0.5) for q in range(3)] + [(f"Z{q}", 0.3) for q in range(4)]
    spec = from_terms(4, terms)
    got = enumerate_connected(1, 2, spec)
    assert got == brute_force_clusters(spec, 2, 1 << 1)
    # 3 doubled terms on qubit 1, 3 pairs among them, 3 pairs reaching a neighbour
    assert len(got) == 9


def test_pair_out_of_reach_is_empty():
    spec = from_terms(6, [(f"Z{q} Z{q + 1}", 0.5) for q in range(5)])
    assert enumerate_connected_pair(0, 4, 3, spec) == []
    assert enumerate_connected_pair(0, 4, 4, spec) == [Cluster.from_terms([0, 1, 2, 3])]


def test_pair_same_qubit_rejected():
    spec = from_terms(2, [("Z0 Z1", 0.5)])
    with pytest.raises(ValueError):
        enumerate_connected_pair(1, 1, 2, spec)


def test_pair_three_chain():
    spec = from_terms(3, [("Z0 Z1", 0.5), ("Z1 Z2", 0.5)])
    assert enumerate_connected_pair(0, 2, 2, spec) == [Cluster.from_terms([0, 1])]


def _random_small(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    k = int(rng.integers(2, 9))
    terms = {}
    while len(terms) < k:
        size = int(rng.integers(1, min(n, 3) + 1))
        qs = sorted(rng.choice(n, size=size, replace=False))
        text = " ".join(f"{'XYZ'[rng.integers(3)]}{q}" for q in qs)
        terms[text] = float(rng.uniform(-1, 1))
    return from_terms(n, list(terms.items()))


@given(st.integers(0, 10**6), st.integers(1, 5))
def test_matches_brute_force(seed, m):
    spec = _random_small(seed)
    g = term_overlap_graph(spec)
    for j in range(spec.num_qubits):
        got = enumerate_connected(j, m, spec)
        assert got == brute_force_clusters(spec, m, 1 << j)
        assert len(set(got)) == len(got)
        for W in got:
            assert W.weight == m and is_connected(W, g) and (W.support_mask(spec) >> j) & 1
    anchor = 0b11 if spec.num_qubits > 1 else 1
    got = enumerate_anchored(anchor, m, spec)
    assert got == brute_force_clusters(spec, m, anchor, connected=False)
    assert all(is_anchored(W, spec, g, anchor) for W in got)


@pytest.mark.parametrize("spec", [random_chain(8, 2), random_grid(3, 3, 4)], ids=["chain", "grid"])
def test_count_bound(spec):
    dd = derived_constants(spec, strict=True).dd
    enum = ClusterEnumerator(spec)
    for j in range(spec.num_qubits):
        for m in range(1, 6):
            assert len(enum.connected(j, m)) <= (math.e * dd) ** m


def test_enumerator_pair_matches_function():
    spec = random_chain(6, 9)
    enum = ClusterEnumerator(spec)
    for m in range(1, 5):
        assert list(enum.pair(1, 3, m)) == enumerate_connected_pair(1, 3, m, spec)
    assert enum.connected(1, 3) is enum.connected(1, 3)


def test_to_json():
    assert Cluster.from_counts({4: 2, 1: 1}).to_json() == [[1, 1], [4, 2]]


def test_pair_pruning_ignores_sparse_adjacency():
    # adjacency declares a path 0-1-2-3, but the only coupling joins 0 and 3 directly
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = from_terms(4, [("Z0 Z3", 0.5)], adjacency=[(0, 1), (1, 2), (2, 3)])
    pairs = enumerate_connected_pair(0, 3, 1, spec)
    assert [W.items for W in pairs] == [((0, 1),)]
