"""Multiset clusters of Hamiltonian terms and enumeration of the connected
ones that touch a given set of qubits."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .model import HamiltonianSpec, qubit_distance, term_overlap_graph

__all__ = [
    "Cluster",
    "is_connected",
    "is_anchored",
    "enumerate_connected",
    "enumerate_connected_pair",
    "enumerate_anchored",
    "brute_force_clusters",
    "ClusterEnumerator",
]


@dataclass(frozen=True)
class Cluster:
    """A multiset of term indices stored as sorted ``(term, multiplicity)`` pairs."""

    items: tuple[tuple[int, int], ...]

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "Cluster":
        items = tuple(sorted((a, mu) for a, mu in counts.items() if mu > 0))
        return cls(items)

    @classmethod
    def from_terms(cls, terms: Iterable[int]) -> "Cluster":
        counts: dict[int, int] = {}
        for a in terms:
            counts[a] = counts.get(a, 0) + 1
        return cls.from_counts(counts)

    def __post_init__(self):
        prev = -1
        for a, mu in self.items:
            if a <= prev or mu < 1:
                raise ValueError("cluster items must be sorted, unique, with positive multiplicity")
            prev = a

    @property
    def counts(self) -> dict[int, int]:
        return dict(self.items)

    @property
    def terms(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.items)

    @property
    def weight(self) -> int:
        return sum(mu for _, mu in self.items)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(mu) for _, mu in self.items)

    def multiplicity(self, a: int) -> int:
        return dict(self.items).get(a, 0)

    def support_mask(self, spec: HamiltonianSpec) -> int:
        m = 0
        for a, _ in self.items:
            m |= spec.paulis[a].mask
        return m

    def support(self, spec: HamiltonianSpec) -> frozenset[int]:
        m = self.support_mask(spec)
        return frozenset(q for q in range(m.bit_length()) if (m >> q) & 1)

    def union(self, other: "Cluster") -> "Cluster":
        counts = self.counts
        for a, mu in other.items:
            counts[a] = counts.get(a, 0) + mu
        return Cluster.from_counts(counts)

    def coefficient(self, coeffs: Sequence[float]) -> float:
        out = 1.0
        for a, mu in self.items:
            out *= coeffs[a] ** mu
        return out

    def to_json(self) -> list[list[int]]:
        return [[a, mu] for a, mu in self.items]

    def __len__(self):
        return self.weight


def is_connected(W: Cluster, graph: Sequence[Sequence[int]]) -> bool:
    """True iff the distinct terms of ``W`` induce a connected subgraph."""
    terms = set(W.terms)
    if len(terms) <= 1:
        return True
    start = next(iter(terms))
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in graph[a]:
            if b in terms and b not in seen:
                seen.add(b)
                stack.append(b)
    return len(seen) == len(terms)


def is_anchored(W: Cluster, spec: HamiltonianSpec, graph: Sequence[Sequence[int]], anchor_mask: int) -> bool:
    """True iff every connected component of ``W`` touches the anchor qubits."""
    terms = set(W.terms)
    while terms:
        start = terms.pop()
        comp = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for b in graph[a]:
                if b in terms:
                    terms.discard(b)
                    comp.add(b)
                    stack.append(b)
        if not any(spec.paulis[a].mask & anchor_mask for a in comp):
            return False
    return True


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    # Ordered ways to write ``total`` as ``parts`` positive integers.
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _connected_sets(
    roots: Sequence[int], graph: Sequence[Sequence[int]], max_size: int
) -> Iterator[tuple[int, ...]]:
    """Each set of at most ``max_size`` terms that is connected once a virtual
    vertex adjacent to every root is added, exactly once."""

    def grow(current, frontier, forbidden):
        if current:
            yield current
        if len(current) == max_size:
            return
        for idx, v in enumerate(frontier):
            blocked = forbidden | set(frontier[:idx])
            rest = frontier[idx + 1:]
            seen = set(rest)
            extra = [
                u for u in graph[v]
                if u not in blocked and u not in seen and u not in current and u != v
            ]
            yield from grow(current + (v,), rest + sorted(extra), blocked)

    yield from grow((), sorted(set(roots)), frozenset())


def enumerate_anchored(anchor_mask: int, m: int, spec: HamiltonianSpec, graph=None) -> list[Cluster]:
    """Clusters of weight ``m`` each of whose components touches the anchor qubits."""
    if m < 1:
        raise ValueError("weight must be at least 1")
    graph = graph if graph is not None else term_overlap_graph(spec)
    roots = [a for a, p in enumerate(spec.paulis) if p.mask & anchor_mask]
    out = []
    for terms in _connected_sets(roots, graph, m):
        terms = tuple(sorted(terms))
        for mults in _compositions(m, len(terms)):
            out.append(Cluster(tuple(zip(terms, mults))))
    out.sort(key=lambda W: W.items)
    return out


def enumerate_connected(j: int, m: int, spec: HamiltonianSpec, graph=None) -> list[Cluster]:
    """Connected clusters of weight ``m`` whose support contains qubit ``j``."""
    if not 0 <= j < spec.num_qubits:
        raise ValueError(f"qubit {j} out of range")
    return enumerate_anchored(1 << j, m, spec, graph)


def enumerate_connected_pair(i: int, j: int, m: int, spec: HamiltonianSpec, graph=None) -> list[Cluster]:
    """Connected clusters of weight ``m`` whose support contains both ``i`` and ``j``."""
    if i == j:
        raise ValueError("i == j: use enumerate_connected")
    k = spec.locality
    if m * max(k - 1, 0) < qubit_distance(spec, i)[j]:
        return []
    return [W for W in enumerate_connected(i, m, spec, graph) if (W.support_mask(spec) >> j) & 1]


def brute_force_clusters(
    spec: HamiltonianSpec, m: int, anchor_mask: int, connected: bool = True
) -> list[Cluster]:
    """All weight-``m`` multisets filtered by support and connectivity (small models only)."""
    from itertools import combinations_with_replacement

    graph = term_overlap_graph(spec)
    out = []
    for combo in combinations_with_replacement(range(spec.num_terms), m):
        W = Cluster.from_terms(combo)
        if connected:
            if not W.support_mask(spec) & anchor_mask or not is_connected(W, graph):
                continue
        elif not is_anchored(W, spec, graph, anchor_mask):
            continue
        out.append(W)
    out.sort(key=lambda W: W.items)
    return out


class ClusterEnumerator:
    """Memoized enumeration keyed by ``(anchor, weight)``; safe to share across threads."""

    def __init__(self, spec: HamiltonianSpec):
        self.spec = spec
        self.graph = term_overlap_graph(spec)
        self._cache: dict[tuple[int, int], tuple[Cluster, ...]] = {}
        self._lock = threading.Lock()

    def anchored(self, anchor_mask: int, m: int) -> tuple[Cluster, ...]:
        key = (anchor_mask, m)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        result = tuple(enumerate_anchored(anchor_mask, m, self.spec, self.graph))
        with self._lock:
            return self._cache.setdefault(key, result)

    def connected(self, j: int, m: int) -> tuple[Cluster, ...]:
        return self.anchored(1 << j, m)

    def pair(self, i: int, j: int, m: int) -> tuple[Cluster, ...]:
        if i == j:
            raise ValueError("i == j: use connected")
        return tuple(W for W in self.connected(i, m) if (W.support_mask(self.spec) >> j) & 1)
