"""Hamiltonian specifications ``H = sum_a coeff_a * P_a`` and the derived
constants that gate the convergence guarantee."""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .pauli import PauliParseError, PauliString, format_pauli, parse_pauli, single_site

__all__ = [
    "ModelError",
    "HamiltonianSpec",
    "DerivedConstants",
    "load",
    "loads",
    "from_terms",
    "overlap_degree",
    "beta_star",
    "derived_constants",
    "term_overlap_graph",
    "qubit_distance",
]

_KNOWN_KEYS = {"num_qubits", "terms", "adjacency"}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianSpec:
    num_qubits: int
    coeffs: tuple[float, ...]
    paulis: tuple[PauliString, ...]
    adjacency: tuple[tuple[int, int], ...] | None = None

    @property
    def terms(self) -> list[tuple[float, PauliString]]:
        return list(zip(self.coeffs, self.paulis))

    @property
    def num_terms(self) -> int:
        return len(self.paulis)

    @property
    def locality(self) -> int:
        return max((p.weight for p in self.paulis), default=0)

    def to_dict(self) -> dict:
        out = {
            "num_qubits": self.num_qubits,
            "terms": [{"pauli": format_pauli(p), "coeff": c} for c, p in self.terms],
        }
        if self.adjacency is not None:
            out["adjacency"] = [list(e) for e in self.adjacency]
        return out

    def with_coeff(self, index: int, coeff: float) -> "HamiltonianSpec":
        coeffs = list(self.coeffs)
        coeffs[index] = coeff
        return HamiltonianSpec(self.num_qubits, tuple(coeffs), self.paulis, self.adjacency)


@dataclass(frozen=True)
class DerivedConstants:
    k: int
    dd: int
    beta_star: float
    c_enum: float
    strict: bool = field(default=True)


def from_terms(
    num_qubits: int,
    terms: Iterable[tuple[str | PauliString, float]],
    adjacency: Sequence[Sequence[int]] | None = None,
    strict: bool = True,
) -> HamiltonianSpec:
    """Build a validated spec; identical Pauli strings are merged."""
    if not isinstance(num_qubits, int) or isinstance(num_qubits, bool) or num_qubits < 1:
        raise ModelError(f"num_qubits must be a positive integer, got {num_qubits!r}")
    merged: dict[PauliString, float] = {}
    for label, coeff in terms:
        try:
            p = parse_pauli(label) if isinstance(label, str) else label
        except PauliParseError as exc:
            raise ModelError(f"bad term {label!r}: {exc}") from exc
        if not p.is_hermitian():
            raise ModelError(f"term {label!r} is not Hermitian")
        if p.is_identity():
            raise ModelError("identity terms only shift the energy; drop them")
        if p.mask >> num_qubits:
            raise ModelError(f"term {format_pauli(p)!r} acts outside qubits 0..{num_qubits - 1}")
        if isinstance(coeff, bool) or not isinstance(coeff, (int, float)) or not math.isfinite(coeff):
            raise ModelError(f"coefficient for {label!r} must be a finite number")
        sign = -1.0 if p.phase == 2 else 1.0
        key = p.strip_phase()
        merged[key] = merged.get(key, 0.0) + sign * float(coeff)

    for p, c in merged.items():
        if abs(c) > 1.0:
            msg = f"|coeff| = {abs(c)} > 1 for term {format_pauli(p)!r}"
            if strict:
                raise ModelError(msg)
            warnings.warn(msg, stacklevel=2)

    adj = None
    if adjacency is not None:
        edges = []
        for e in adjacency:
            if len(e) != 2 or not all(isinstance(v, int) and 0 <= v < num_qubits for v in e):
                raise ModelError(f"bad adjacency edge {e!r}")
            edges.append((min(e), max(e)))
        adj = tuple(sorted(set(edges)))

    paulis = tuple(merged)
    spec = HamiltonianSpec(num_qubits, tuple(merged[p] for p in paulis), paulis, adj)
    if adj is not None:
        _check_diameters(spec)
    return spec


def loads(text: str, strict: bool = True) -> HamiltonianSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model file: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError("model file must hold a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        msg = f"unknown keys in model file: {sorted(unknown)}"
        if strict:
            raise ModelError(msg)
        warnings.warn(msg, stacklevel=2)
    if "num_qubits" not in data or "terms" not in data:
        raise ModelError("model file needs 'num_qubits' and 'terms'")
    terms = []
    if not isinstance(data["terms"], list):
        raise ModelError("'terms' must be a list")
    for t in data["terms"]:
        if not isinstance(t, dict) or "pauli" not in t or "coeff" not in t:
            raise ModelError(f"bad term entry {t!r}")
        if not isinstance(t["pauli"], str):
            raise ModelError(f"pauli must be a string in {t!r}")
        terms.append((t["pauli"], t["coeff"]))
    return from_terms(data["num_qubits"], terms, data.get("adjacency"), strict=strict)


def load(path: str | Path, strict: bool = True) -> HamiltonianSpec:
    return loads(Path(path).read_text(encoding="utf-8"), strict=strict)


def _with_single_sites(spec: HamiltonianSpec) -> list[PauliString]:
    paulis = list(spec.paulis)
    present = set(paulis)
    for q in range(spec.num_qubits):
        for letter in "XYZ":
            p = single_site(q, letter)
            if p not in present:
                paulis.append(p)
    return paulis


def _max_overlap(paulis: Sequence[PauliString]) -> int:
    best = 0
    for a, pa in enumerate(paulis):
        count = sum(1 for b, pb in enumerate(paulis) if b != a and pa.mask & pb.mask)
        best = max(best, count)
    return best


def overlap_degree(spec: HamiltonianSpec, strict: bool = True) -> int:
    """Largest number of other terms whose support meets a given term's support.

    In strict mode every single-site Pauli is adjoined (with zero coefficient)
    before counting, as the convergence theorem assumes.
    """
    paulis = _with_single_sites(spec) if strict else list(spec.paulis)
    return _max_overlap(paulis)


def beta_star(dd: int) -> float:
    """Inverse-temperature threshold ``1 / (2 e^2 d (d + 1))``; ``d = 0`` is treated as 1."""
    if dd < 0:
        raise ValueError("overlap degree must be non-negative")
    d = max(dd, 1)
    return 1.0 / (2.0 * math.e**2 * d * (d + 1))


def derived_constants(spec: HamiltonianSpec, strict: bool = True) -> DerivedConstants:
    dd = overlap_degree(spec, strict)
    k = spec.locality
    return DerivedConstants(
        k=k,
        dd=dd,
        beta_star=beta_star(dd),
        c_enum=math.log(max(dd, 1) * 2 ** (2 * k + 1)),
        strict=strict,
    )


def term_overlap_graph(spec: HamiltonianSpec) -> list[list[int]]:
    """Adjacency lists over term indices; ``b in graph[a]`` iff supports meet."""
    by_qubit: dict[int, list[int]] = {}
    for a, p in enumerate(spec.paulis):
        for q in p.support:
            by_qubit.setdefault(q, []).append(a)
    graph = []
    for a, p in enumerate(spec.paulis):
        nbrs = set()
        for q in p.support:
            nbrs.update(by_qubit[q])
        nbrs.discard(a)
        graph.append(sorted(nbrs))
    return graph


def qubit_distance(spec: HamiltonianSpec, source: int, use_adjacency: bool = False) -> list[float]:
    """Graph distance from ``source``.

    By default qubits are joined when they share a term, which is the graph
    that cluster supports grow on. ``use_adjacency`` measures on the declared
    ``adjacency`` instead (when present).
    """
    n = spec.num_qubits
    nbrs: list[set[int]] = [set() for _ in range(n)]
    if use_adjacency and spec.adjacency is not None:
        for u, v in spec.adjacency:
            nbrs[u].add(v)
            nbrs[v].add(u)
    else:
        for p in spec.paulis:
            s = sorted(p.support)
            for u in s:
                nbrs[u].update(s)
    dist = [math.inf] * n
    dist[source] = 0
    todo = deque([source])
    while todo:
        u = todo.popleft()
        for v in nbrs[u]:
            if dist[v] == math.inf:
                dist[v] = dist[u] + 1
                todo.append(v)
    return dist


def _check_diameters(spec: HamiltonianSpec, limit: int | None = None):
    limit = limit if limit is not None else max(spec.locality - 1, 1)
    for p in spec.paulis:
        s = sorted(p.support)
        for q in s:
            d = qubit_distance(spec, q, use_adjacency=True)
            far = max(d[r] for r in s)
            if far > limit:
                warnings.warn(
                    f"term {format_pauli(p)!r} spans graph diameter {far} > {limit}",
                    stacklevel=3,
                )
                return
