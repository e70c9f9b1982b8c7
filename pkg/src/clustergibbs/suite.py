"""Bundled example models and seeded random model families."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import HamiltonianSpec, from_terms, loads

__all__ = [
    "BUNDLED",
    "bundled_path",
    "load_bundled",
    "random_chain",
    "random_grid",
    "tfim_chain",
    "model_suite",
]

BUNDLED = ("chain8", "grid3x3", "tfim10")

_LETTERS = "XYZ"


def bundled_path(name: str):
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled model {name!r}; choose from {BUNDLED}")
    return resources.files("clustergibbs") / "data" / f"{name}.json"


def load_bundled(name: str, strict: bool = True) -> HamiltonianSpec:
    return loads(bundled_path(name).read_text(encoding="utf-8"), strict=strict)


def _random_terms(edges, n, rng):
    terms = []
    for u, v in edges:
        a, b = rng.choice(3, size=2)
        terms.append((f"{_LETTERS[a]}{u} {_LETTERS[b]}{v}", float(rng.uniform(-1, 1))))
    for q in range(n):
        terms.append((f"{_LETTERS[rng.integers(3)]}{q}", float(rng.uniform(-1, 1))))
    return terms


def random_chain(n: int, seed=None) -> HamiltonianSpec:
    """Open chain with one random two-site Pauli per bond and one random field per site."""
    rng = np.random.default_rng(seed)
    edges = [(q, q + 1) for q in range(n - 1)]
    return from_terms(n, _random_terms(edges, n, rng), adjacency=edges)


def random_grid(rows: int, cols: int, seed=None) -> HamiltonianSpec:
    rng = np.random.default_rng(seed)
    edges = []
    for r in range(rows):
        for c in range(cols):
            q = r * cols + c
            if c + 1 < cols:
                edges.append((q, q + 1))
            if r + 1 < rows:
                edges.append((q, q + cols))
    return from_terms(rows * cols, _random_terms(edges, rows * cols, rng), adjacency=edges)


def tfim_chain(n: int, J: float = 1.0, h: float = 0.5) -> HamiltonianSpec:
    """``-J sum Z_q Z_{q+1} - h sum X_q`` on an open chain."""
    terms = [(f"Z{q} Z{q + 1}", -J) for q in range(n - 1)]
    terms += [(f"X{q}", -h) for q in range(n)]
    return from_terms(n, terms, adjacency=[(q, q + 1) for q in range(n - 1)])


def model_suite(seed: int = 0, count: int = 20, max_chain: int = 10, grids: int = 2) -> list[tuple[str, HamiltonianSpec]]:
    """Seeded random strict-mode models: ``grids`` 3x3 grids, then chains with 3..``max_chain`` qubits."""
    rng = np.random.default_rng(seed)
    out = [(f"grid3x3-{seed}-{g}", random_grid(3, 3, rng)) for g in range(min(grids, count))]
    k = 0
    while len(out) < count:
        n = 3 + k % (max_chain - 2)
        out.append((f"chain{n}-{seed}-{k}", random_chain(n, rng)))
        k += 1
    return out
