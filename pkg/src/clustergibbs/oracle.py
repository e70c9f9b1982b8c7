"""Exact dense reference computations for small systems (N <= 12).

Qubit 0 is the leftmost tensor factor. Conditioning on a projector product
is done by contracting each measured qubit out of the unnormalized Gibbs
operator, so no full-size projector is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import HamiltonianSpec
from .pauli import PauliString, ProjectorProduct, basis_axis

__all__ = [
    "MAX_QUBITS",
    "DenseState",
    "pauli_matrix",
    "hamiltonian_matrix",
    "dense_gibbs",
    "reduced_state",
    "exact_marginal",
    "exact_expectation",
    "exact_distribution",
    "exact_tv",
    "connected_correlation_matrix",
    "connected_correlation",
    "exact_correlation",
    "projector",
    "exact_distribution_mp",
]

MAX_QUBITS = 12

_I2 = np.eye(2, dtype=complex)
SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_LETTER = {"X": SIGMA[0], "Y": SIGMA[1], "Z": SIGMA[2]}


@dataclass(frozen=True)
class DenseState:
    """Unnormalized Gibbs operator ``exp(-beta H)`` on ``num_qubits`` qubits."""

    matrix: np.ndarray
    num_qubits: int


def _check_size(n: int):
    if n > MAX_QUBITS:
        raise ValueError(f"dense oracle limited to {MAX_QUBITS} qubits, got {n}")


def pauli_matrix(p: PauliString, num_qubits: int) -> np.ndarray:
    _check_size(num_qubits)
    out = np.array([[p.coefficient]], dtype=complex)
    for q in range(num_qubits):
        out = np.kron(out, _LETTER.get(p.letter(q), _I2))
    return out


def hamiltonian_matrix(spec: HamiltonianSpec) -> np.ndarray:
    n = spec.num_qubits
    _check_size(n)
    H = np.zeros((2**n, 2**n), dtype=complex)
    for c, p in spec.terms:
        H += c * pauli_matrix(p, n)
    return H


def dense_gibbs(spec: HamiltonianSpec, beta: float) -> DenseState:
    H = hamiltonian_matrix(spec)
    w, V = np.linalg.eigh(H)
    rho = (V * np.exp(-beta * w)) @ V.conj().T
    return DenseState((rho + rho.conj().T) / 2, spec.num_qubits)


def projector(axis, outcome: int = 0) -> np.ndarray:
    v = np.asarray(basis_axis(axis) if isinstance(axis, str) else axis, dtype=float)
    if outcome == 1:
        v = -v
    return (_I2 + v[0] * SIGMA[0] + v[1] * SIGMA[1] + v[2] * SIGMA[2]) / 2


def _contract(rho: np.ndarray, qubits: list[int], q: int, op: np.ndarray):
    """``Tr_q[(op_q x I) rho]`` for a tensor over ``qubits``; returns the reduced tensor."""
    pos = qubits.index(q)
    n = len(qubits)
    t = rho.reshape((2,) * (2 * n))
    # t[r..., c...]: contract op[c_q, r_q] over (r_q, c_q)
    t = np.tensordot(op, t, axes=([0, 1], [n + pos, pos]))
    rest = qubits[:pos] + qubits[pos + 1:]
    d = 2 ** len(rest)
    return t.reshape(d, d), rest


def reduced_state(state: DenseState, E: ProjectorProduct, keep: Sequence[int]) -> np.ndarray:
    """Unnormalized operator on ``keep`` (in that order) after conditioning on ``E``.

    Entry ``[r, c]`` equals ``Tr[E |c><r| e^{-beta H}]`` summed appropriately,
    i.e. the reduced operator whose trace against ``B`` is ``Tr[E B rho]``.
    """
    rho = state.matrix
    qubits = list(range(state.num_qubits))
    for q in sorted(E.entries):
        if q in keep:
            raise ValueError(f"qubit {q} is both measured and kept")
        rho, qubits = _contract(rho, qubits, q, projector(E.entries[q]))
    for q in [q for q in qubits if q not in keep]:
        rho, qubits = _contract(rho, qubits, q, _I2)
    order = [qubits.index(q) for q in keep]
    n = len(qubits)
    t = rho.reshape((2,) * (2 * n)).transpose(order + [n + o for o in order])
    d = 2 ** n
    return t.reshape(d, d)


def exact_marginal(state: DenseState, E: ProjectorProduct, j: int, axis="Z", outcome: int = 0) -> float:
    """Probability of ``outcome`` on qubit ``j`` measured along ``axis`` given ``E``."""
    if E.measured(j):
        raise ValueError(f"qubit {j} is already measured")
    r = reduced_state(state, E, [j])
    den = np.trace(r).real
    if den < 1e-30:
        raise ZeroDivisionError("conditioning event has vanishing weight")
    return float(np.trace(projector(axis, outcome) @ r).real / den)


def exact_expectation(state: DenseState, A, E: ProjectorProduct | None = None) -> float:
    """``Tr[A e^{-beta H} E] / Tr[e^{-beta H} E]`` for a Pauli-sum ``A`` off the measured qubits."""
    from .expansion import as_observable

    E = E if E is not None else ProjectorProduct()
    total = 0.0
    for c, p in as_observable(A):
        keep = sorted(p.support)
        r = reduced_state(state, E, keep)
        local = PauliString.from_letters({i: p.letter(q) for i, q in enumerate(keep)})
        total += c * np.trace(pauli_matrix(local, len(keep)) @ r).real / np.trace(r).real
    return float(total)


def exact_distribution(state: DenseState, schedule) -> dict[str, float]:
    """Exact outcome distribution under a (static or adaptive) schedule.

    Keys are outcome strings in measurement order.
    """
    n = state.num_qubits
    out: dict[str, float] = {}

    def walk(rho, qubits, prefix, measured, prob):
        if len(prefix) == n:
            out[prefix] = prob
            return
        q, axis = schedule.next(prefix, measured)
        total = np.trace(rho).real
        for outcome in (0, 1):
            child, rest = _contract(rho, qubits, q, projector(axis, outcome))
            walk(child, rest, prefix + str(outcome), measured | {q}, prob * (np.trace(child).real / total))

    walk(state.matrix, list(range(n)), "", frozenset(), 1.0)
    return out


def exact_tv(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    """``sum_x |p(x) - q(x)|`` (the full L1 distance)."""
    keys = set(p) | set(q)
    return float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def connected_correlation_matrix(state: DenseState, E: ProjectorProduct, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError("i and j must differ")
    r = reduced_state(state, E, [i, j])
    r = r / np.trace(r).real
    ri = np.array([np.trace(np.kron(s, _I2) @ r).real for s in SIGMA])
    rj = np.array([np.trace(np.kron(_I2, s) @ r).real for s in SIGMA])
    both = np.array([[np.trace(np.kron(a, b) @ r).real for b in SIGMA] for a in SIGMA])
    return both - np.outer(ri, rj)


def connected_correlation(state, E, i, j, op_i, op_j) -> float:
    """Connected correlation of ``op_i . sigma_i`` and ``op_j . sigma_j``."""
    C = connected_correlation_matrix(state, E, i, j)
    return float(np.asarray(op_i, dtype=float) @ C @ np.asarray(op_j, dtype=float))


def exact_correlation(state: DenseState, E: ProjectorProduct, i: int, j: int, return_maximizer: bool = False):
    """Largest connected correlation over unit-norm single-site operators.

    This is the top singular value of the 3x3 Pauli connected-correlation
    matrix; identity parts of the operators drop out of the connected part.
    """
    C = connected_correlation_matrix(state, E, i, j)
    U, s, Vt = np.linalg.svd(C)
    if return_maximizer:
        return float(s[0]), U[:, 0], Vt[0]
    return float(s[0])


def exact_distribution_mp(spec: HamiltonianSpec, beta, schedule, dps: int = 40) -> dict:
    """``exact_distribution`` in mpmath arithmetic at ``dps`` digits (N <= 6).

    Used where the quantity of interest sits below double-precision rounding.
    """
    import mpmath

    n = spec.num_qubits
    if n > 6:
        raise ValueError("high-precision oracle limited to 6 qubits")
    with mpmath.workdps(dps):
        H = mpmath.matrix(hamiltonian_matrix(spec).tolist())
        rho = mpmath.expm(-mpmath.mpf(beta) * H)
        total = sum(rho[i, i] for i in range(2**n)).real
        out = {}

        def leaf(prefix, ops):
            P = mpmath.matrix([[1]])
            for q in range(n):
                local = mpmath.matrix(ops.get(q, _I2).tolist())
                P = _kron_mp(P, local)
            out[prefix] = (sum((P * rho)[i, i] for i in range(2**n)).real) / total

        def walk(prefix, measured, ops):
            if len(prefix) == n:
                leaf(prefix, ops)
                return
            q, axis = schedule.next(prefix, measured)
            for outcome in (0, 1):
                walk(prefix + str(outcome), measured | {q}, {**ops, q: projector(axis, outcome)})

        walk("", frozenset(), {})
    return out


def _kron_mp(a, b):
    import mpmath

    out = mpmath.matrix(a.rows * b.rows, a.cols * b.cols)
    for i in range(a.rows):
        for j in range(a.cols):
            for k in range(b.rows):
                for l in range(b.cols):
                    out[i * b.rows + k, j * b.cols + l] = a[i, j] * b[k, l]
    return out
