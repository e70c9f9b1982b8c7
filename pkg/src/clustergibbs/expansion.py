"""Truncated cluster expansion of conditional marginals, local expectation
values and two-point connected correlations.

For a projector product ``E`` and an insertion ``A`` the generating function

    Z(t, kappa) = 2**(n-N) Tr[E (1 + kappa A) exp(-sum_a t_a coeff_a P_a)]

is expanded as a multivariate series in the ``t_a``.  The coefficient of the
monomial ``t^W`` in ``log Z`` (a jet in ``kappa``) is the cluster contribution
of ``W``; setting every ``t_a = beta`` and differentiating in ``kappa`` gives
``<A>`` under the ``E``-conditioned Gibbs state.  Only connected clusters
touching the insertion survive, which is what makes the series local.

Products of Pauli strings over one multiset ``V`` all coincide up to a phase,
so the symmetrized product over every arrangement of ``V`` collapses to
``s_V * P_V`` with an integer-valued ``s_V``.  The series logarithm is then
taken on the lattice of sub-multisets with the recursion

    mu_a(W) F_W = sum_{0 < V <= W} mu_a(V) L_V F_{W-V}.

Scalars are whatever ``scalar`` produces (``float`` by default; an mpmath
``mpf`` works for high-precision checks).
"""

from __future__ import annotations

import math
import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .clusters import Cluster, ClusterEnumerator
from .model import DerivedConstants, HamiltonianSpec, derived_constants, qubit_distance
from .pauli import (
    PauliString,
    ProjectorProduct,
    basis_axis,
    multiply,
    normalized_trace,
    parse_pauli,
    single_site,
)

__all__ = [
    "GuaranteeVoidError",
    "KappaJet",
    "PairJet",
    "MarginalEstimate",
    "ExpectationEstimate",
    "CorrelationEstimate",
    "ClusterExpansion",
    "sequence_trace",
    "series_log",
    "series_exp",
    "tail_bound",
    "pair_tail_bound",
    "choose_order",
    "as_observable",
]

Items = tuple  # sorted ((term, multiplicity), ...)


class GuaranteeVoidError(ValueError):
    """beta is at or above the convergence threshold."""


class KappaJet:
    """``c0 + c1 * kappa`` with ``kappa**2`` dropped."""

    __slots__ = ("c0", "c1")

    def __init__(self, c0=0.0, c1=0.0):
        self.c0 = c0
        self.c1 = c1

    def __add__(self, o):
        return KappaJet(self.c0 + o.c0, self.c1 + o.c1)

    def __sub__(self, o):
        return KappaJet(self.c0 - o.c0, self.c1 - o.c1)

    def __mul__(self, o):
        if isinstance(o, KappaJet):
            return KappaJet(self.c0 * o.c0, self.c0 * o.c1 + self.c1 * o.c0)
        return KappaJet(self.c0 * o, self.c1 * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, KappaJet):
            inv = 1 / o.c0
            c0 = self.c0 * inv
            return KappaJet(c0, (self.c1 - c0 * o.c1) * inv)
        return KappaJet(self.c0 / o, self.c1 / o)

    def __neg__(self):
        return KappaJet(-self.c0, -self.c1)

    def log(self):
        return KappaJet(math.log(self.c0) if isinstance(self.c0, float) else _log(self.c0), self.c1 / self.c0)

    def exp(self):
        e = math.exp(self.c0) if isinstance(self.c0, float) else _exp(self.c0)
        return KappaJet(e, e * self.c1)

    def as_tuple(self):
        return (self.c0, self.c1)

    def __repr__(self):
        return f"KappaJet({self.c0!r}, {self.c1!r})"


class PairJet:
    """``c0 + ci ki + cj kj + cij ki kj`` with squares of ``ki``, ``kj`` dropped."""

    __slots__ = ("c0", "ci", "cj", "cij")

    def __init__(self, c0=0.0, ci=0.0, cj=0.0, cij=0.0):
        self.c0, self.ci, self.cj, self.cij = c0, ci, cj, cij

    def __add__(self, o):
        return PairJet(self.c0 + o.c0, self.ci + o.ci, self.cj + o.cj, self.cij + o.cij)

    def __sub__(self, o):
        return PairJet(self.c0 - o.c0, self.ci - o.ci, self.cj - o.cj, self.cij - o.cij)

    def __mul__(self, o):
        if isinstance(o, PairJet):
            return PairJet(
                self.c0 * o.c0,
                self.c0 * o.ci + self.ci * o.c0,
                self.c0 * o.cj + self.cj * o.c0,
                self.c0 * o.cij + self.ci * o.cj + self.cj * o.ci + self.cij * o.c0,
            )
        return PairJet(self.c0 * o, self.ci * o, self.cj * o, self.cij * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if not isinstance(o, PairJet):
            return PairJet(self.c0 / o, self.ci / o, self.cj / o, self.cij / o)
        inv = 1 / o.c0
        q0 = self.c0 * inv
        qi = (self.ci - q0 * o.ci) * inv
        qj = (self.cj - q0 * o.cj) * inv
        qij = (self.cij - q0 * o.cij - qi * o.cj - qj * o.ci) * inv
        return PairJet(q0, qi, qj, qij)

    def __neg__(self):
        return PairJet(-self.c0, -self.ci, -self.cj, -self.cij)

    def log(self):
        l0 = math.log(self.c0) if isinstance(self.c0, float) else _log(self.c0)
        ri, rj = self.ci / self.c0, self.cj / self.c0
        return PairJet(l0, ri, rj, self.cij / self.c0 - ri * rj)

    def exp(self):
        e = math.exp(self.c0) if isinstance(self.c0, float) else _exp(self.c0)
        return PairJet(e, e * self.ci, e * self.cj, e * (self.cij + self.ci * self.cj))

    def as_tuple(self):
        return (self.c0, self.ci, self.cj, self.cij)

    def __repr__(self):
        return f"PairJet{self.as_tuple()!r}"


def _log(x):
    import mpmath

    return mpmath.log(x)


def _exp(x):
    import mpmath

    return mpmath.exp(x)


# ---------------------------------------------------------------------------
# multiset lattice helpers and the generic series exp/log


def _sub_multisets(W: Items, lead_required: bool):
    """Yield ``(V, W - V, nu_lead)`` over proper, nonzero sub-multisets ``V``."""
    terms = [a for a, _ in W]
    ranges = [range(1 if (i == 0 and lead_required) else 0, mu + 1) for i, (_, mu) in enumerate(W)]
    full = tuple(mu for _, mu in W)
    for nus in product(*ranges):
        if nus == full or not any(nus):
            continue
        V = tuple((a, nu) for a, nu in zip(terms, nus) if nu)
        R = tuple((a, mu - nu) for a, mu, nu in zip(terms, full, nus) if mu - nu)
        yield V, R, nus[0]


def _lattice(top: Items):
    terms = [a for a, _ in top]
    for nus in product(*(range(mu + 1) for _, mu in top)):
        yield tuple((a, nu) for a, nu in zip(terms, nus) if nu)


def series_log(F: Mapping[Items, object], top: Items) -> dict:
    """Coefficients of ``log F`` on every sub-multiset of ``top``.

    ``F`` maps multiset keys to ring elements (floats or jets) and must
    contain the empty key ``()``.
    """
    L = {(): F[()].log() if hasattr(F[()], "log") else math.log(F[()])}
    F0 = F[()]
    for W in sorted(_lattice(top), key=lambda V: sum(mu for _, mu in V)):
        if W:
            L[W] = _log_coeff(W, F, L, F0)
    return L


def _log_coeff(W, F, L, F0):
    mu_lead = W[0][1]
    acc = None
    for V, R, nu in _sub_multisets(W, True):
        f = F.get(R)
        if f is None:
            continue
        term = L[V] * f * nu
        acc = term if acc is None else acc + term
    num = F.get(W)
    if acc is not None:
        num = num - acc * (1 / mu_lead) if num is not None else -(acc * (1 / mu_lead))
    return num / F0


def series_exp(L: Mapping[Items, object], top: Items) -> dict:
    """Coefficients of ``exp L`` on every sub-multiset of ``top``."""
    F0 = L[()].exp() if hasattr(L[()], "exp") else math.exp(L[()])
    F = {(): F0}
    for W in sorted(_lattice(top), key=lambda V: sum(mu for _, mu in V)):
        if not W:
            continue
        mu_lead = W[0][1]
        acc = L.get(W, 0.0) * F0 * mu_lead if W in L else None
        for V, R, nu in _sub_multisets(W, True):
            if V not in L:
                continue
            term = L[V] * F[R] * nu
            acc = term if acc is None else acc + term
        F[W] = acc * (1 / mu_lead) if acc is not None else F0 * 0.0
    return F


# ---------------------------------------------------------------------------
# bounds and order selection


def tail_bound(beta: float, beta_star: float, order: int, policy: str = "error") -> float:
    """``sum_{m > order} m r**m`` with ``r = beta / beta_star``."""
    if beta < 0 or beta_star <= 0:
        raise ValueError("beta must be >= 0 and beta_star > 0")
    r = beta / beta_star
    if r >= 1:
        _void(beta, beta_star, policy)
        return math.inf
    M = order
    return r ** (M + 1) * ((M + 1) * (1 - r) + r) / (1 - r) ** 2


def pair_tail_bound(beta: float, beta_star: float, order: int, policy: str = "error") -> float:
    """``sum_{m > order} m**2 r**m``: cluster count times the two-insertion
    coefficient bound ``m**2 [2e(d+1)]**m``, which is ``m**2 beta_star**-m``."""
    if beta < 0 or beta_star <= 0:
        raise ValueError("beta must be >= 0 and beta_star > 0")
    r = beta / beta_star
    if r >= 1:
        _void(beta, beta_star, policy)
        return math.inf
    M = order
    return r ** (M + 1) * ((M + 1) ** 2 - (2 * M * M + 2 * M - 1) * r + M * M * r * r) / (1 - r) ** 3


def _void(beta, beta_star, policy):
    msg = f"beta = {beta:g} >= beta_star = {beta_star:g}: convergence guarantee void"
    if policy == "error":
        raise GuaranteeVoidError(msg)
    if policy == "warn":
        warnings.warn(msg, stacklevel=3)
    elif policy != "ignore":
        raise ValueError(f"unknown beta policy {policy!r}")


def choose_order(beta: float, beta_star: float, num_qubits: int, alpha: float = 2.0, max_order: int = 64) -> int:
    """Smallest order ``M >= 1`` whose tail bound is at most ``N**-alpha``."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if beta >= beta_star:
        raise GuaranteeVoidError(f"beta = {beta:g} >= beta_star = {beta_star:g}")
    target = float(num_qubits) ** -alpha
    for M in range(1, max_order + 1):
        if tail_bound(beta, beta_star, M) <= target:
            return M
    raise ValueError(f"no order <= {max_order} reaches tail {target:g}")


# ---------------------------------------------------------------------------
# observables


def as_observable(A) -> list[tuple[float, PauliString]]:
    """Normalize a Hermitian Pauli sum to real-coefficient, phase-free components.

    Accepts a text Pauli (``"Z0 Z1"``), a PauliString, a mapping text->coeff or
    an iterable of ``(coeff, pauli)`` pairs.
    """
    if isinstance(A, str):
        A = [(1.0, parse_pauli(A))]
    elif isinstance(A, PauliString):
        A = [(1.0, A)]
    elif isinstance(A, Mapping):
        A = [(c, parse_pauli(k) if isinstance(k, str) else k) for k, c in A.items()]
    merged: dict[PauliString, complex] = {}
    for c, p in A:
        p = parse_pauli(p) if isinstance(p, str) else p
        key = p.strip_phase()
        merged[key] = merged.get(key, 0) + complex(c) * p.coefficient
    out = []
    for p, c in merged.items():
        if abs(c.imag) > 1e-12:
            raise ValueError(f"observable is not Hermitian (component {p} has coefficient {c})")
        if c.real != 0:
            out.append((c.real, p))
    out.sort(key=lambda cp: (cp[1].mask, cp[1].x, cp[1].z))
    return out


def _axis_insertion(axis) -> list[tuple[float, int]]:
    v = basis_axis(axis)
    return [(c, i) for i, c in enumerate(v) if c != 0]


def _site_operator(qubit: int, vec: Sequence[float]) -> list[tuple[float, PauliString]]:
    return [(c, single_site(qubit, "XYZ"[i])) for i, c in enumerate(vec) if c != 0]


# ---------------------------------------------------------------------------
# results


@dataclass
class MarginalEstimate:
    p_prime: float
    order: int
    gammas: list
    tail: float
    clamped: bool
    raw: float = field(default=0.5, repr=False)


@dataclass
class ExpectationEstimate:
    value: float
    order: int
    tail: float
    coefficients: list


@dataclass
class CorrelationEstimate:
    value: float
    order: int
    tail: float
    coefficients: list


def sequence_trace(
    E: ProjectorProduct,
    insertion: Sequence[tuple[float, PauliString]] | None,
    seq: Sequence[PauliString],
) -> KappaJet:
    """Normalized trace of ``E (1 + kappa A) P_1 ... P_p`` for one ordered product."""
    prod = PauliString()
    for p in seq:
        prod = multiply(prod, p)
    c0 = normalized_trace(E, prod)
    c1 = 0.0
    for c, a in insertion or ():
        c1 += c * normalized_trace(E, multiply(a, prod))
    return KappaJet(_real(c0), _real(c1))


def _real(z):
    if isinstance(z, complex):
        if abs(z.imag) > 1e-12 * max(1.0, abs(z.real)):
            raise ArithmeticError(f"unexpected imaginary trace {z}")
        return z.real
    return z


# ---------------------------------------------------------------------------
# the engine


_MISSING = object()


class _Context:
    """Per (E, insertion) caches of series coefficients F_V and log coefficients L_V."""

    def __init__(self, engine: "ClusterExpansion", E: ProjectorProduct, insertions, pair: bool):
        self.engine = engine
        self.E = E
        self.insertions = insertions  # one or two lists of (coeff, PauliString)
        self.pair = pair
        self.F: dict = {}
        self.L: dict = {}
        self.gammas: list = []
        one = engine.scalar(1)
        if pair:
            tij = self._insert_trace(PauliString(), both=True)
            self.F0 = PairJet(one, *(self._insert_trace(PauliString())), tij)
        else:
            self.F0 = KappaJet(one, self._insert_trace(PauliString())[0])
        self.L[()] = self.F0.log()

    def _insert_trace(self, P: PauliString, both: bool = False):
        E = self.E
        if both:
            total = 0.0
            for ci, ai in self.insertions[0]:
                for cj, aj in self.insertions[1]:
                    total += ci * cj * _real(normalized_trace(E, multiply(multiply(ai, aj), P)))
            return total
        out = []
        for ins in self.insertions:
            total = 0.0
            for c, a in ins:
                total += c * _real(normalized_trace(E, multiply(a, P)))
            out.append(total)
        return out

    def series_coeff(self, V: Items):
        f = self.F.get(V, _MISSING)
        if f is _MISSING:
            f = self._series_coeff(V)
            self.F[V] = f
        return f

    def _series_coeff(self, V: Items):
        eng = self.engine
        s, P = eng.symmetrized(V)
        if s == 0:
            return None
        E = self.E
        base = _real(normalized_trace(E, P))
        ins = self._insert_trace(P)
        if base == 0 and not any(ins) and not (self.pair and self._insert_trace(P, True)):
            return None
        p = sum(mu for _, mu in V)
        w = eng.scalar(s) / math.factorial(p)
        if p % 2:
            w = -w
        for a, mu in V:
            w = w * eng.coeffs[a] ** mu
        if self.pair:
            return PairJet(w * base, w * ins[0], w * ins[1], w * self._insert_trace(P, True))
        return KappaJet(w * base, w * ins[0])

    def log_coeff(self, W: Items):
        val = self.L.get(W)
        if val is not None:
            return val
        lead_mu = W[0][1]
        acc = None
        for V, R, nu in _sub_multisets(W, True):
            f = self.series_coeff(R)
            if f is None:
                continue
            lv = self.log_coeff(V)
            term = lv * f * nu
            acc = term if acc is None else acc + term
        num = self.series_coeff(W)
        if acc is not None:
            acc = acc * (self.engine.scalar(1) / lead_mu)
            num = acc * -1 if num is None else num - acc
        if num is None:
            num = PairJet() * 0 if self.pair else KappaJet(0 * self.F0.c0, 0 * self.F0.c0)
        val = num / self.F0
        self.L[W] = val
        return val



class _MarginalPlan:
    """Model-intrinsic bookkeeping for the marginal at one qubit up to one order.

    For the jet ``A + kappa B`` the kappa-linear part of its logarithm is the
    series ``Q = B / A``, so ``Q_W = B_W - sum_{0 < R <= W} A_R Q_{W-R}``.
    ``Q_V`` vanishes unless ``V`` is empty or a connected cluster through the
    qubit, and ``A_R`` vanishes whenever ``P_R`` acts on the (unmeasured)
    target qubit; both facts are used to prune the pair list once per model.
    Per projector product only the traces change, which is all vectorized.
    """

    def __init__(self, engine: "ClusterExpansion", j: int, order: int):
        self.j = j
        self.order = order
        spec = engine.spec
        levels = [engine.enumerator.connected(j, m) for m in range(1, order + 1)]
        cluster_pos = {(): 0}
        for level in levels:
            for W in level:
                cluster_pos[W.items] = len(cluster_pos)
        self.num_clusters = len(cluster_pos)
        self.level_slices = []
        start = 1
        for level in levels:
            self.level_slices.append((start, start + len(level)))
            start += len(level)

        table: dict = {}
        weights, entry_q, entry_l, starts, has_j = [], [], [], [], []
        local: dict[int, int] = {}
        jbit = 1 << j

        def table_index(R):
            idx = table.get(R)
            if idx is not None:
                return idx
            s, P = engine.symmetrized(R)
            p = sum(mu for _, mu in R)
            w = float(s) / math.factorial(p) * (-1.0 if p % 2 else 1.0)
            for a, mu in R:
                w *= engine.coeffs[a] ** mu
            idx = len(weights)
            table[R] = idx
            weights.append(w)
            has_j.append(bool(P.mask & jbit))
            starts.append(len(entry_q))
            for q, letter in P.letters.items():
                entry_q.append(local.setdefault(q, len(local)))
                entry_l.append("XYZ".index(letter))
            return idx

        self.level_pairs = []
        self.level_self = []
        for (lo, hi), level in zip(self.level_slices, levels):
            tgt, ridx, vpos = [], [], []
            selfidx = []
            for t, W in enumerate(level):
                items = W.items
                selfidx.append(table_index(items))
                for R, V, _ in _sub_multisets(items, False):
                    pos = cluster_pos.get(V)
                    if pos is None:
                        continue
                    s, P = engine.symmetrized(R)
                    if s == 0 or P.mask & jbit:
                        continue
                    tgt.append(t)
                    ridx.append(table_index(R))
                    vpos.append(pos)
            self.level_self.append(np.asarray(selfidx, dtype=np.intp))
            self.level_pairs.append(
                (np.asarray(tgt, dtype=np.intp), np.asarray(ridx, dtype=np.intp), np.asarray(vpos, dtype=np.intp))
            )
        self.weights = np.asarray(weights, dtype=float)
        self.has_j = np.asarray(has_j, dtype=bool)
        self.entry_q = np.asarray(entry_q, dtype=np.intp)
        self.entry_l = np.asarray(entry_l, dtype=np.intp)
        self.starts = np.asarray(starts, dtype=np.intp)
        counts = np.diff(np.append(self.starts, len(self.entry_q)))
        self.empty = counts == 0
        self.seg_starts = np.minimum(self.starts, max(len(self.entry_q) - 1, 0))
        self.local_qubits = np.asarray(sorted(local, key=local.get), dtype=np.intp)
        self.j_local = local.get(j, -1)
        self._local_list = [int(q) for q in self.local_qubits]

    def local_key(self, E: ProjectorProduct) -> tuple:
        return tuple(E.entries.get(q) for q in self._local_list)

    def _products(self, comp: np.ndarray) -> np.ndarray:
        if len(self.entry_q) == 0:
            return np.ones(len(self.weights))
        vals = comp[self.entry_q, self.entry_l]
        prods = np.multiply.reduceat(vals, self.seg_starts)
        prods[self.empty] = 1.0
        return prods

    def gammas(self, E: ProjectorProduct, axis) -> list[float]:
        comp = np.zeros((max(len(self.local_qubits), 1), 3))
        for row, q in enumerate(self.local_qubits):
            v = E.entries.get(int(q))
            if v is not None:
                comp[row] = v
        A = self.weights * self._products(comp)
        if self.j_local >= 0:
            comp[self.j_local] = axis
        B = self.weights * self._products(comp) * self.has_j
        Q = np.zeros(self.num_clusters)
        out = []
        for (lo, hi), selfidx, (tgt, ridx, vpos) in zip(self.level_slices, self.level_self, self.level_pairs):
            sums = np.bincount(tgt, weights=A[ridx] * Q[vpos], minlength=hi - lo)
            Q[lo:hi] = B[selfidx] - sums
            out.append(float(Q[lo:hi].sum()))
        return out


class ClusterExpansion:
    """Cluster-expansion evaluator bound to one Hamiltonian.

    Parameters
    ----------
    spec : HamiltonianSpec
    strict : bool
        Use the strict (single-site Paulis adjoined) overlap degree for the
        convergence threshold.
    beta_policy : {"error", "warn", "ignore"}
        What to do when ``beta >= beta_star``.
    scalar : callable
        Converts numbers into the working scalar type.
    cache_size : int
        Number of ``(E, insertion)`` contexts kept for reuse.
    """

    def __init__(
        self,
        spec: HamiltonianSpec,
        strict: bool = True,
        beta_policy: str = "error",
        scalar: Callable = float,
        cache_size: int = 4096,
        constants: DerivedConstants | None = None,
    ):
        self.spec = spec
        self.constants = constants or derived_constants(spec, strict)
        self.beta_policy = beta_policy
        self.scalar = scalar
        self.coeffs = [scalar(c) for c in spec.coeffs]
        self.enumerator = ClusterEnumerator(spec)
        self._sym: dict[Items, tuple[int, PauliString]] = {(): (1, PauliString())}
        self._sym_lock = threading.Lock()
        self._contexts: OrderedDict = OrderedDict()
        self._ctx_lock = threading.Lock()
        self.cache_size = cache_size
        self._plans: dict[int, _MarginalPlan] = {}
        self._plan_lock = threading.Lock()
        self._gamma_cache: OrderedDict = OrderedDict()

    @property
    def beta_star(self) -> float:
        return self.constants.beta_star

    # -- symmetrized products ------------------------------------------------

    def symmetrized(self, V: Items) -> tuple[int, PauliString]:
        """``(s, P)`` with the sum over all arrangements of ``V`` equal to ``s * P``."""
        hit = self._sym.get(V)
        if hit is not None:
            return hit
        paulis = self.spec.paulis
        x = z = 0
        for a, mu in V:
            if mu % 2:
                x ^= paulis[a].x
                z ^= paulis[a].z
        P = PauliString(x, z)
        total = 0
        for idx, (a, mu) in enumerate(V):
            rest = V[:idx] + (((a, mu - 1),) if mu > 1 else ()) + V[idx + 1:]
            s_rest, P_rest = self.symmetrized(rest)
            if s_rest == 0:
                continue
            q = multiply(paulis[a], P_rest).phase
            total += s_rest * (1j ** q)
        if total.imag:
            raise ArithmeticError(f"non-Hermitian symmetrized product for {V}")
        result = (int(total.real), P)
        with self._sym_lock:
            self._sym[V] = result
        return result

    # -- contexts ----------------------------------------------------------------

    def _context(self, E: ProjectorProduct, insertions, pair: bool) -> _Context:
        key = (E.key(), tuple(tuple((c, p.x, p.z) for c, p in ins) for ins in insertions), pair)
        with self._ctx_lock:
            ctx = self._contexts.get(key)
            if ctx is not None:
                self._contexts.move_to_end(key)
                return ctx
        ctx = _Context(self, E, insertions, pair)
        with self._ctx_lock:
            self._contexts[key] = ctx
            while len(self._contexts) > self.cache_size:
                self._contexts.popitem(last=False)
        return ctx

    def clear_cache(self):
        with self._ctx_lock:
            self._contexts.clear()
            self._gamma_cache.clear()

    def _plan(self, j: int, order: int) -> _MarginalPlan:
        plan = self._plans.get(j)
        if plan is None or plan.order < order:
            plan = _MarginalPlan(self, j, order)
            with self._plan_lock:
                old = self._plans.get(j)
                if old is None or old.order < order:
                    self._plans[j] = plan
        return plan

    # -- single-cluster contributions -------------------------------------------

    def cluster_contribution(self, W: Cluster, E: ProjectorProduct, insertion=None):
        """Coefficient of ``t^W`` in the series logarithm, as a jet in kappa.

        ``insertion`` is a Pauli-sum observable (see ``as_observable``) or a
        pair ``(ops_i, ops_j)`` of them for the two-insertion jet.
        """
        if insertion is None:
            insertions, pair = [[]], False
        elif isinstance(insertion, tuple) and len(insertion) == 2 and not isinstance(insertion[0], (int, float)):
            insertions, pair = [as_observable(insertion[0]), as_observable(insertion[1])], True
        else:
            insertions, pair = [as_observable(insertion)], False
        ctx = _Context(self, E, insertions, pair)
        return ctx.log_coeff(W.items)

    # -- marginals -----------------------------------------------------------------

    def _check_unmeasured(self, E: ProjectorProduct, qubits: Iterable[int]):
        for q in qubits:
            if not 0 <= q < self.spec.num_qubits:
                raise ValueError(f"qubit {q} out of range")
            if E.measured(q):
                raise ValueError(f"qubit {q} is already measured")

    def _marginal_context(self, E: ProjectorProduct, j: int, axis) -> _Context:
        self._check_unmeasured(E, [j])
        ins = [(c, single_site(j, "XYZ"[i])) for c, i in _axis_insertion(axis)]
        return self._context(E, [ins], False)

    def _gammas(self, ctx: _Context, anchor_mask: int, order: int) -> list:
        with self._ctx_lock:
            have = len(ctx.gammas)
        for m in range(have + 1, order + 1):
            total = self.scalar(0)
            for W in self.enumerator.anchored(anchor_mask, m):
                total = total + ctx.log_coeff(W.items).c1
            with self._ctx_lock:
                if len(ctx.gammas) == m - 1:
                    ctx.gammas.append(total)
        return list(ctx.gammas[:order])

    def _fast_gammas(self, E: ProjectorProduct, j: int, axis, order: int) -> list:
        self._check_unmeasured(E, [j])
        v = basis_axis(axis)
        if not order:
            return []
        plan = self._plan(j, order)
        # only outcomes inside the plan's light cone matter
        key = (j, v, plan.local_key(E))
        with self._ctx_lock:
            hit = self._gamma_cache.get(key)
            if hit is not None and len(hit) >= order:
                self._gamma_cache.move_to_end(key)
                return hit[:order]
        gs = plan.gammas(E, v)[:order]
        with self._ctx_lock:
            self._gamma_cache[key] = gs
            while len(self._gamma_cache) > self.cache_size:
                self._gamma_cache.popitem(last=False)
        return list(gs)

    def gammas(self, j: int, E: ProjectorProduct | None = None, order: int = 1, axis="Z", method: str | None = None) -> list:
        """Coefficients ``gamma_1 .. gamma_order`` of ``2 p(0) - 1`` in powers of beta.

        ``method="reference"`` sums per-cluster logarithms of the jet series;
        ``"fast"`` (the default for float scalars) uses the pruned
        vectorized recursion. Both give the same numbers up to rounding.
        """
        E = E if E is not None else ProjectorProduct()
        method = method or ("fast" if self.scalar is float else "reference")
        if method == "fast":
            return self._fast_gammas(E, j, axis, order)
        if method != "reference":
            raise ValueError(f"unknown method {method!r}")
        ctx = self._marginal_context(E, j, axis)
        return self._gammas(ctx, 1 << j, order)

    def gamma(self, j: int, E: ProjectorProduct | None = None, m: int = 1, axis="Z", method: str | None = None):
        """Order-``m`` coefficient of ``2 p(0) - 1`` in beta (beta-independent)."""
        if m < 1:
            raise ValueError("m must be >= 1")
        return self.gammas(j, E, m, axis, method)[m - 1]

    def marginal(
        self,
        E: ProjectorProduct | None,
        j: int,
        axis="Z",
        beta: float = 0.0,
        order: int = 1,
        policy: str | None = None,
        method: str | None = None,
    ) -> MarginalEstimate:
        """Truncated estimate of the probability of outcome 0 on qubit ``j`` along ``axis``."""
        if beta <= 0:
            raise ValueError("beta must be positive")
        if order < 0:
            raise ValueError("order must be non-negative")
        policy = policy or self.beta_policy
        gammas = self.gammas(j, E, order, axis, method)
        tail = 0.5 * tail_bound(beta, self.beta_star, order, policy)
        b = self.scalar(beta)
        s = self.scalar(0)
        bm = self.scalar(1)
        for g in gammas:
            bm = bm * b
            s = s + g * bm
        raw = self.scalar(1) / 2 + s / 2
        p = min(max(raw, self.scalar(0)), self.scalar(1))
        return MarginalEstimate(p, order, gammas, tail, p != raw, raw)

    # -- expectation values --------------------------------------------------------

    def observable_expectation(
        self,
        A,
        beta: float,
        order: int,
        E: ProjectorProduct | None = None,
        max_support: int = 6,
        policy: str | None = None,
    ) -> ExpectationEstimate:
        """``Tr[A e^{-beta H} E] / Tr[e^{-beta H} E]`` to the given order.

        Each Pauli component is expanded on its own. A component on ``s``
        qubits carries ``s`` times the single-site tail, scaled by ``|coeff|``.
        """
        if beta <= 0:
            raise ValueError("beta must be positive")
        policy = policy or self.beta_policy
        E = E if E is not None else ProjectorProduct()
        comps = as_observable(A)
        value = self.scalar(0)
        tail = 0.0
        coeffs = [self.scalar(0)] * (order + 1)
        b = self.scalar(beta)
        for c, P in comps:
            if P.is_identity():
                value = value + c
                coeffs[0] = coeffs[0] + c
                continue
            if P.weight > max_support:
                raise ValueError(f"observable support {P.weight} exceeds limit {max_support}")
            self._check_unmeasured(E, P.support)
            ctx = self._context(E, [[(1.0, P)]], False)
            gs = self._gammas(ctx, P.mask, order)
            coeffs[0] = coeffs[0] + c * ctx.L[()].c1
            val = ctx.L[()].c1
            bm = self.scalar(1)
            for m, g in enumerate(gs, start=1):
                bm = bm * b
                val = val + g * bm
                coeffs[m] = coeffs[m] + c * g
            value = value + c * val
            tail += abs(c) * self._observable_tail(P, beta, order, policy)
        return ExpectationEstimate(value, order, tail, coeffs)

    def _observable_tail(self, P: PauliString, beta, order, policy):
        # One single-site envelope per qubit of the support; exact for weight 1.
        return P.weight * tail_bound(beta, self.beta_star, order, policy)

    # -- correlations ---------------------------------------------------------------

    def correlation(
        self,
        E: ProjectorProduct | None,
        i: int,
        j: int,
        op_i: Sequence[float] = (0.0, 0.0, 1.0),
        op_j: Sequence[float] = (0.0, 0.0, 1.0),
        beta: float = 0.0,
        order: int = 1,
        policy: str | None = None,
    ) -> CorrelationEstimate:
        """Connected correlation of ``op_i . sigma_i`` and ``op_j . sigma_j``."""
        if i == j:
            raise ValueError("i and j must differ")
        if beta <= 0:
            raise ValueError("beta must be positive")
        policy = policy or self.beta_policy
        for v in (op_i, op_j):
            if len(v) != 3 or math.sqrt(sum(c * c for c in v)) > 1 + 1e-12:
                raise ValueError("single-site operators are 3-vectors of norm <= 1")
        E = E if E is not None else ProjectorProduct()
        self._check_unmeasured(E, [i, j])
        ctx = self._context(E, [_site_operator(i, op_i), _site_operator(j, op_j)], True)
        b = self.scalar(beta)
        value = ctx.L[()].cij
        coeffs = []
        bm = self.scalar(1)
        far = order * max(self.constants.k - 1, 0) < qubit_distance(self.spec, i)[j]
        for m in range(1, order + 1):
            bm = bm * b
            total = self.scalar(0)
            if not far:
                for W in self.enumerator.pair(i, j, m):
                    total = total + ctx.log_coeff(W.items).cij
            coeffs.append(total)
            value = value + total * bm
        tail = pair_tail_bound(beta, self.beta_star, order, policy)
        return CorrelationEstimate(value, order, tail, coeffs)
