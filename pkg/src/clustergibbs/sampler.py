"""Autoregressive sampling of measurement outcomes from approximate
conditional marginals.

Random streams
--------------
Sample ``i`` under base seed ``s`` draws from Philox4x64-10 keyed with the
128-bit value ``s + (i << 64)`` (counter starting at zero).  Each step consumes
one raw 64-bit word ``w`` and sets ``u = (w >> 11) * 2**-53``; the bit is 0 iff
``u < p'``.  Nothing else touches the stream, so records are reproducible
bit-for-bit across platforms and independent of execution order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .expansion import ClusterExpansion, as_observable
from .pauli import ProjectorProduct, basis_axis

__all__ = [
    "ScheduleError",
    "StaticSchedule",
    "AdaptiveSchedule",
    "load_schedule",
    "schedule_from_dict",
    "SampleRecord",
    "sample_stream",
    "sample_one",
    "sample_many",
    "explicit_distribution",
    "estimate_expectation",
    "MAX_EXPLICIT_QUBITS",
]

MAX_EXPLICIT_QUBITS = 16
_MASK64 = (1 << 64) - 1


class ScheduleError(ValueError):
    pass


def _parse_basis(raw):
    if isinstance(raw, str):
        return raw.upper(), basis_axis(raw)
    axis = basis_axis(raw)
    return list(axis), axis


class StaticSchedule:
    """Fixed measurement order ``[(qubit, basis), ...]``."""

    def __init__(self, steps: Sequence[tuple[int, object]]):
        self.steps = []
        seen = set()
        for q, b in steps:
            if q in seen:
                raise ScheduleError(f"qubit {q} appears twice in static schedule")
            seen.add(q)
            label, axis = _parse_basis(b)
            self.steps.append((int(q), label, axis))

    @classmethod
    def z_basis(cls, num_qubits: int) -> "StaticSchedule":
        return cls([(q, "Z") for q in range(num_qubits)])

    def next(self, prefix: str, measured=frozenset()):
        n = len(prefix)
        if n >= len(self.steps):
            raise ScheduleError(f"schedule exhausted after {n} measurements")
        q, _, axis = self.steps[n]
        if q in measured:
            raise ScheduleError(f"qubit {q} measured twice")
        return q, axis

    def to_dict(self) -> dict:
        return {"static": [{"qubit": q, "basis": label} for q, label, _ in self.steps]}

    def validate(self, num_qubits: int):
        qs = sorted(q for q, _, _ in self.steps)
        if qs != list(range(num_qubits)):
            raise ScheduleError("static schedule must measure every qubit exactly once")


class AdaptiveSchedule:
    """Decision table from outcome prefixes to the next ``(qubit, basis)``.

    Prefixes without a rule fall back to ``default``: the lowest-index
    unmeasured qubit in the default basis (Z if none is given).  A default
    entry may also name a ``qubit``, used when it is still unmeasured.
    """

    def __init__(self, rules: Mapping[str, tuple[int, object]], default=None):
        self.rules = {}
        for prefix, (q, b) in rules.items():
            if set(prefix) - {"0", "1"}:
                raise ScheduleError(f"bad prefix {prefix!r}")
            label, axis = _parse_basis(b)
            self.rules[prefix] = (int(q), label, axis)
        if default is None:
            default = (None, "Z")
        q, b = default
        label, axis = _parse_basis(b)
        self.default = (q, label, axis)
        self._num_qubits = None

    @classmethod
    def from_static(cls, static: StaticSchedule, num_qubits: int) -> "AdaptiveSchedule":
        import itertools

        rules = {}
        for n, (q, label, _) in enumerate(static.steps[:num_qubits]):
            for bits in itertools.product("01", repeat=n):
                rules["".join(bits)] = (q, label)
        return cls(rules)

    def bind(self, num_qubits: int) -> "AdaptiveSchedule":
        self._num_qubits = num_qubits
        return self

    def next(self, prefix: str, measured=frozenset()):
        rule = self.rules.get(prefix)
        if rule is not None:
            q, _, axis = rule
            if q in measured:
                raise ScheduleError(f"rule for prefix {prefix!r} re-measures qubit {q}")
            return q, axis
        q, _, axis = self.default
        if q is not None and q not in measured:
            return q, axis
        n = self._num_qubits
        q = 0
        while q in measured:
            q += 1
        if n is not None and q >= n:
            raise ScheduleError(f"schedule exhausted after prefix {prefix!r}")
        return q, axis

    def to_dict(self) -> dict:
        rules = {p: {"qubit": q, "basis": label} for p, (q, label, _) in sorted(self.rules.items())}
        q, label, _ = self.default
        default = {"basis": label} if q is None else {"qubit": q, "basis": label}
        return {"adaptive": {"rules": rules, "default": default}}

    def validate(self, num_qubits: int):
        self.bind(num_qubits)
        for prefix, (q, _, _) in self.rules.items():
            if not 0 <= q < num_qubits:
                raise ScheduleError(f"rule for {prefix!r} names qubit {q} outside the model")


def schedule_from_dict(data: Mapping):
    if "static" in data:
        try:
            return StaticSchedule([(s["qubit"], s["basis"]) for s in data["static"]])
        except (KeyError, TypeError) as exc:
            raise ScheduleError(f"bad static schedule: {exc}") from exc
    if "adaptive" in data:
        body = data["adaptive"]
        try:
            rules = {p: (r["qubit"], r["basis"]) for p, r in body.get("rules", {}).items()}
            d = body.get("default")
            default = None if d is None else (d.get("qubit"), d.get("basis", "Z"))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ScheduleError(f"bad adaptive schedule: {exc}") from exc
        return AdaptiveSchedule(rules, default)
    raise ScheduleError("schedule needs a 'static' or 'adaptive' entry")


def load_schedule(path: str | Path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScheduleError(f"malformed schedule file: {exc}") from exc
    return schedule_from_dict(data)


@dataclass
class SampleRecord:
    bits: str
    qubits: list[int]
    axes: list[tuple[float, float, float]]
    p_prime: list[float]
    tails: list[float]
    seed: int
    index: int
    order: int
    clamped: list[bool] = field(default_factory=list)

    @property
    def max_tail(self) -> float:
        return max(self.tails, default=0.0)

    def outcomes(self) -> dict[int, int]:
        return {q: int(b) for q, b in zip(self.qubits, self.bits)}

    def to_json(self) -> str:
        return json.dumps(
            {
                "index": self.index,
                "seed": self.seed,
                "bits": self.bits,
                "qubits": self.qubits,
                "axes": [list(a) for a in self.axes],
                "p_prime": [float(p) for p in self.p_prime],
                "tail": [float(t) for t in self.tails],
                "order": self.order,
            },
            separators=(",", ":"),
        )


def sample_stream(base_seed: int, index: int) -> np.random.Philox:
    if not 0 <= base_seed <= _MASK64:
        raise ValueError("seed must fit in 64 bits")
    return np.random.Philox(key=base_seed + (index << 64))


def _uniform(bitgen: np.random.Philox) -> float:
    return (int(bitgen.random_raw()) >> 11) * 2.0**-53


def _prepare(engine: ClusterExpansion, schedule):
    n = engine.spec.num_qubits
    schedule.validate(n)
    if isinstance(schedule, AdaptiveSchedule):
        schedule.bind(n)
    return n


def sample_one(engine: ClusterExpansion, beta: float, schedule, order: int, base_seed: int, index: int = 0) -> SampleRecord:
    """Draw one outcome string; step ``n`` uses the truncated marginal given the first ``n`` outcomes."""
    if order < 1:
        raise ValueError("order must be >= 1")
    n = _prepare(engine, schedule)
    bitgen = sample_stream(base_seed, index)
    E = ProjectorProduct()
    bits, qubits, axes, ps, tails, clamped = "", [], [], [], [], []
    measured: set[int] = set()
    for _ in range(n):
        q, axis = schedule.next(bits, measured)
        est = engine.marginal(E, q, axis, beta, order)
        p0 = float(est.p_prime)
        b = 0 if _uniform(bitgen) < p0 else 1
        bits += str(b)
        qubits.append(q)
        axes.append(tuple(axis))
        ps.append(p0)
        tails.append(est.tail)
        clamped.append(est.clamped)
        measured.add(q)
        E = E.with_outcome(q, axis, b)
    return SampleRecord(bits, qubits, axes, ps, tails, base_seed, index, order, clamped)


def _worker(args):
    spec, strict, policy, beta, schedule, order, seed, indices = args
    engine = ClusterExpansion(spec, strict=strict, beta_policy=policy)
    return [sample_one(engine, beta, schedule, order, seed, i) for i in indices]


def sample_many(
    engine: ClusterExpansion,
    beta: float,
    schedule,
    order: int,
    base_seed: int,
    count: int,
    start: int = 0,
    jobs: int = 1,
) -> list[SampleRecord]:
    """Samples ``start .. start + count - 1``; output order is by index regardless of ``jobs``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    indices = list(range(start, start + count))
    if jobs <= 1 or count <= 1:
        return [sample_one(engine, beta, schedule, order, base_seed, i) for i in indices]
    chunks = [indices[k::jobs] for k in range(jobs) if indices[k::jobs]]
    strict = engine.constants.strict
    args = [(engine.spec, strict, engine.beta_policy, beta, schedule, order, base_seed, c) for c in chunks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_worker, args))
    records = {r.index: r for part in parts for r in part}
    return [records[i] for i in indices]


def explicit_distribution(engine: ClusterExpansion, beta: float, schedule, order: int) -> dict[str, float]:
    """``p'(x)`` for every outcome string, as the product of the step marginals.

    Probabilities keep the engine's scalar type, so a high-precision engine
    gives high-precision values.
    """
    n = engine.spec.num_qubits
    if n > MAX_EXPLICIT_QUBITS:
        raise ValueError(f"explicit distribution limited to {MAX_EXPLICIT_QUBITS} qubits")
    _prepare(engine, schedule)
    out: dict[str, float] = {}

    def walk(E, prefix, measured, prob):
        if len(prefix) == n:
            out[prefix] = prob
            return
        q, axis = schedule.next(prefix, measured)
        p0 = engine.marginal(E, q, axis, beta, order).p_prime
        if engine.scalar is float:
            p0 = float(p0)
        walk(E.with_outcome(q, axis, 0), prefix + "0", measured | {q}, prob * p0)
        walk(E.with_outcome(q, axis, 1), prefix + "1", measured | {q}, prob * (1 - p0))

    walk(ProjectorProduct(), "", frozenset(), engine.scalar(1))
    return out


def record_probability(record: SampleRecord) -> float:
    prob = 1.0
    for b, p in zip(record.bits, record.p_prime):
        prob = prob * (p if b == "0" else 1.0 - p)
    return prob


def estimate_expectation(samples: Sequence[SampleRecord], A) -> tuple[float, float]:
    """Sample mean of ``<x|A|x>`` and its standard error.

    ``A`` must be diagonal in the basis each sample actually measured on its
    support: every Pauli component must act, on each of its qubits, along
    that qubit's measurement axis.
    """
    comps = as_observable(A)
    if not samples:
        raise ValueError("no samples")
    values = np.empty(len(samples))
    for k, rec in enumerate(samples):
        where = {q: (i, rec.axes[i]) for i, q in enumerate(rec.qubits)}
        total = 0.0
        for c, p in comps:
            v = c
            for q, letter in p.letters.items():
                i, axis = where[q]
                comp = axis["XYZ".index(letter)]
                if abs(abs(comp) - 1.0) > 1e-12:
                    raise ValueError(
                        f"observable component {p} is not diagonal in the measured basis of qubit {q}; "
                        "use ClusterExpansion.observable_expectation instead"
                    )
                eig = comp if rec.bits[i] == "0" else -comp
                v *= eig
            total += v
        values[k] = total
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else math.inf
    return mean, stderr
