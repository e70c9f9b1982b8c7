"""Pauli strings with exact phase tracking, and their normalized traces
against products of single-qubit projectors.

A Pauli string is stored as a pair of bitmasks ``(x, z)`` over qubit indices
(I=(0,0), X=(1,0), Z=(0,1), Y=(1,1)) plus a phase exponent ``q`` so that the
operator is ``i**q`` times the tensor product of the letters.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

__all__ = [
    "PauliString",
    "ProjectorProduct",
    "PauliParseError",
    "multiply",
    "normalized_trace",
    "parse_pauli",
    "format_pauli",
    "basis_axis",
    "single_site",
]

_LETTER_BITS = {"X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
_TOKEN = re.compile(r"\S+")

AXIS_TOL = 1e-12


class PauliParseError(ValueError):
    """Raised for malformed Pauli text; ``position`` is the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


@dataclass(frozen=True)
class PauliString:
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.x < 0 or self.z < 0:
            raise ValueError("bitmasks must be non-negative")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_letters(cls, letters: Mapping[int, str], phase: int = 0) -> "PauliString":
        x = z = 0
        for q, letter in letters.items():
            if q < 0:
                raise ValueError(f"negative qubit index {q}")
            if letter == "I":
                continue
            try:
                bx, bz = _LETTER_BITS[letter]
            except KeyError:
                raise ValueError(f"unknown Pauli letter {letter!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(x, z, phase)

    @property
    def mask(self) -> int:
        return self.x | self.z

    @property
    def letters(self) -> dict[int, str]:
        out = {}
        m = self.mask
        while m:
            low = m & -m
            q = low.bit_length() - 1
            out[q] = "Y" if self.x & self.z & low else ("X" if self.x & low else "Z")
            m ^= low
        return out

    @property
    def support(self) -> frozenset[int]:
        return frozenset(_bits(self.mask))

    @property
    def weight(self) -> int:
        return self.mask.bit_count()

    @property
    def coefficient(self) -> complex:
        return 1j ** self.phase

    def letter(self, q: int) -> str:
        bx = (self.x >> q) & 1
        bz = (self.z >> q) & 1
        return "IZXY"[2 * bx + bz]

    def strip_phase(self) -> "PauliString":
        return PauliString(self.x, self.z, 0)

    def is_identity(self) -> bool:
        return self.mask == 0

    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    def commutes(self, other: "PauliString") -> bool:
        return ((self.x & other.z).bit_count() + (self.z & other.x).bit_count()) % 2 == 0

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __str__(self) -> str:
        prefix = ("", "i", "-", "-i")[self.phase]
        body = format_pauli(self.strip_phase())
        return prefix + (body or "I") if prefix else (body or "I")

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"


def _bits(m: int):
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def _phase_exponent(p: PauliString, q: PauliString) -> int:
    # Exponent of i picked up when multiplying the letters of p by those of q.
    px, pz, qx, qz = p.x, p.z, q.x, q.z
    pX, pY, pZ = px & ~pz, px & pz, pz & ~px
    qX, qY, qZ = qx & ~qz, qx & qz, qz & ~qx
    cyclic = ((pX & qY) | (pY & qZ) | (pZ & qX)).bit_count()
    anti = ((pY & qX) | (pZ & qY) | (pX & qZ)).bit_count()
    return cyclic - anti


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """Operator product ``p @ q`` with the phase kept exactly mod 4."""
    return PauliString(p.x ^ q.x, p.z ^ q.z, p.phase + q.phase + _phase_exponent(p, q))


def single_site(qubit: int, letter: str) -> PauliString:
    return PauliString.from_letters({qubit: letter})


def parse_pauli(text: str) -> PauliString:
    """Parse ``"Z0 Z1"``-style text; the empty string is the identity."""
    letters: dict[int, str] = {}
    for tok in _TOKEN.finditer(text):
        word, pos = tok.group(), tok.start()
        letter, digits = word[0], word[1:]
        if letter not in _LETTER_BITS:
            raise PauliParseError(f"unknown Pauli letter {letter!r}", pos)
        if digits.startswith("-"):
            raise PauliParseError(f"negative qubit index in {word!r}", pos)
        if not (digits.isascii() and digits.isdigit()):
            raise PauliParseError(f"malformed qubit index in {word!r}", pos)
        q = int(digits)
        if q in letters:
            raise PauliParseError(f"duplicate site {q}", pos)
        letters[q] = letter
    return PauliString.from_letters(letters)


def format_pauli(p: PauliString) -> str:
    """Canonical text (sorted by qubit); the phase is not part of the grammar."""
    return " ".join(f"{letter}{q}" for q, letter in sorted(p.letters.items()))


def basis_axis(basis) -> tuple[float, float, float]:
    """Unit axis for a named basis ("X", "Y", "Z") or an explicit 3-vector."""
    if isinstance(basis, str):
        try:
            i = _AXIS_INDEX[basis.upper()]
        except KeyError:
            raise ValueError(f"unknown basis {basis!r}") from None
        v = [0.0, 0.0, 0.0]
        v[i] = 1.0
        return tuple(v)
    v = tuple(float(c) for c in basis)
    if len(v) != 3:
        raise ValueError("basis vector must have 3 components")
    norm = math.sqrt(sum(c * c for c in v))
    if abs(norm - 1.0) > AXIS_TOL:
        raise ValueError(f"basis vector must be a unit vector, got norm {norm}")
    return v


@dataclass(frozen=True)
class ProjectorProduct:
    """Product of single-qubit projectors ``(I + v.sigma)/2`` on measured qubits.

    ``entries`` maps qubit -> unit axis. Outcome 1 of a measurement along
    ``axis`` is stored as the negated axis.
    """

    entries: Mapping[int, tuple[float, float, float]] = field(default_factory=dict)
    mask: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        clean = {}
        mask = 0
        for q, v in sorted(self.entries.items()):
            if q < 0:
                raise ValueError(f"negative qubit index {q}")
            v = tuple(v)
            norm = math.sqrt(sum(c * c for c in v))
            if len(v) != 3 or abs(norm - 1.0) > AXIS_TOL:
                raise ValueError(f"axis for qubit {q} is not a unit 3-vector")
            clean[q] = v
            mask |= 1 << q
        object.__setattr__(self, "entries", clean)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_outcomes(cls, measurements: Iterable[tuple[int, object, int]]) -> "ProjectorProduct":
        """Build from ``(qubit, basis, outcome)`` triples."""
        entries = {}
        for q, basis, outcome in measurements:
            if q in entries:
                raise ValueError(f"qubit {q} measured twice")
            entries[q] = _signed_axis(basis_axis(basis), outcome)
        return cls(entries)

    @property
    def n(self) -> int:
        return len(self.entries)

    def measured(self, qubit: int) -> bool:
        return bool((self.mask >> qubit) & 1)

    def with_outcome(self, qubit: int, axis: Sequence[float], outcome: int) -> "ProjectorProduct":
        if self.measured(qubit):
            raise ValueError(f"qubit {qubit} already measured")
        if qubit < 0:
            raise ValueError(f"negative qubit index {qubit}")
        v = _signed_axis(tuple(float(c) for c in axis), outcome)
        if len(v) != 3 or abs(math.sqrt(sum(c * c for c in v)) - 1.0) > AXIS_TOL:
            raise ValueError(f"axis for qubit {qubit} is not a unit 3-vector")
        entries = dict(self.entries)
        entries[qubit] = v
        if self.entries and qubit < next(reversed(self.entries)):
            entries = dict(sorted(entries.items()))
        # existing entries are already validated
        out = object.__new__(ProjectorProduct)
        object.__setattr__(out, "entries", entries)
        object.__setattr__(out, "mask", self.mask | (1 << qubit))
        return out

    def key(self) -> tuple:
        return tuple(self.entries.items())

    def __hash__(self):
        return hash(self.key())

    def __eq__(self, other):
        return isinstance(other, ProjectorProduct) and self.key() == other.key()


def _signed_axis(axis, outcome: int):
    if outcome not in (0, 1):
        raise ValueError(f"outcome must be 0 or 1, got {outcome!r}")
    return tuple(axis) if outcome == 0 else tuple(-c for c in axis)


def normalized_trace(E: ProjectorProduct, p: PauliString) -> complex:
    """``2**(n-N) Tr[E p]``; real unless the phase of ``p`` is odd."""
    if p.mask & ~E.mask:
        return 0
    value = 1.0
    x, z = p.x, p.z
    for q in _bits(p.mask):
        bx = (x >> q) & 1
        bz = (z >> q) & 1
        value *= E.entries[q][1 if bx and bz else (0 if bx else 2)]
    if p.phase == 0:
        return value
    if p.phase == 2:
        return -value
    return 1j * value if p.phase == 1 else -1j * value
