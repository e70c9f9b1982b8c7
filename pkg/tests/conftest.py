import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense(p, n):
    """Independent dense matrix of a PauliString (qubit 0 leftmost)."""
    out = np.array([[1j ** p.phase]])
    for q in range(n):
        out = np.kron(out, SIGMA[p.letter(q)])
    return out


def dense_projector(E, n):
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        v = E.entries.get(q)
        if v is None:
            m = SIGMA["I"]
        else:
            m = (SIGMA["I"] + v[0] * SIGMA["X"] + v[1] * SIGMA["Y"] + v[2] * SIGMA["Z"]) / 2
        out = np.kron(out, m)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
