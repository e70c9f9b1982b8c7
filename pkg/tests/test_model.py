import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clustergibbs.model import (
    ModelError,
    beta_star,
    derived_constants,
    from_terms,
    load,
    loads,
    overlap_degree,
    qubit_distance,
    term_overlap_graph,
)
from clustergibbs.suite import BUNDLED, load_bundled, random_chain


def _file(tmp_path, data):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(data))
    return path


def test_load_single_term(tmp_path):
    spec = load(_file(tmp_path, {"num_qubits": 2, "terms": [{"pauli": "Z0 Z1", "coeff": -0.5}]}))
    assert spec.num_terms == 1 and spec.locality == 2
    assert spec.coeffs == (-0.5,)


def test_duplicates_merge(tmp_path):
    data = {"num_qubits": 2, "terms": [{"pauli": "Z0 Z1", "coeff": 0.3}, {"pauli": "Z1 Z0", "coeff": 0.3}]}
    spec = load(_file(tmp_path, data))
    assert spec.num_terms == 1
    assert spec.coeffs[0] == pytest.approx(0.6)


def test_strict_rejects_large_coeff(tmp_path):
    data = {"num_qubits": 1, "terms": [{"pauli": "Z0", "coeff": 1.5}]}
    with pytest.raises(ModelError):
        load(_file(tmp_path, data))
    with pytest.warns(UserWarning):
        spec = load(_file(tmp_path, data), strict=False)
    assert spec.coeffs == (1.5,)


@pytest.mark.parametrize(
    "data",
    [
        {"num_qubits": 2, "terms": [{"pauli": "Z2", "coeff": 0.1}]},
        {"num_qubits": 0, "terms": []},
        {"num_qubits": 2},
        {"num_qubits": 2, "terms": [{"pauli": "Q0", "coeff": 0.1}]},
        {"num_qubits": 2, "terms": [{"pauli": "Z0", "coeff": "a"}]},
        {"num_qubits": 2, "terms": [{"pauli": "", "coeff": 0.1}]},
        {"num_qubits": 2, "terms": [], "extra": 1},
        {"num_qubits": 2, "terms": [], "adjacency": [[0, 5]]},
        [1, 2],
    ],
)
def test_invalid_models(data):
    with pytest.raises(ModelError):
        loads(json.dumps(data))


def test_malformed_json():
    with pytest.raises(ModelError):
        loads("{not json")


def test_unknown_keys_warn_when_not_strict():
    with pytest.warns(UserWarning):
        loads(json.dumps({"num_qubits": 1, "terms": [], "note": "x"}), strict=False)


def test_overlap_examples():
    chain = from_terms(3, [("Z0 Z1", 1.0), ("Z1 Z2", 1.0)])
    assert overlap_degree(chain, strict=False) == 1
    # Brute-force count with the nine single-site Paulis adjoined: term Z0 Z1
    # meets Z1 Z2 plus the three letters on each of qubits 0 and 1.
    assert overlap_degree(chain, strict=True) == 7
    assert overlap_degree(from_terms(1, [("Z0", 0.5)]), strict=False) == 0


def test_beta_star_values():
    assert beta_star(1) == pytest.approx(0.0338338208091531729, rel=1e-14)
    assert beta_star(2) == pytest.approx(0.0112779402697177243, rel=1e-14)
    assert beta_star(0) == beta_star(1)
    with pytest.raises(ValueError):
        beta_star(-1)


def test_beta_star_decreasing():
    values = [beta_star(d) for d in range(1, 50)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_derived_constants():
    spec = from_terms(3, [("Z0 Z1", 1.0), ("Z1 Z2", 1.0)])
    c = derived_constants(spec, strict=False)
    assert (c.k, c.dd) == (2, 1)
    assert c.c_enum == pytest.approx(math.log(1 * 2**5))
    assert c.beta_star == beta_star(1)


def test_overlap_graph_examples():
    chain = from_terms(4, [("Z0 Z1", 1), ("Z1 Z2", 1), ("Z2 Z3", 1)])
    assert term_overlap_graph(chain) == [[1], [0, 2], [1]]
    assert term_overlap_graph(from_terms(6, [("Z0", 1), ("Z5", 1)])) == [[], []]
    assert term_overlap_graph(from_terms(3, [("X1", 1), ("Z1 Z2", 1)])) == [[1], [0]]


@given(st.integers(0, 10**6))
def test_overlap_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    spec = random_chain(int(rng.integers(2, 7)), rng)
    perm = rng.permutation(spec.num_terms)
    shuffled = from_terms(spec.num_qubits, [(spec.paulis[i], spec.coeffs[i]) for i in perm])
    for strict in (True, False):
        assert overlap_degree(shuffled, strict) == overlap_degree(spec, strict)
    assert overlap_degree(spec, True) >= overlap_degree(spec, False)


def test_phase_in_term_flips_sign():
    from clustergibbs.pauli import PauliString

    spec = from_terms(1, [(PauliString.from_letters({0: "Z"}, phase=2), 0.25)])
    assert spec.coeffs == (-0.25,)
    with pytest.raises(ModelError):
        from_terms(1, [(PauliString.from_letters({0: "Z"}, phase=1), 0.25)])


def test_distance_and_diameter_warning():
    spec = from_terms(4, [("Z0 Z1", 1), ("Z1 Z2", 1), ("Z2 Z3", 1)])
    assert qubit_distance(spec, 0) == [0, 1, 2, 3]
    with pytest.warns(UserWarning, match="diameter"):
        from_terms(4, [("Z0 Z3", 0.5)], adjacency=[(0, 1), (1, 2), (2, 3)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        from_terms(3, [("Z0 Z1", 0.5)], adjacency=[(0, 1), (1, 2)])


def test_round_trip_dict():
    spec = random_chain(5, 3)
    again = loads(json.dumps(spec.to_dict()))
    assert again == spec


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_models_load(name):
    spec = load_bundled(name)
    assert spec.num_qubits >= 8
    assert all(abs(c) <= 1 for c in spec.coeffs)
