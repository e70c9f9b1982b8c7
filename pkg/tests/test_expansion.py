import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clustergibbs.clusters import Cluster
from clustergibbs.expansion import (
    ClusterExpansion,
    GuaranteeVoidError,
    KappaJet,
    PairJet,
    as_observable,
    choose_order,
    pair_tail_bound,
    sequence_trace,
    series_exp,
    series_log,
    tail_bound,
)
from clustergibbs.model import from_terms
from clustergibbs.oracle import dense_gibbs, exact_correlation, exact_expectation, exact_marginal, connected_correlation
from clustergibbs.pauli import ProjectorProduct, parse_pauli, single_site
from clustergibbs.suite import random_chain

Z = (0.0, 0.0, 1.0)

# (1 - tanh 0.016) / 2, from a 30-digit evaluation
P_08Z = 0.492000682596768842745


def _ins(text):
    return [(1.0, parse_pauli(text))]


def _engine(terms, n, **kw):
    kw.setdefault("strict", False)
    return ClusterExpansion(from_terms(n, terms), **kw)


# -- sequence traces -----------------------------------------------------------------


def test_sequence_trace_empty():
    E = ProjectorProduct.from_outcomes([(0, "X", 1)])
    assert sequence_trace(E, _ins("Z1"), []).as_tuple() == (1, 0)


def test_sequence_trace_single():
    assert sequence_trace(ProjectorProduct(), _ins("Z1"), [parse_pauli("Z1")]).as_tuple() == (0, 1)


def test_sequence_trace_measured_neighbour():
    E = ProjectorProduct.from_outcomes([(0, "Z", 0)])
    assert sequence_trace(E, _ins("Z1"), [parse_pauli("Z0 Z1")]).as_tuple() == (0, 1)


# -- jets and series ------------------------------------------------------------------


def test_jet_truncation():
    a, b = KappaJet(2.0, 3.0), KappaJet(5.0, 7.0)
    assert (a * b).as_tuple() == (10.0, 29.0)
    assert (a / b * b).c1 == pytest.approx(a.c1)
    assert a.log().exp().as_tuple() == pytest.approx(a.as_tuple())
    p = PairJet(2.0, 1.0, 3.0, 5.0)
    q = p * PairJet(1.0, 2.0, 0.5, 1.0)
    assert q.cij == pytest.approx(2 * 1.0 + 1.0 * 0.5 + 3.0 * 2.0 + 5.0)
    assert (q / p).as_tuple() == pytest.approx((1.0, 2.0, 0.5, 1.0))
    assert p.log().exp().as_tuple() == pytest.approx(p.as_tuple())


@given(st.integers(0, 10**6))
def test_exp_of_log_recovers_series(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    top = tuple((a, int(rng.integers(1, 4))) for a in range(k))
    from clustergibbs.expansion import _lattice

    F = {V: KappaJet(float(rng.normal()), float(rng.normal())) for V in _lattice(top) if V}
    F[()] = KappaJet(1.0, float(rng.normal()))
    back = series_exp(series_log(F, top), top)
    for V in F:
        assert back[V].c0 == pytest.approx(F[V].c0, rel=1e-9, abs=1e-12)
        assert back[V].c1 == pytest.approx(F[V].c1, rel=1e-9, abs=1e-12)


# -- cluster contributions and gammas --------------------------------------------------


def test_single_site_contributions():
    lam = 0.7
    eng = _engine([("Z1", lam)], 2)
    ins = _ins("Z1")
    assert eng.cluster_contribution(Cluster.from_terms([0]), ProjectorProduct(), ins).c1 == pytest.approx(-lam)
    assert eng.cluster_contribution(Cluster.from_terms([0, 0]), ProjectorProduct(), ins).c1 == 0


def test_disconnected_contribution_vanishes(rng):
    spec = random_chain(8, rng)
    eng = ClusterExpansion(spec)
    far = [a for a, p in enumerate(spec.paulis) if min(p.support) >= 5]
    near = [a for a, p in enumerate(spec.paulis) if max(p.support) <= 1]
    E = ProjectorProduct.from_outcomes([(3, "X", 1), (6, "Z", 0)])
    for a in near:
        for b in far:
            W = Cluster.from_counts({a: 2, b: 1})
            jet = eng.cluster_contribution(W, E, _ins("Z0"))
            assert abs(jet.c1) <= 1e-12 and abs(jet.c0) <= 1e-12


@pytest.mark.parametrize("method", ["fast", "reference"])
def test_single_site_z_gammas(method):
    lam = 0.7
    eng = _engine([("Z0", lam)], 1)
    got = eng.gammas(0, None, 6, method=method)
    expected = [-lam, 0.0, lam**3 / 3, 0.0, -2 * lam**5 / 15, 0.0]
    assert got == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("method", ["fast", "reference"])
def test_transverse_field_gammas_vanish(method):
    eng = _engine([("X0", 0.9)], 1)
    assert eng.gammas(0, None, 6, method=method) == [0.0] * 6


def test_conditioned_zz_first_gamma():
    lam = 0.6
    eng = _engine([("Z0 Z1", lam)], 2)
    E = ProjectorProduct.from_outcomes([(0, "Z", 0)])
    assert eng.gamma(1, E, 1) == pytest.approx(-lam)
    assert eng.gammas(1, E, 5) == pytest.approx(_engine([("Z1", lam)], 2).gammas(1, None, 5))


def test_fast_matches_reference(rng):
    for n in (3, 5):
        spec = random_chain(n, rng)
        eng = ClusterExpansion(spec)
        for _ in range(5):
            j = int(rng.integers(n))
            E = ProjectorProduct.from_outcomes(
                [(q, "XYZ"[rng.integers(3)], int(rng.integers(2))) for q in range(n) if q != j and rng.random() < 0.5]
            )
            axis = tuple(v / np.linalg.norm(v) for v in [rng.normal(size=3)])[0]
            fast = eng.gammas(j, E, 5, axis, method="fast")
            ref = eng.gammas(j, E, 5, axis, method="reference")
            assert fast == pytest.approx(ref, abs=1e-14)


def test_gamma_requires_positive_order():
    eng = _engine([("Z0", 0.5)], 1)
    with pytest.raises(ValueError):
        eng.gamma(0, None, 0)
    with pytest.raises(ValueError):
        eng.gammas(0, None, 2, method="other")


def test_coefficient_bound_random_models(rng):
    for n in (4, 6):
        eng = ClusterExpansion(random_chain(n, rng))
        bs = eng.beta_star
        for j in range(n):
            for m, g in enumerate(eng.gammas(j, None, 6), start=1):
                assert abs(g) <= m * bs ** (-m)


# -- bounds and orders ---------------------------------------------------------------------


def test_tail_examples():
    assert tail_bound(0.5, 1.0, 0) == pytest.approx(2.0, rel=1e-15)
    assert tail_bound(0.5, 1.0, 3) == pytest.approx(0.625, rel=1e-15)
    assert tail_bound(1e-12, 1.0, 4) < 1e-50


@given(st.floats(0.0, 0.95), st.integers(0, 12))
def test_tail_closed_forms_match_sums(r, M):
    ms = np.arange(M + 1, 3000)
    assert tail_bound(r, 1.0, M) == pytest.approx(float(np.sum(ms * r**ms)), rel=1e-9, abs=1e-300)
    assert pair_tail_bound(r, 1.0, M) == pytest.approx(float(np.sum(ms**2 * r**ms)), rel=1e-9, abs=1e-300)


def test_tail_policies():
    with pytest.raises(GuaranteeVoidError):
        tail_bound(1.0, 1.0, 3)
    with pytest.warns(UserWarning):
        assert tail_bound(2.0, 1.0, 3, "warn") == math.inf
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert tail_bound(2.0, 1.0, 3, "ignore") == math.inf
    with pytest.raises(ValueError):
        tail_bound(2.0, 1.0, 3, "bogus")


def test_choose_order_examples():
    assert choose_order(0.1, 1.0, 1) == 1
    assert choose_order(0.5, 1.0, 1) == 2  # tail at M = 1 is 1.5
    assert choose_order(1 / math.e, 1.0, 100, 2.0) == 12
    r = 0.3
    eta = 2.0 / math.log(1 / r)
    for n in (10, 100, 1000):
        assert choose_order(r, 1.0, 2 * n) - choose_order(r, 1.0, n) <= math.ceil(eta * math.log(2)) + 1
    with pytest.raises(GuaranteeVoidError):
        choose_order(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        choose_order(0.1, 1.0, 10, alpha=1.0)


# -- marginals -------------------------------------------------------------------------


def test_transverse_field_marginal_is_half():
    eng = _engine([("X0", 0.8)], 1)
    for M in range(1, 7):
        assert eng.marginal(None, 0, "Z", 0.02, M).p_prime == 0.5


def test_single_site_marginal_value():
    eng = _engine([("Z0", 0.8)], 1)
    est = eng.marginal(None, 0, "Z", 0.02, 3)
    assert abs(est.p_prime - P_08Z) <= 0.02**5
    assert abs(est.p_prime - P_08Z) <= est.tail


def test_reported_tail_matches_closed_form():
    eng = _engine([("Z0", 0.9), ("X0", -0.4)], 1)
    beta = eng.beta_star / 2
    M = choose_order(beta, eng.beta_star, 10**2, 2.0)
    est = eng.marginal(None, 0, "Z", beta, M)
    assert est.tail == 0.5 * tail_bound(beta, eng.beta_star, M)
    assert est.tail <= 0.5e-4
    assert 0 <= est.p_prime <= 1 and not est.clamped


def test_marginal_clamps():
    eng = _engine([("Z0", 1.0)], 1, beta_policy="ignore")
    est = eng.marginal(None, 0, "Z", 3.0, 1)
    assert est.raw < 0 and est.p_prime == 0.0 and est.clamped


def test_marginal_errors():
    eng = ClusterExpansion(random_chain(3, 2))
    E = ProjectorProduct.from_outcomes([(1, "Z", 0)])
    with pytest.raises(ValueError):
        eng.marginal(E, 1, "Z", eng.beta_star / 2, 2)
    with pytest.raises(ValueError):
        eng.marginal(None, 0, "Z", 0.0, 2)
    with pytest.raises(GuaranteeVoidError):
        eng.marginal(None, 0, "Z", 2 * eng.beta_star, 2)


def test_gammas_do_not_depend_on_beta():
    eng = ClusterExpansion(random_chain(5, 3))
    a = eng.marginal(None, 2, "X", eng.beta_star / 2, 4).gammas
    b = eng.marginal(None, 2, "X", eng.beta_star / 7, 4).gammas
    assert a == b


def test_locality_bitwise(rng):
    n, j, m = 9, 0, 3
    spec = random_chain(n, rng)
    eng = ClusterExpansion(spec)
    base = eng.gammas(j, None, m)
    for b, p in enumerate(spec.paulis):
        if min(p.support) > m:  # k = 2, so beyond distance m (k - 1)
            other = ClusterExpansion(spec.with_coeff(b, -spec.coeffs[b] / 3))
            assert other.gammas(j, None, m) == base


def test_zero_field_symmetry(rng):
    n = 4
    terms = [(f"X{q} X{q + 1}", rng.uniform(-1, 1)) for q in range(n - 1)] + [(f"Y{q}", rng.uniform(-1, 1)) for q in range(n)]
    eng = ClusterExpansion(from_terms(n, terms))
    assert all(not p.commutes(single_site(1, "Z")) for p in eng.spec.paulis if 1 in p.support)
    for M in range(1, 6):
        assert eng.marginal(None, 1, "Z", eng.beta_star / 2, M).p_prime == 0.5


@pytest.mark.parametrize("M", [1, 2, 3])
def test_convergence_order(M):
    spec = random_chain(4, 11)
    eng = ClusterExpansion(spec, strict=False, beta_policy="ignore")
    E = ProjectorProduct.from_outcomes([(0, "X", 1)])
    errs = []
    for beta in (0.04, 0.02):
        exact = exact_marginal(dense_gibbs(spec, beta), E, 2, Z)
        errs.append(abs(eng.marginal(E, 2, Z, beta, M).p_prime - exact))
    assert errs[1] <= errs[0] * 2.0 ** (-(M + 1)) * 1.2


def test_marginal_matches_oracle_within_tail(rng):
    spec = random_chain(6, rng)
    eng = ClusterExpansion(spec)
    beta = eng.beta_star / 2
    state = dense_gibbs(spec, beta)
    E = ProjectorProduct.from_outcomes([(0, "Y", 1), (4, "X", 0)])
    for M in range(1, 6):
        est = eng.marginal(E, 2, "X", beta, M)
        assert abs(est.p_prime - exact_marginal(state, E, 2, "X")) <= est.tail


def test_high_precision_scalar():
    import mpmath

    with mpmath.workdps(30):
        eng = _engine([("Z0", 0.7)], 1, scalar=mpmath.mpf)
        g = eng.gammas(0, None, 5)
        assert isinstance(g[0], mpmath.mpf)
        assert abs(g[4] - mpmath.mpf(-2) * mpmath.mpf(0.7) ** 5 / 15) < mpmath.mpf(10) ** -25


# -- expectation values -----------------------------------------------------------------------


def test_z_expectation_is_twice_marginal_minus_one():
    eng = ClusterExpansion(random_chain(5, 4))
    beta = eng.beta_star / 2
    e = eng.observable_expectation("Z2", beta, 4)
    m = eng.marginal(None, 2, "Z", beta, 4)
    assert e.value == pytest.approx(2 * m.p_prime - 1, abs=1e-15)


def test_x_under_z_field_vanishes():
    eng = _engine([("Z1", 0.5)], 2)
    for M in range(1, 6):
        est = eng.observable_expectation("X1", 0.02, M)
        assert est.value == 0.0 and all(c == 0 for c in est.coefficients)


def test_zz_expectation():
    lam, beta = 0.6, 0.02
    eng = _engine([("Z0 Z1", lam)], 2)
    for M in (1, 3, 5):
        est = eng.observable_expectation("Z0 Z1", beta, M)
        assert abs(est.value + math.tanh(beta * lam)) <= 2 * (beta * lam) ** (M + 1)


def test_expectation_matches_oracle(rng):
    spec = random_chain(5, rng)
    eng = ClusterExpansion(spec)
    beta = eng.beta_star / 2
    E = ProjectorProduct.from_outcomes([(4, "X", 1)])
    A = {"Z0 Z1": 0.5, "X2": -0.3, "Y1 X2 Z3": 0.2}
    est = eng.observable_expectation(A, beta, 4, E)
    assert abs(est.value - exact_expectation(dense_gibbs(spec, beta), A, E)) <= est.tail


def test_expectation_errors():
    eng = _engine([("Z0 Z1", 0.5)], 3)
    with pytest.raises(ValueError, match="Hermitian"):
        eng.observable_expectation([(1j, "Z0")], 0.01, 2)
    with pytest.raises(ValueError, match="support"):
        eng.observable_expectation("Z0 Z1 Z2", 0.01, 2, max_support=2)
    with pytest.raises(ValueError):
        eng.observable_expectation("Z0", 0.01, 2, ProjectorProduct.from_outcomes([(0, "Z", 0)]))


def test_as_observable_merges():
    obs = as_observable([(0.5, "Z0"), (0.25, "Z0"), (1.0, "X1")])
    assert [(c, str(p)) for c, p in obs] == [(0.75, "Z0"), (1.0, "X1")]


# -- correlations ------------------------------------------------------------------------------


def test_far_pair_correlation_is_zero():
    spec = from_terms(8, [(f"Z{q} Z{q + 1}", 0.5) for q in range(7)])
    eng = ClusterExpansion(spec)
    est = eng.correlation(None, 0, 6, Z, Z, eng.beta_star / 2, 4)
    assert est.value == 0 and est.tail > 0


def test_zz_correlation_series():
    lam, beta = 0.6, 0.02
    eng = _engine([("Z0 Z1", lam)], 2)
    for M in (1, 3, 5):
        est = eng.correlation(None, 0, 1, Z, Z, beta, M)
        assert abs(est.value + math.tanh(beta * lam)) <= 2 * (beta * lam) ** (M + 1)


def test_correlation_matches_oracle(rng):
    spec = random_chain(6, rng)
    eng = ClusterExpansion(spec)
    beta = eng.beta_star / 2
    state = dense_gibbs(spec, beta)
    E = ProjectorProduct.from_outcomes([(5, "Y", 0)])
    value, u, v = exact_correlation(state, E, 1, 2, return_maximizer=True)
    est = eng.correlation(E, 1, 2, u, v, beta, 4)
    assert abs(est.value - value) <= est.tail
    assert abs(est.value - value) <= 1e-12
    op = (0.6, 0.0, 0.8)
    est = eng.correlation(E, 0, 3, op, Z, beta, 4)
    assert abs(est.value - connected_correlation(state, E, 0, 3, op, Z)) <= 1e-12


def test_correlation_errors():
    eng = _engine([("Z0 Z1", 0.5)], 2)
    E = ProjectorProduct.from_outcomes([(0, "Z", 0)])
    with pytest.raises(ValueError):
        eng.correlation(E, 0, 1, Z, Z, 0.01, 2)
    with pytest.raises(ValueError):
        eng.correlation(None, 1, 1, Z, Z, 0.01, 2)
    with pytest.raises(ValueError):
        eng.correlation(None, 0, 1, (1.0, 1.0, 0.0), Z, 0.01, 2)


def test_correlation_not_pruned_by_sparse_adjacency():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = from_terms(4, [("Z0 Z3", 0.6)], adjacency=[(0, 1), (1, 2), (2, 3)])
    eng = ClusterExpansion(spec, strict=False)
    est = eng.correlation(None, 0, 3, Z, Z, 0.02, 3)
    assert est.value == pytest.approx(-math.tanh(0.012), abs=2 * 0.012**4)
