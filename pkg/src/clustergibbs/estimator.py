"""Estimator-style front end in the scikit-learn mould.

``fit`` binds a Hamiltonian and fixes the derived constants and truncation
order; ``sample`` draws outcome strings and ``score_samples`` returns their
log-probabilities under the sampler, in the spirit of a density estimator.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .expansion import ClusterExpansion, choose_order, tail_bound
from .model import HamiltonianSpec, derived_constants, load, loads
from .pauli import ProjectorProduct
from .sampler import (
    AdaptiveSchedule,
    StaticSchedule,
    explicit_distribution,
    sample_many,
    schedule_from_dict,
)

__all__ = ["ClusterExpansionSampler", "check_model", "check_outcomes"]


def check_model(X, strict: bool = True) -> HamiltonianSpec:
    """Accept a spec, a model dict, a JSON string or a path to a model file."""
    if isinstance(X, HamiltonianSpec):
        return X
    if isinstance(X, dict):
        import json

        return loads(json.dumps(X), strict=strict)
    if isinstance(X, Path) or (isinstance(X, str) and not X.lstrip().startswith("{")):
        return load(X, strict=strict)
    if isinstance(X, str):
        return loads(X, strict=strict)
    raise TypeError(f"cannot interpret {type(X).__name__} as a Hamiltonian")


def check_outcomes(X, num_qubits: int) -> np.ndarray:
    """2-D integer array of 0/1 outcomes, one column per qubit."""
    X = check_array(X, dtype=np.int64, ensure_2d=True)
    if X.shape[1] != num_qubits:
        raise ValueError(f"expected {num_qubits} columns, got {X.shape[1]}")
    if ((X != 0) & (X != 1)).any():
        raise ValueError("outcomes must be 0 or 1")
    return X


class ClusterExpansionSampler(BaseEstimator):
    """Sampler for measurement outcomes of a high-temperature Gibbs state.

    Parameters
    ----------
    beta : float or None
        Inverse temperature. ``None`` means half the convergence threshold.
    order : int or None
        Truncation order. When ``None`` it is chosen from ``alpha``.
    alpha : float
        Target per-step tail ``N**-alpha`` for automatic order selection.
    dd_mode : {"strict", "empirical"}
        Which overlap degree sets the threshold.
    beta_policy : {"error", "warn", "ignore"}
    schedule : StaticSchedule, AdaptiveSchedule, dict or None
        Measurement schedule; ``None`` measures every qubit in Z in index order.
    random_state : int or None
        Base seed of the per-sample random streams.
    n_jobs : int
    """

    def __init__(
        self,
        beta=None,
        order=None,
        alpha=2.0,
        dd_mode="strict",
        beta_policy="error",
        schedule=None,
        random_state=0,
        n_jobs=1,
    ):
        self.beta = beta
        self.order = order
        self.alpha = alpha
        self.dd_mode = dd_mode
        self.beta_policy = beta_policy
        self.schedule = schedule
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.dd_mode not in ("strict", "empirical"):
            raise ValueError(f"dd_mode must be 'strict' or 'empirical', got {self.dd_mode!r}")
        strict = self.dd_mode == "strict"
        spec = check_model(X, strict=strict)
        consts = derived_constants(spec, strict)
        beta = consts.beta_star / 2 if self.beta is None else float(self.beta)
        if not beta > 0:
            raise ValueError("beta must be positive")
        if self.order is None:
            order = choose_order(beta, consts.beta_star, spec.num_qubits, self.alpha)
        else:
            order = int(self.order)
            if order < 1:
                raise ValueError("order must be >= 1")
        self.spec_ = spec
        self.constants_ = consts
        self.beta_ = beta
        self.order_ = order
        self.tail_ = 0.5 * tail_bound(beta, consts.beta_star, order, self.beta_policy)
        self.engine_ = ClusterExpansion(spec, strict=strict, beta_policy=self.beta_policy, constants=consts)
        self.schedule_ = self._schedule(spec.num_qubits)
        self.n_features_in_ = spec.num_qubits
        return self

    def _schedule(self, n):
        s = self.schedule
        if s is None:
            s = StaticSchedule.z_basis(n)
        elif isinstance(s, dict):
            s = schedule_from_dict(s)
        elif not isinstance(s, (StaticSchedule, AdaptiveSchedule)):
            raise TypeError("schedule must be a StaticSchedule, AdaptiveSchedule or dict")
        s.validate(n)
        return s

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def sample_records(self, n_samples: int = 1, start: int = 0):
        check_is_fitted(self, "engine_")
        return sample_many(
            self.engine_, self.beta_, self.schedule_, self.order_, self._seed(), n_samples, start, self.n_jobs
        )

    def sample(self, n_samples: int = 1, start: int = 0) -> np.ndarray:
        """Outcome array of shape ``(n_samples, N)``; column ``q`` holds qubit ``q``."""
        records = self.sample_records(n_samples, start)
        out = np.zeros((n_samples, self.n_features_in_), dtype=np.int8)
        for row, rec in enumerate(records):
            for q, b in rec.outcomes().items():
                out[row, q] = b
        return out

    def score_samples(self, X) -> np.ndarray:
        """Log-probability of each outcome row under the sampler."""
        check_is_fitted(self, "engine_")
        X = check_outcomes(X, self.n_features_in_)
        out = np.empty(len(X))
        for row, x in enumerate(X):
            E = ProjectorProduct()
            prefix, measured, logp = "", set(), 0.0
            for _ in range(self.n_features_in_):
                q, axis = self.schedule_.next(prefix, measured)
                p0 = self.engine_.marginal(E, q, axis, self.beta_, self.order_).p_prime
                p = p0 if x[q] == 0 else 1.0 - p0
                logp += math.log(p) if p > 0 else -math.inf
                prefix += str(int(x[q]))
                measured.add(q)
                E = E.with_outcome(q, axis, int(x[q]))
            out[row] = logp
        return out

    def score(self, X, y=None) -> float:
        return float(self.score_samples(X).sum())

    def marginal(self, j: int, given: ProjectorProduct | None = None, axis="Z"):
        check_is_fitted(self, "engine_")
        return self.engine_.marginal(given, j, axis, self.beta_, self.order_)

    def expectation(self, A, given: ProjectorProduct | None = None):
        check_is_fitted(self, "engine_")
        return self.engine_.observable_expectation(A, self.beta_, self.order_, given)

    def correlation(self, i: int, j: int, op_i=(0.0, 0.0, 1.0), op_j=(0.0, 0.0, 1.0), given=None):
        check_is_fitted(self, "engine_")
        return self.engine_.correlation(given, i, j, op_i, op_j, self.beta_, self.order_)

    def explicit_distribution(self) -> dict[str, float]:
        check_is_fitted(self, "engine_")
        return explicit_distribution(self.engine_, self.beta_, self.schedule_, self.order_)
