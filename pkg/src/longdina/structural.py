"""Covariate-driven initial-mastery and transition models.

Each attribute follows its own logistic model: an initial-mastery logit at
wave 1, an acquisition logit for 0 -> 1 moves, and (in non-monotone mode) a
loss logit for 1 -> 0 moves. Under the monotone restriction mastery is an
absorbing state: the loss probability is pinned to exactly 0 and the loss
coefficients are ignored by every probability computation.

Profile-level initial distributions and transition matrices are products of
the per-attribute Bernoulli masses, in the canonical profile order.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as inverse_logit

from .errors import ConfigurationError, DimensionError, InputError
from .profiles import enumerate_profiles


@dataclass(frozen=True)
class StructuralParams:
    """Logistic coefficients for initial mastery and transitions.

    Each coefficient block is a (K, 1 + C) matrix: column 0 is the intercept,
    columns 1..C are covariate slopes. ``lose`` may be None under the
    monotone restriction, where it is ignored regardless.
    """

    initial: np.ndarray
    acquire: np.ndarray
    lose: np.ndarray | None = None
    monotone: bool = True

    def __post_init__(self):
        initial = np.atleast_2d(np.asarray(self.initial, dtype=float))
        acquire = np.atleast_2d(np.asarray(self.acquire, dtype=float))
        if initial.shape != acquire.shape:
            raise DimensionError(
                f"initial {initial.shape} and acquire {acquire.shape} must match"
            )
        lose = self.lose
        if lose is not None:
            lose = np.atleast_2d(np.asarray(lose, dtype=float))
            if lose.shape != initial.shape:
                raise DimensionError(
                    f"lose {lose.shape} must match initial {initial.shape}"
                )
            if not np.isfinite(lose).all():
                raise InputError("lose coefficients must be finite")
        elif not self.monotone:
            raise ConfigurationError("non-monotone params require lose coefficients")
        if not (np.isfinite(initial).all() and np.isfinite(acquire).all()):
            raise InputError("coefficients must be finite")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "acquire", acquire)
        object.__setattr__(self, "lose", lose)

    @property
    def n_attributes(self) -> int:
        return self.initial.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.initial.shape[1] - 1


def add_intercept(z: np.ndarray, n_covariates: int) -> np.ndarray:
    """Prepend an intercept column to an (N, C) covariate matrix."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != n_covariates:
        raise DimensionError(
            f"expected {n_covariates} covariate columns, got {z.shape[1]}"
        )
    if not np.isfinite(z).all():
        raise InputError("covariates must be finite")
    return np.hstack([np.ones((z.shape[0], 1)), z])


def _single_logit(coef_k, z_i) -> float:
    coef_k = np.asarray(coef_k, dtype=float)
    x = add_intercept(np.asarray(z_i, dtype=float).reshape(1, -1), coef_k.shape[0] - 1)
    return float(inverse_logit((x @ coef_k)[0]))


def initial_mastery_prob(coef_k, z_i) -> float:
    """Wave-1 mastery probability for one attribute: inverse-logit of
    intercept plus covariate effects."""
    return _single_logit(coef_k, z_i)


def acquisition_prob(acquire_k, z_i) -> float:
    """Probability of acquiring a non-mastered attribute between waves."""
    return _single_logit(acquire_k, z_i)


def loss_prob(lose_k, z_i, monotone: bool = True) -> float:
    """Probability of losing a mastered attribute; exactly 0 when monotone."""
    if monotone:
        return 0.0
    return _single_logit(lose_k, z_i)


def initial_mastery_matrix(params: StructuralParams, z: np.ndarray) -> np.ndarray:
    """(N, K) wave-1 mastery probabilities for all learners."""
    return inverse_logit(add_intercept(z, params.n_covariates) @ params.initial.T)


def acquisition_matrix(params: StructuralParams, z: np.ndarray) -> np.ndarray:
    """(N, K) acquisition probabilities for all learners."""
    return inverse_logit(add_intercept(z, params.n_covariates) @ params.acquire.T)


def loss_matrix(params: StructuralParams, z: np.ndarray) -> np.ndarray:
    """(N, K) loss probabilities; exact zeros when monotone."""
    x = add_intercept(z, params.n_covariates)
    if params.monotone:
        return np.zeros((x.shape[0], params.n_attributes))
    return inverse_logit(x @ params.lose.T)


def initial_profile_dist(params: StructuralParams, z_i) -> np.ndarray:
    """Wave-1 distribution over the 2**K profiles for one learner.

    Product over attributes of the Bernoulli initial-mastery masses, mapped
    onto canonical profile indices.
    """
    z_i = np.asarray(z_i, dtype=float).reshape(1, -1)
    return initial_profile_matrix(params, z_i)[0]


def initial_profile_matrix(params: StructuralParams, z: np.ndarray) -> np.ndarray:
    """(N, 2**K) wave-1 profile distributions for all learners."""
    marg = initial_mastery_matrix(params, z)
    profiles = enumerate_profiles(params.n_attributes)
    mass = np.where(profiles[None, :, :] == 1, marg[:, None, :], 1.0 - marg[:, None, :])
    return mass.prod(axis=2)


def transition_matrix(params: StructuralParams, z_i) -> np.ndarray:
    """(2**K, 2**K) row-stochastic profile transition matrix for one learner.

    Entry (r, c) is the product over attributes of the per-attribute
    Bernoulli transition mass: acquisition for attributes not mastered in r,
    loss (0 when monotone) for attributes mastered in r. The all-mastered
    profile is absorbing under the monotone restriction.
    """
    z_i = np.asarray(z_i, dtype=float).reshape(1, -1)
    return transition_tensor(params, z_i)[0]


def transition_tensor(params: StructuralParams, z: np.ndarray) -> np.ndarray:
    """(N, 2**K, 2**K) profile transition matrices for all learners."""
    acq = acquisition_matrix(params, z)
    los = loss_matrix(params, z)
    profiles = enumerate_profiles(params.n_attributes)
    src = profiles[None, :, None, :]  # (1, S, 1, K)
    dst = profiles[None, None, :, :]  # (1, 1, S, K)
    out = np.ones((acq.shape[0], profiles.shape[0], profiles.shape[0]))
    for k in range(params.n_attributes):
        a = acq[:, k][:, None, None]
        l = los[:, k][:, None, None]
        s_k = src[..., k]
        d_k = dst[..., k]
        mass = np.where(
            s_k == 0,
            np.where(d_k == 1, a, 1.0 - a),
            np.where(d_k == 0, l, 1.0 - l),
        )
        out *= mass
    return out
