"""DINA measurement model: Q-matrix, item parameters, response probabilities,
and per-wave likelihood/posterior computations shared by both estimators.

All likelihood accumulation runs in log space with log-sum-exp normalization;
item parameters are clamped to the interior of (0, 1) before entering a
likelihood so boundary proposals cannot produce infinities.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DegenerateLikelihoodError, DimensionError
from .profiles import enumerate_profiles, ideal_response_table, profile_to_index

PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class QMatrix:
    """Binary J x K item-attribute loading structure, time-invariant.

    Every item must require at least one attribute and J >= K. Completeness
    (an identity submatrix: each attribute measured by at least one
    single-attribute item) is reported by :attr:`is_complete`; the built-in
    study designs all satisfy it.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        if entries.ndim != 2:
            raise DimensionError(f"Q-matrix must be 2-D, got shape {entries.shape}")
        if not np.isin(entries, (0, 1)).all():
            raise ConfigurationError("Q-matrix entries must be 0 or 1")
        if entries.shape[0] < entries.shape[1]:
            raise ConfigurationError(
                f"need at least as many items as attributes, got J={entries.shape[0]}"
                f" < K={entries.shape[1]}"
            )
        if (entries.sum(axis=1) == 0).any():
            bad = np.where(entries.sum(axis=1) == 0)[0]
            raise ConfigurationError(f"items {bad.tolist()} require no attributes")
        object.__setattr__(self, "entries", entries)

    @property
    def n_items(self) -> int:
        return self.entries.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.entries.shape[1]

    @property
    def is_complete(self) -> bool:
        """True if each attribute has at least one single-attribute item."""
        single = self.entries[self.entries.sum(axis=1) == 1]
        return bool((single.sum(axis=0) > 0).all()) if single.size else False

    def profiles(self) -> np.ndarray:
        return enumerate_profiles(self.n_attributes)

    def ideal_response_table(self) -> np.ndarray:
        """(2**K, J) table of conjunctive ideal responses."""
        return ideal_response_table(self.profiles(), self.entries)


@dataclass(frozen=True)
class ItemParams:
    """Per-item guessing and slipping probabilities."""

    guess: np.ndarray
    slip: np.ndarray

    def __post_init__(self):
        guess = np.asarray(self.guess, dtype=float)
        slip = np.asarray(self.slip, dtype=float)
        if guess.shape != slip.shape or guess.ndim != 1:
            raise DimensionError(
                f"guess and slip must be 1-D with equal length, got "
                f"{guess.shape} and {slip.shape}"
            )
        for name, arr in (("guess", guess), ("slip", slip)):
            if ((arr < 0) | (arr > 1)).any() or not np.isfinite(arr).all():
                raise ConfigurationError(f"{name} probabilities must lie in [0, 1]")
        object.__setattr__(self, "guess", guess)
        object.__setattr__(self, "slip", slip)

    @property
    def n_items(self) -> int:
        return self.guess.shape[0]

    def discriminates(self) -> bool:
        """True when every item satisfies guess < 1 - slip."""
        return bool((self.guess < 1.0 - self.slip).all())


def response_prob(eta_val: int, guess: float, slip: float) -> float:
    """Probability of a correct response given the ideal-response indicator.

    Returns 1 - slip when the learner masters all required attributes
    (eta_val = 1) and guess otherwise.
    """
    if not 0.0 <= guess <= 1.0 or not 0.0 <= slip <= 1.0:
        raise ConfigurationError("guess and slip must lie in [0, 1]")
    return 1.0 - slip if eta_val else guess


def correct_prob_table(params: ItemParams, q: QMatrix, clamp: float = PROB_CLAMP) -> np.ndarray:
    """(2**K, J) matrix of correct-response probabilities by profile and item.

    Probabilities are clamped to [clamp, 1 - clamp] so downstream log
    likelihoods stay finite even at boundary parameter values.
    """
    eta = q.ideal_response_table()
    pc = np.where(eta == 1, 1.0 - params.slip[None, :], params.guess[None, :])
    return np.clip(pc, clamp, 1.0 - clamp)


def wave_loglik_matrix(responses: np.ndarray, params: ItemParams, q: QMatrix) -> np.ndarray:
    """Log-likelihood of each learner's wave responses under every profile.

    Parameters
    ----------
    responses : ndarray of shape (N, J), binary
    params : ItemParams
    q : QMatrix

    Returns
    -------
    ndarray of shape (N, 2**K)
    """
    responses = np.asarray(responses, dtype=float)
    if responses.ndim != 2 or responses.shape[1] != q.n_items:
        raise DimensionError(
            f"responses must be (N, {q.n_items}), got {responses.shape}"
        )
    pc = correct_prob_table(params, q)
    return responses @ np.log(pc).T + (1.0 - responses) @ np.log1p(-pc).T


def wave_loglik(responses, profile, params: ItemParams, q: QMatrix) -> float:
    """Log-likelihood of one learner's responses at one wave for one profile.

    Sum over items of the log correct/incorrect response probability.
    """
    responses = np.asarray(responses, dtype=float)
    if responses.shape != (q.n_items,):
        raise DimensionError(
            f"responses must have length {q.n_items}, got shape {responses.shape}"
        )
    idx = profile_to_index(profile)
    return float(wave_loglik_matrix(responses[None, :], params, q)[0, idx])


def posterior_over_profiles(
    responses, params: ItemParams, q: QMatrix, prior: np.ndarray
) -> np.ndarray:
    """Bayes update of a prior over the 2**K profiles given one wave of responses.

    Parameters
    ----------
    responses : ndarray of shape (J,) or (N, J), binary
    prior : ndarray of shape (2**K,), nonnegative, sums to 1

    Returns
    -------
    ndarray of shape (2**K,) or (N, 2**K)
        Normalized posterior(s); computation is log-sum-exp stabilized.
    """
    prior = np.asarray(prior, dtype=float)
    n_profiles = 2**q.n_attributes
    if prior.shape != (n_profiles,):
        raise DimensionError(f"prior must have length {n_profiles}, got {prior.shape}")
    if (prior < 0).any() or not np.isclose(prior.sum(), 1.0, atol=1e-8):
        raise ConfigurationError("prior must be nonnegative and sum to 1")

    responses = np.asarray(responses)
    squeeze = responses.ndim == 1
    loglik = wave_loglik_matrix(np.atleast_2d(responses), params, q)
    with np.errstate(divide="ignore"):
        logpost = loglik + np.log(prior)[None, :]
    norm = logsumexp(logpost, axis=1)
    if not np.isfinite(norm).all():
        raise DegenerateLikelihoodError(
            "posterior mass is numerically zero for at least one learner"
        )
    post = np.exp(logpost - norm[:, None])
    return post[0] if squeeze else post
