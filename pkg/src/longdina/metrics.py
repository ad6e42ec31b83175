"""Evaluation metrics and MCMC diagnostics.

MAE/RMSE are taken over replications of a scalar parameter estimate; AAR is
the attribute-wise agreement rate between estimated and true mastery states;
PSRF is the classic two-or-more-chain Gelman-Rubin statistic without chain
splitting, matching the study's two-chain setup.
"""

import numpy as np

from .errors import DimensionError


def mae(estimates, truth: float) -> float:
    """Mean absolute error of replication estimates around a scalar truth."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise DimensionError("need at least one estimate")
    return float(np.mean(np.abs(estimates - truth)))


def rmse(estimates, truth: float) -> float:
    """Root mean square error of replication estimates around a scalar truth."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise DimensionError("need at least one estimate")
    return float(np.sqrt(np.mean((estimates - truth) ** 2)))


def aar(estimated_profiles, true_profiles) -> np.ndarray:
    """Attribute accuracy rate per (attribute, wave).

    Parameters
    ----------
    estimated_profiles, true_profiles : ndarray
        Binary mastery arrays of shape (N, T, K), or (R, N, T, K) for a
        stack of replications.

    Returns
    -------
    ndarray of shape (K, T)
        Mean agreement over learners (and replications), per attribute and
        wave.
    """
    est = np.asarray(estimated_profiles)
    tru = np.asarray(true_profiles)
    if est.shape != tru.shape:
        raise DimensionError(f"shape mismatch: {est.shape} vs {tru.shape}")
    if est.ndim not in (3, 4):
        raise DimensionError("profiles must be (N, T, K) or (R, N, T, K)")
    agree = (est == tru).astype(float)
    axes = tuple(range(agree.ndim - 2))  # collapse replication/learner axes
    return agree.mean(axis=axes).T  # (T, K) -> (K, T)


def psrf(chains) -> float:
    """Gelman-Rubin potential scale reduction factor for one scalar parameter.

    Parameters
    ----------
    chains : ndarray of shape (M, n)
        M >= 2 chains of n >= 10 post-burn-in draws each.

    Notes
    -----
    Classic (non-split) variant: with within-chain variance W and
    between-chain variance B, returns sqrt(((n-1)/n * W + B/n) / W). Equal
    constant chains give 1.0; constant chains at different values give inf.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise DimensionError("chains must be (M, n) with M >= 2")
    m, n = chains.shape
    if n < 10:
        raise DimensionError(f"need at least 10 draws per chain, got {n}")
    within = chains.var(axis=1, ddof=1).mean()
    means = chains.mean(axis=1)
    between = n * means.var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def psrf_lower_bound(n: int) -> float:
    """Deterministic lower bound of the PSRF formula: sqrt((n-1)/n)."""
    return float(np.sqrt((n - 1) / n))


def mc_error(replication_values) -> float:
    """Monte Carlo standard error of a replication mean: sd / sqrt(R).

    Uses the population standard deviation, so for binary values this equals
    sqrt(p(1-p)/R).
    """
    values = np.asarray(replication_values, dtype=float)
    if values.size < 2:
        raise DimensionError("need at least two replication values")
    return float(values.std(ddof=0) / np.sqrt(values.size))


def mc_error_proportion(p: float, n_replications: int) -> float:
    """Monte Carlo standard error of a proportion: sqrt(p(1-p)/R)."""
    if not 0.0 <= p <= 1.0:
        raise DimensionError(f"proportion must lie in [0, 1], got {p}")
    if n_replications < 1:
        raise DimensionError("need at least one replication")
    return float(np.sqrt(p * (1.0 - p) / n_replications))
