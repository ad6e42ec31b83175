"""Input validation helpers shared by the estimator classes."""

import numpy as np

from .errors import DimensionError, InputError
from .measurement import QMatrix


def check_qmatrix(q) -> QMatrix:
    """Accept a QMatrix or anything array-like convertible into one."""
    return q if isinstance(q, QMatrix) else QMatrix(np.asarray(q))


def check_response_panel(responses, q: QMatrix) -> np.ndarray:
    """Validate an (N, J, T) binary response panel against a Q-matrix."""
    responses = np.asarray(responses)
    if responses.ndim != 3:
        raise DimensionError(f"responses must be (N, J, T), got shape {responses.shape}")
    if responses.shape[1] != q.n_items:
        raise DimensionError(
            f"responses have {responses.shape[1]} items, Q-matrix has {q.n_items}"
        )
    if not np.isin(responses, (0, 1)).all():
        raise InputError("responses must be binary (0/1)")
    return responses.astype(np.int8)


def check_covariates(covariates, n_learners: int) -> np.ndarray:
    """Validate an (N, C) covariate matrix; None means no covariates."""
    if covariates is None:
        return np.zeros((n_learners, 0))
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    if covariates.ndim != 2 or covariates.shape[0] != n_learners:
        raise DimensionError(
            f"covariates must be ({n_learners}, C), got shape {covariates.shape}"
        )
    if not np.isfinite(covariates).all():
        raise InputError("covariates must be finite")
    return covariates
