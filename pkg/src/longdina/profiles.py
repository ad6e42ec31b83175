"""Attribute-profile space: enumeration, indexing, and the conjunctive response rule.

The canonical profile order is fixed package-wide: attribute 1 is the least
significant bit, so profile index ``i`` has bits equal to the binary digits of
``i``. Classification-error matrices, transition matrices, and posteriors all
share this ordering.
"""

import numpy as np

from .errors import ConfigurationError, DimensionError

MAX_ATTRIBUTES = 16


def enumerate_profiles(n_attributes: int) -> np.ndarray:
    """Return all 2**K mastery profiles in canonical order.

    Parameters
    ----------
    n_attributes : int
        Number of attributes K, 1 <= K <= 16.

    Returns
    -------
    ndarray of shape (2**K, K), dtype int8
        Row ``i`` holds the binary digits of ``i``, attribute 1 first.
    """
    if not 1 <= n_attributes <= MAX_ATTRIBUTES:
        raise ConfigurationError(
            f"n_attributes must be in [1, {MAX_ATTRIBUTES}], got {n_attributes}"
        )
    index = np.arange(2**n_attributes)
    bits = (index[:, None] >> np.arange(n_attributes)[None, :]) & 1
    return bits.astype(np.int8)


def profile_to_index(bits) -> int:
    """Map a K-bit mastery vector to its canonical profile index."""
    bits = np.asarray(bits)
    return int(bits @ (1 << np.arange(bits.shape[-1])))


def index_to_profile(index: int, n_attributes: int) -> np.ndarray:
    """Map a canonical profile index back to its K-bit mastery vector."""
    if not 0 <= index < 2**n_attributes:
        raise ConfigurationError(
            f"profile index {index} out of range for K={n_attributes}"
        )
    return ((index >> np.arange(n_attributes)) & 1).astype(np.int8)


def ideal_response(profile, q_row) -> int:
    """Conjunctive (noisy-and) indicator: 1 iff the profile masters every
    attribute the item requires.

    An item requiring no attributes yields 1 (vacuous product).
    """
    profile = np.asarray(profile)
    q_row = np.asarray(q_row)
    if profile.shape != q_row.shape:
        raise DimensionError(
            f"profile has shape {profile.shape} but q_row has shape {q_row.shape}"
        )
    return int(np.all(profile >= q_row))


def ideal_response_table(profiles: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Ideal responses for every (profile, item) pair.

    Parameters
    ----------
    profiles : ndarray of shape (S, K)
    q : ndarray of shape (J, K)

    Returns
    -------
    ndarray of shape (S, J), dtype int8
    """
    profiles = np.asarray(profiles)
    q = np.asarray(q)
    if profiles.shape[1] != q.shape[1]:
        raise DimensionError(
            f"profiles have {profiles.shape[1]} attributes but Q has {q.shape[1]}"
        )
    # eta(p, j) = 1 iff no required attribute is missing
    missing = (q[None, :, :] == 1) & (profiles[:, None, :] == 0)
    return (~missing.any(axis=2)).astype(np.int8)
