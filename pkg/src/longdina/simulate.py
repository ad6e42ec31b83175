"""Synthetic longitudinal dataset generation.

Generates equicorrelated MVN covariates, wave-1 profiles from the
initial-mastery model, later waves from the acquisition/loss model (monotone
by default), and DINA responses. Ships the built-in study Q-matrices for
J = 6, 18, 30 and the default generating coefficients.

Reproducibility: one master 64-bit seed; every stage and replication derives
its own stream through a counter-based split, so generation is deterministic
and safe under parallel execution.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .measurement import ItemParams, QMatrix
from .structural import (
    StructuralParams,
    acquisition_matrix,
    initial_mastery_matrix,
    loss_matrix,
)

_BUILTIN_LENGTHS = (6, 18, 30)

# Mid-range mastery and acquisition rates keep both transition directions
# observable at the study's N; all overridable through GenConfig.
DEFAULT_TRUE_PARAMS = StructuralParams(
    initial=np.array([[0.0, 0.5, 0.5, 0.5], [0.0, 0.5, 0.5, 0.5]]),
    acquire=np.array([[-1.0, 0.5, 0.5, 0.5], [-1.0, 0.5, 0.5, 0.5]]),
    monotone=True,
)


def split_rng(seed: int, *path) -> np.random.Generator:
    """Derive an independent RNG stream from a master seed and a path.

    Path components may be ints or short strings (hashed with CRC32); equal
    paths always yield the same stream.
    """
    key = tuple(
        c if isinstance(c, (int, np.integer)) else zlib.crc32(str(c).encode())
        for c in path
    )
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def builtin_qmatrix(n_items: int) -> QMatrix:
    """The built-in two-attribute study Q-matrix for J in {6, 18, 30}.

    Single-attribute items alternate between the two attributes; the final
    block of items (one for J=6, four for J=18, six for J=30) requires both.
    """
    if n_items not in _BUILTIN_LENGTHS:
        raise ConfigurationError(
            f"no built-in Q-matrix for J={n_items}; supported: {_BUILTIN_LENGTHS}"
        )
    n_both = {6: 1, 18: 4, 30: 6}[n_items]
    rows = []
    for j in range(n_items - n_both):
        rows.append([1, 0] if j % 2 == 0 else [0, 1])
    rows.extend([[1, 1]] * n_both)
    return QMatrix(np.array(rows, dtype=np.int8))


@dataclass(frozen=True)
class GenConfig:
    """One simulation design cell.

    rho is the common covariate correlation; it must keep the equicorrelation
    matrix positive definite, i.e. rho in (-1/(C-1), 1).
    """

    n_learners: int = 200
    n_items: int = 6
    n_attributes: int = 2
    n_waves: int = 2
    n_covariates: int = 3
    rho: float = 0.4
    item_range: tuple = (0.15, 0.25)
    true_params: StructuralParams = DEFAULT_TRUE_PARAMS
    seed: int = 0
    qmatrix: QMatrix | None = None

    def __post_init__(self):
        if min(self.n_learners, self.n_items, self.n_waves) < 1:
            raise ConfigurationError("n_learners, n_items, n_waves must be >= 1")
        lo, hi = self.item_range
        if not 0.0 < lo <= hi < 0.5:
            raise ConfigurationError(
                f"item_range must lie inside (0, 0.5), got {self.item_range}"
            )
        _check_equicorrelation(self.rho, self.n_covariates)
        if self.true_params.n_attributes != self.n_attributes:
            raise DimensionError(
                f"true_params have {self.true_params.n_attributes} attributes, "
                f"config says {self.n_attributes}"
            )
        if self.true_params.n_covariates != self.n_covariates:
            raise DimensionError(
                f"true_params have {self.true_params.n_covariates} covariates, "
                f"config says {self.n_covariates}"
            )
        if self.qmatrix is not None and self.qmatrix.n_items != self.n_items:
            raise DimensionError(
                f"Q-matrix has {self.qmatrix.n_items} items, config says {self.n_items}"
            )

    def resolve_qmatrix(self) -> QMatrix:
        return self.qmatrix if self.qmatrix is not None else builtin_qmatrix(self.n_items)


@dataclass(frozen=True)
class Dataset:
    """A generated dataset bundled with its ground truth."""

    responses: np.ndarray  # (N, J, T) binary
    covariates: np.ndarray  # (N, C), standardized
    true_profiles: np.ndarray  # (N, T, K) binary
    true_items: ItemParams
    qmatrix: QMatrix
    config: GenConfig

    @property
    def n_learners(self) -> int:
        return self.responses.shape[0]

    @property
    def n_waves(self) -> int:
        return self.responses.shape[2]

    def content_hash(self) -> str:
        """SHA-256 over all data arrays; equal hashes mean identical datasets."""
        import hashlib

        h = hashlib.sha256()
        for arr in (
            self.responses,
            self.covariates,
            self.true_profiles,
            self.true_items.guess,
            self.true_items.slip,
            self.qmatrix.entries,
        ):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _check_equicorrelation(rho: float, n_covariates: int):
    if n_covariates <= 0:
        return
    lower = -1.0 / (n_covariates - 1) if n_covariates > 1 else -1.0
    if not lower < rho < 1.0:
        raise ConfigurationError(
            f"rho={rho} leaves the equicorrelation matrix non-positive-definite "
            f"for C={n_covariates} (need rho in ({lower:.4f}, 1))"
        )


def gen_covariates(n_learners: int, n_covariates: int, rho: float, rng) -> np.ndarray:
    """Draw i.i.d. MVN(0, equicorrelation(rho)) rows, then standardize each
    column to sample mean 0 and sample variance 1."""
    _check_equicorrelation(rho, n_covariates)
    if n_covariates == 0:
        return np.zeros((n_learners, 0))
    sigma = np.full((n_covariates, n_covariates), rho)
    np.fill_diagonal(sigma, 1.0)
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((n_learners, n_covariates)) @ chol.T
    z -= z.mean(axis=0)
    sd = z.std(axis=0)
    sd[sd == 0] = 1.0
    return z / sd


def gen_item_params(n_items: int, item_range, rng) -> ItemParams:
    """Draw guessing and slipping probabilities i.i.d. uniform on item_range;
    items are held constant across waves."""
    lo, hi = item_range
    return ItemParams(
        guess=rng.uniform(lo, hi, size=n_items),
        slip=rng.uniform(lo, hi, size=n_items),
    )


def gen_profiles(
    covariates: np.ndarray, true_params: StructuralParams, n_waves: int, rng
) -> np.ndarray:
    """Draw (N, T, K) mastery indicators: wave 1 from the initial-mastery
    model, later waves from the acquisition/loss model."""
    n = covariates.shape[0]
    k = true_params.n_attributes
    out = np.empty((n, n_waves, k), dtype=np.int8)
    p1 = initial_mastery_matrix(true_params, covariates)
    out[:, 0, :] = rng.random((n, k)) < p1
    if n_waves > 1:
        acq = acquisition_matrix(true_params, covariates)
        los = loss_matrix(true_params, covariates)
        for t in range(1, n_waves):
            prev = out[:, t - 1, :]
            p_master = np.where(prev == 1, 1.0 - los, acq)
            out[:, t, :] = rng.random((n, k)) < p_master
    return out


def gen_responses(
    profiles: np.ndarray, qmatrix: QMatrix, item_params: ItemParams, rng
) -> np.ndarray:
    """Draw (N, J, T) DINA responses given true profiles."""
    n, n_waves, k = profiles.shape
    if k != qmatrix.n_attributes:
        raise DimensionError(
            f"profiles have {k} attributes, Q-matrix has {qmatrix.n_attributes}"
        )
    eta_table = qmatrix.ideal_response_table()
    weights = 1 << np.arange(k)
    out = np.empty((n, qmatrix.n_items, n_waves), dtype=np.int8)
    p_correct = np.where(
        eta_table == 1, 1.0 - item_params.slip[None, :], item_params.guess[None, :]
    )  # (S, J)
    for t in range(n_waves):
        idx = profiles[:, t, :] @ weights
        out[:, :, t] = rng.random((n, qmatrix.n_items)) < p_correct[idx, :]
    return out


def gen_dataset(config: GenConfig) -> Dataset:
    """Generate one dataset; deterministic for a fixed config (incl. seed)."""
    q = config.resolve_qmatrix()
    covariates = gen_covariates(
        config.n_learners,
        config.n_covariates,
        config.rho,
        split_rng(config.seed, "covariates"),
    )
    items = gen_item_params(config.n_items, config.item_range, split_rng(config.seed, "items"))
    profiles = gen_profiles(
        covariates, config.true_params, config.n_waves, split_rng(config.seed, "profiles")
    )
    responses = gen_responses(profiles, q, items, split_rng(config.seed, "responses"))
    return Dataset(
        responses=responses,
        covariates=covariates,
        true_profiles=profiles,
        true_items=items,
        qmatrix=q,
        config=config,
    )
