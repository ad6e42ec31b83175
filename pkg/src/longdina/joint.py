"""Joint Bayesian estimator: Metropolis-within-Gibbs over the full model.

One sweep updates, in order: every latent profile (systematic scan over
waves, vectorized across learners, which is exact blocked Gibbs because
profiles are conditionally independent across learners given their
neighbors), the item parameters (conjugate Beta draws), and each structural
coefficient block (adaptive random-walk Metropolis, one block per attribute
per coefficient group).

Profile conditionals are exact categorical distributions over the 2**K
profiles, assembled in log space from the wave likelihood, the transition
mass from the previous wave (or the initial distribution at wave 1), and the
transition mass into the next wave. Proposal scales adapt during burn-in
toward an acceptance rate of 0.3 and freeze afterwards.
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import beta as beta_dist

from .errors import (
    ConfigurationError,
    DegenerateLikelihoodError,
    DimensionError,
    InvariantViolation,
)
from .measurement import ItemParams, QMatrix, wave_loglik_matrix
from .metrics import psrf
from .profiles import enumerate_profiles
from .simulate import split_rng
from .structural import (
    StructuralParams,
    add_intercept,
    initial_profile_matrix,
    transition_tensor,
)

logger = logging.getLogger(__name__)

ACCEPT_TARGET = 0.3
PROPOSAL_SD_RANGE = (1e-3, 10.0)


@dataclass(frozen=True)
class PriorSpec:
    """Priors: Beta(a, b) on item parameters, normal priors on coefficients.

    Loss-model intercepts get their own informative center (default -2 on
    the logit scale); under the monotone restriction loss coefficients are
    not sampled at all and the loss probability is pinned to 0.
    """

    item_a: float = 1.0
    item_b: float = 1.0
    coef_mean: float = 0.0
    coef_sd: float = 1.0
    lose_intercept_mean: float = -2.0
    lose_intercept_sd: float = 1.0
    monotone: bool = True

    def __post_init__(self):
        if self.item_a <= 0 or self.item_b <= 0:
            raise ConfigurationError("Beta hyperparameters must be positive")
        if self.coef_sd <= 0 or self.lose_intercept_sd <= 0:
            raise ConfigurationError("prior standard deviations must be positive")


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 2
    burn_in: int = 1000
    kept: int = 2000
    thin: int = 1
    proposal_sd: float = 0.25
    adapt_window: int = 50
    seed: int = 0

    def __post_init__(self):
        if min(self.chains, self.burn_in, self.kept, self.thin, self.adapt_window) < 1:
            raise ConfigurationError("all MCMC counts must be positive")
        if self.proposal_sd <= 0:
            raise ConfigurationError("proposal_sd must be positive")


@dataclass
class JointData:
    """Immutable per-fit precomputation shared by all kernels."""

    responses: np.ndarray  # (N, J, T) float
    covariates: np.ndarray  # (N, C)
    q: QMatrix
    eta_table: np.ndarray  # (S, J)
    profiles: np.ndarray  # (S, K)
    design: np.ndarray  # (N, 1 + C)

    @classmethod
    def build(cls, responses, covariates, q: QMatrix):
        responses = np.asarray(responses, dtype=float)
        if responses.ndim != 3 or responses.shape[1] != q.n_items:
            raise DimensionError(
                f"responses must be (N, {q.n_items}, T), got {responses.shape}"
            )
        covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        if covariates.shape[0] != responses.shape[0]:
            raise DimensionError("responses and covariates disagree on N")
        return cls(
            responses=responses,
            covariates=covariates,
            q=q,
            eta_table=q.ideal_response_table(),
            profiles=enumerate_profiles(q.n_attributes),
            design=add_intercept(covariates, covariates.shape[1]),
        )

    @property
    def n_learners(self):
        return self.responses.shape[0]

    @property
    def n_waves(self):
        return self.responses.shape[2]

    @property
    def n_profiles(self):
        return self.profiles.shape[0]


@dataclass
class JointState:
    """Mutable sampler state."""

    profile_idx: np.ndarray  # (N, T) ints in [0, 2**K)
    items: ItemParams
    initial: np.ndarray  # (K, 1 + C)
    acquire: np.ndarray
    lose: np.ndarray | None  # None under monotone

    def structural(self, monotone: bool) -> StructuralParams:
        return StructuralParams(
            initial=self.initial, acquire=self.acquire, lose=self.lose, monotone=monotone
        )


def _bernoulli_loglik(outcomes: np.ndarray, linpred: np.ndarray) -> float:
    """Sum of Bernoulli log masses with logistic success probability."""
    return float(
        -(np.logaddexp(0.0, -linpred)[outcomes == 1].sum())
        - (np.logaddexp(0.0, linpred)[outcomes == 0].sum())
    )


def _normal_logpdf(x: np.ndarray, mean, sd) -> float:
    x = np.asarray(x, dtype=float)
    return float(
        (-0.5 * ((x - mean) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2.0 * np.pi)).sum()
    )


def coeff_prior_logpdf(kind: str, theta: np.ndarray, priors: PriorSpec) -> float:
    """Log prior density of one coefficient block ('initial', 'acquire', 'lose')."""
    if kind == "lose":
        return _normal_logpdf(
            theta[0], priors.lose_intercept_mean, priors.lose_intercept_sd
        ) + _normal_logpdf(theta[1:], priors.coef_mean, priors.coef_sd)
    return _normal_logpdf(theta, priors.coef_mean, priors.coef_sd)


def _transition_outcomes(kind: str, k: int, state: JointState, data: JointData):
    """Stack the (outcome, design-row) pairs a transition block conditions on.

    'acquire': waves t-1 -> t where attribute k was not mastered at t-1;
    outcome is mastery at t. 'lose': waves where it was mastered; outcome is
    loss at t.
    """
    bits = data.profiles[:, k]
    rows = []
    outcomes = []
    for t in range(1, data.n_waves):
        prev = bits[state.profile_idx[:, t - 1]]
        cur = bits[state.profile_idx[:, t]]
        sel = prev == 0 if kind == "acquire" else prev == 1
        rows.append(data.design[sel])
        outcomes.append(cur[sel] if kind == "acquire" else 1 - cur[sel])
    if not rows:
        return np.zeros(0, dtype=np.int8), np.zeros((0, data.design.shape[1]))
    return np.concatenate(outcomes), np.vstack(rows)


def coeff_block_logpost(
    kind: str, k: int, theta: np.ndarray, state: JointState, data: JointData, priors: PriorSpec
) -> float:
    """Log posterior (up to a constant) of one attribute's coefficient block."""
    theta = np.asarray(theta, dtype=float)
    if kind == "initial":
        outcomes = data.profiles[state.profile_idx[:, 0], k]
        design = data.design
    else:
        outcomes, design = _transition_outcomes(kind, k, state, data)
    ll = _bernoulli_loglik(outcomes, design @ theta) if outcomes.size else 0.0
    return ll + coeff_prior_logpdf(kind, theta, priors)


def item_tallies(profile_idx: np.ndarray, responses: np.ndarray, eta_table: np.ndarray):
    """Per-item response counts by ideal-response stratum.

    Returns
    -------
    (n01, n00, n10, n11) : each ndarray of shape (J,)
        Among eta = 0 learner-waves: correct (n01) and incorrect (n00);
        among eta = 1: incorrect (n10) and correct (n11).
    """
    etas = eta_table[profile_idx, :]  # (N, T, J)
    y = np.moveaxis(responses, 1, 2)  # (N, T, J)
    n11 = (etas * y).sum(axis=(0, 1))
    n10 = (etas * (1 - y)).sum(axis=(0, 1))
    n01 = ((1 - etas) * y).sum(axis=(0, 1))
    n00 = ((1 - etas) * (1 - y)).sum(axis=(0, 1))
    return n01, n00, n10, n11


def sample_item_params(state: JointState, data: JointData, priors: PriorSpec, rng) -> None:
    """Conjugate Gibbs update of guessing and slipping, in place."""
    n01, n00, n10, n11 = item_tallies(state.profile_idx, data.responses, data.eta_table)
    state.items = ItemParams(
        guess=rng.beta(priors.item_a + n01, priors.item_b + n00),
        slip=rng.beta(priors.item_a + n10, priors.item_b + n11),
    )


def _structural_logs(state: JointState, data: JointData, monotone: bool):
    """Log initial-profile matrix and log transition tensor at the current
    coefficients (transition part only when there are multiple waves)."""
    params = state.structural(monotone)
    with np.errstate(divide="ignore"):
        log_init = np.log(initial_profile_matrix(params, data.covariates))
        log_trans = (
            np.log(transition_tensor(params, data.covariates))
            if data.n_waves > 1
            else None
        )
    return log_init, log_trans


def wave_conditional_logmass(
    state: JointState,
    data: JointData,
    t: int,
    monotone: bool,
    log_init: np.ndarray | None = None,
    log_trans: np.ndarray | None = None,
):
    """(N, S) unnormalized log conditional mass of wave-t profiles.

    Combines the wave likelihood with the structural mass from the previous
    wave (initial distribution at t = 0) and into the next wave (omitted at
    t = T - 1).
    """
    if log_init is None:
        log_init, log_trans = _structural_logs(state, data, monotone)
    logmass = wave_loglik_matrix(data.responses[:, :, t], state.items, data.q)
    rows = np.arange(data.n_learners)
    if t == 0:
        logmass += log_init
    else:
        logmass += log_trans[rows, state.profile_idx[:, t - 1], :]
    if t < data.n_waves - 1:
        logmass += log_trans[rows, :, state.profile_idx[:, t + 1]]
    return logmass


def sample_profile_conditional(
    learner: int, t: int, state: JointState, data: JointData, rng, monotone: bool = True
) -> np.ndarray:
    """Draw one learner-wave profile from its exact full conditional."""
    logmass = wave_conditional_logmass(state, data, t, monotone)[learner]
    norm = logsumexp(logmass)
    if not np.isfinite(norm):
        raise DegenerateLikelihoodError(
            f"all profile masses are zero for learner {learner}, wave {t}"
        )
    probs = np.exp(logmass - norm)
    idx = rng.choice(data.n_profiles, p=probs)
    return data.profiles[idx].copy()


def _categorical_rows(probs: np.ndarray, rng) -> np.ndarray:
    """Draw one category per row of a row-stochastic matrix."""
    u = rng.random((probs.shape[0], 1))
    idx = (probs.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def sweep_profiles(state: JointState, data: JointData, priors: PriorSpec, rng) -> None:
    """Systematic scan over waves; each wave is an exact blocked Gibbs draw
    across learners."""
    log_init, log_trans = _structural_logs(state, data, priors.monotone)
    for t in range(data.n_waves):
        logmass = wave_conditional_logmass(
            state, data, t, priors.monotone, log_init, log_trans
        )
        norm = logsumexp(logmass, axis=1)
        if not np.isfinite(norm).all():
            bad = np.where(~np.isfinite(norm))[0]
            raise DegenerateLikelihoodError(
                f"all profile masses are zero at wave {t} for learners {bad.tolist()}"
            )
        probs = np.exp(logmass - norm[:, None])
        state.profile_idx[:, t] = _categorical_rows(probs, rng)


@dataclass
class _Block:
    kind: str
    attribute: int
    sd: float
    accepted_window: int = 0
    proposed_window: int = 0
    accepted_kept: int = 0
    proposed_kept: int = 0

    @property
    def name(self) -> str:
        return f"{self.kind}[{self.attribute + 1}]"


def mh_update_block(
    block: _Block, state: JointState, data: JointData, priors: PriorSpec, rng
) -> bool:
    """One adaptive random-walk Metropolis step on a coefficient block."""
    current = {
        "initial": state.initial,
        "acquire": state.acquire,
        "lose": state.lose,
    }[block.kind][block.attribute].copy()
    current_lp = coeff_block_logpost(block.kind, block.attribute, current, state, data, priors)
    if not np.isfinite(current_lp):
        raise InvariantViolation(
            f"non-finite log posterior at current state for block {block.name}"
        )
    proposal = current + rng.normal(0.0, block.sd, size=current.shape)
    proposal_lp = coeff_block_logpost(
        block.kind, block.attribute, proposal, state, data, priors
    )
    accept = np.log(rng.random()) < proposal_lp - current_lp
    if accept:
        {
            "initial": state.initial,
            "acquire": state.acquire,
            "lose": state.lose,
        }[block.kind][block.attribute] = proposal
    return bool(accept)


def joint_log_density(state: JointState, data: JointData, priors: PriorSpec) -> float:
    """Full joint log density: measurement likelihood, structural likelihood,
    and priors. Used by invariant tests; the samplers work with per-block
    conditionals that differ from this only by constants."""
    rows = np.arange(data.n_learners)
    total = 0.0
    for t in range(data.n_waves):
        ll = wave_loglik_matrix(data.responses[:, :, t], state.items, data.q)
        total += float(ll[rows, state.profile_idx[:, t]].sum())

    params = state.structural(priors.monotone)
    with np.errstate(divide="ignore"):
        init = np.log(initial_profile_matrix(params, data.covariates))
        total += float(init[rows, state.profile_idx[:, 0]].sum())
        if data.n_waves > 1:
            trans = np.log(transition_tensor(params, data.covariates))
            for t in range(1, data.n_waves):
                total += float(
                    trans[rows, state.profile_idx[:, t - 1], state.profile_idx[:, t]].sum()
                )

    total += float(
        beta_dist.logpdf(state.items.guess, priors.item_a, priors.item_b).sum()
        + beta_dist.logpdf(state.items.slip, priors.item_a, priors.item_b).sum()
    )
    for k in range(params.n_attributes):
        total += coeff_prior_logpdf("initial", state.initial[k], priors)
        total += coeff_prior_logpdf("acquire", state.acquire[k], priors)
        if not priors.monotone:
            total += coeff_prior_logpdf("lose", state.lose[k], priors)
    return total


def initialize_state(data: JointData, priors: PriorSpec, rng) -> JointState:
    """Overdispersed starting point: profiles drawn from per-wave posteriors
    under neutral items (guess = slip = 0.25), coefficients from their
    priors, item parameters at 0.2."""
    n_attr = data.q.n_attributes
    n_cov = data.covariates.shape[1]
    neutral = ItemParams(
        guess=np.full(data.q.n_items, 0.25), slip=np.full(data.q.n_items, 0.25)
    )
    profile_idx = np.empty((data.n_learners, data.n_waves), dtype=np.int64)
    for t in range(data.n_waves):
        loglik = wave_loglik_matrix(data.responses[:, :, t], neutral, data.q)
        probs = np.exp(loglik - logsumexp(loglik, axis=1)[:, None])
        u = rng.random((data.n_learners, 1))
        profile_idx[:, t] = (probs.cumsum(axis=1) < u).sum(axis=1)
    if priors.monotone:
        # bitwise-OR with the previous wave keeps the start monotone-consistent
        for t in range(1, data.n_waves):
            profile_idx[:, t] |= profile_idx[:, t - 1]

    shape = (n_attr, 1 + n_cov)
    lose = None
    if not priors.monotone:
        lose = rng.normal(priors.coef_mean, priors.coef_sd, size=shape)
        lose[:, 0] = rng.normal(priors.lose_intercept_mean, priors.lose_intercept_sd, size=n_attr)
    return JointState(
        profile_idx=profile_idx,
        items=ItemParams(
            guess=np.full(data.q.n_items, 0.2), slip=np.full(data.q.n_items, 0.2)
        ),
        initial=rng.normal(priors.coef_mean, priors.coef_sd, size=shape),
        acquire=rng.normal(priors.coef_mean, priors.coef_sd, size=shape),
        lose=lose,
    )


@dataclass
class ChainResult:
    """Kept draws and bookkeeping for one chain."""

    draws: dict  # group name -> (n_stored, ...) array
    profile_counts: np.ndarray  # (N, T, S)
    accept_rates: dict  # block name -> post-burn-in rate
    proposal_sds: dict  # block name -> frozen sd


def run_chain(
    data: JointData, priors: PriorSpec, mcmc: McmcConfig, chain_index: int
) -> ChainResult:
    """Run one chain: burn-in with proposal adaptation, then kept sweeps."""
    rng = split_rng(mcmc.seed, "chain", chain_index)
    state = initialize_state(data, priors, rng)
    n_attr = data.q.n_attributes

    kinds = ["initial", "acquire"] + ([] if priors.monotone else ["lose"])
    blocks = [_Block(kind, k, mcmc.proposal_sd) for kind in kinds for k in range(n_attr)]

    stored = {"guess": [], "slip": [], "initial": [], "acquire": []}
    if not priors.monotone:
        stored["lose"] = []
    profile_counts = np.zeros(
        (data.n_learners, data.n_waves, data.n_profiles), dtype=np.int64
    )
    rows = np.arange(data.n_learners)

    total_sweeps = mcmc.burn_in + mcmc.kept
    for sweep in range(total_sweeps):
        burning = sweep < mcmc.burn_in
        sweep_profiles(state, data, priors, rng)
        sample_item_params(state, data, priors, rng)
        for block in blocks:
            accepted = mh_update_block(block, state, data, priors, rng)
            if burning:
                block.proposed_window += 1
                block.accepted_window += int(accepted)
                if block.proposed_window == mcmc.adapt_window:
                    rate = block.accepted_window / block.proposed_window
                    block.sd = float(
                        np.clip(block.sd * np.exp(rate - ACCEPT_TARGET), *PROPOSAL_SD_RANGE)
                    )
                    block.accepted_window = 0
                    block.proposed_window = 0
            else:
                block.proposed_kept += 1
                block.accepted_kept += int(accepted)

        if not burning and (sweep - mcmc.burn_in) % mcmc.thin == 0:
            stored["guess"].append(state.items.guess.copy())
            stored["slip"].append(state.items.slip.copy())
            stored["initial"].append(state.initial.copy())
            stored["acquire"].append(state.acquire.copy())
            if not priors.monotone:
                stored["lose"].append(state.lose.copy())
            for t in range(data.n_waves):
                profile_counts[rows, t, state.profile_idx[:, t]] += 1

    return ChainResult(
        draws={k: np.asarray(v) for k, v in stored.items()},
        profile_counts=profile_counts,
        accept_rates={
            b.name: (b.accepted_kept / b.proposed_kept if b.proposed_kept else 0.0)
            for b in blocks
        },
        proposal_sds={b.name: b.sd for b in blocks},
    )


@dataclass(frozen=True)
class ParameterSummary:
    mean: float
    sd: float
    lower95: float
    upper95: float
    psrf: float


@dataclass(frozen=True)
class PosteriorSummary:
    """Pooled posterior summaries over all chains."""

    params: dict  # name -> ParameterSummary
    map_profiles: np.ndarray  # (N, T) profile indices
    map_profile_bits: np.ndarray  # (N, T, K)
    acceptance_rates: dict
    psrf_max: float
    converged: bool
    n_chains: int
    n_kept: int

    def point_estimates(self, group: str, shape) -> np.ndarray:
        """Posterior means of one group reshaped to its natural shape."""
        flat = [v.mean for name, v in self.params.items() if name.startswith(group + "[")]
        return np.asarray(flat).reshape(shape)


def _param_names(group: str, shape) -> list:
    if len(shape) == 1:
        return [f"{group}[{j + 1}]" for j in range(shape[0])]
    return [
        f"{group}[{k + 1},{c}]" for k in range(shape[0]) for c in range(shape[1])
    ]


def summarize_chains(
    chain_results, profiles: np.ndarray, psrf_threshold: float = 1.2
) -> PosteriorSummary:
    """Pool chains into per-parameter summaries, PSRF, and MAP profiles.

    Pooling is symmetric in the chain order: means, quantiles, and counts use
    the concatenated draws; PSRF is invariant to chain relabeling.
    """
    first = chain_results[0]
    params = {}
    psrf_values = []
    for group, arr in first.draws.items():
        names = _param_names(group, arr.shape[1:])
        per_chain = [cr.draws[group].reshape(cr.draws[group].shape[0], -1) for cr in chain_results]
        pooled = np.concatenate(per_chain, axis=0)
        for col, name in enumerate(names):
            draws_matrix = np.stack([pc[:, col] for pc in per_chain])
            enough = len(chain_results) >= 2 and draws_matrix.shape[1] >= 10
            rhat = psrf(draws_matrix) if enough else float("nan")
            # canonical (sorted) order makes pooled moments exactly invariant
            # to chain relabeling
            col_draws = np.sort(pooled[:, col])
            params[name] = ParameterSummary(
                mean=float(col_draws.mean()),
                sd=float(col_draws.std(ddof=1)),
                lower95=float(np.quantile(col_draws, 0.025)),
                upper95=float(np.quantile(col_draws, 0.975)),
                psrf=float(rhat),
            )
            psrf_values.append(rhat)

    counts = sum(cr.profile_counts for cr in chain_results)
    map_profiles = counts.argmax(axis=2)
    accept = {}
    for name in first.accept_rates:
        accept[name] = float(
            np.mean(np.sort([cr.accept_rates[name] for cr in chain_results]))
        )
    valid = [v for v in psrf_values if not np.isnan(v)]
    psrf_max = float(max(valid)) if valid else float("nan")
    return PosteriorSummary(
        params=params,
        map_profiles=map_profiles,
        map_profile_bits=profiles[map_profiles],
        acceptance_rates=accept,
        psrf_max=psrf_max,
        converged=bool(psrf_max < psrf_threshold),
        n_chains=len(chain_results),
        n_kept=sum(cr.draws["guess"].shape[0] for cr in chain_results),
    )


def fit_joint(
    responses,
    covariates,
    q: QMatrix,
    priors: PriorSpec = PriorSpec(),
    mcmc: McmcConfig = McmcConfig(),
    psrf_threshold: float = 1.2,
    trace_path=None,
) -> PosteriorSummary:
    """Fit the joint model by MCMC and return pooled posterior summaries.

    Chains start from randomly chosen initial values and can be compared via
    PSRF; a summary whose maximum PSRF exceeds ``psrf_threshold`` is flagged
    non-converged but still returned. Point estimates are posterior means;
    profile estimates are per-learner-wave marginal MAP assignments.
    """
    data = JointData.build(responses, covariates, q)
    if not q.is_complete:
        logger.warning(
            "Q-matrix lacks a single-attribute item for some attribute; "
            "the model may be poorly identified"
        )
    chain_results = [run_chain(data, priors, mcmc, c) for c in range(mcmc.chains)]
    if trace_path is not None:
        _dump_traces(trace_path, chain_results)
    summary = summarize_chains(chain_results, data.profiles, psrf_threshold)
    if not summary.converged:
        logger.warning("max PSRF %.3f exceeds %.2f", summary.psrf_max, psrf_threshold)
    return summary


def _dump_traces(path, chain_results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iteration", "parameter", "value"])
        for c_idx, cr in enumerate(chain_results):
            for group, arr in cr.draws.items():
                names = _param_names(group, arr.shape[1:])
                flat = arr.reshape(arr.shape[0], -1)
                for it in range(flat.shape[0]):
                    for name, value in zip(names, flat[it]):
                        w.writerow([c_idx + 1, it + 1, name, repr(float(value))])
