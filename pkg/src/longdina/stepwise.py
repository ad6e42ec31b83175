"""Bias-corrected three-step estimator.

Step 1 fits a DINA model independently at each wave by marginal maximum
likelihood (EM over item parameters and profile mixing weights). Step 2
hard-assigns each learner to the posterior-mode profile and estimates a
per-wave classification-error-probability (CEP) matrix from the Step-1
posteriors. Step 3 maximizes the misclassification-corrected likelihood of
the assigned profile sequences over the structural coefficients, summing out
the true latent sequence with a forward recursion over the 2**K states.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import ConfigurationError, DimensionError, EmDivergenceError, InputError
from .measurement import PROB_CLAMP, ItemParams, QMatrix, wave_loglik_matrix
from .simulate import split_rng
from .structural import StructuralParams, initial_profile_matrix, transition_tensor

logger = logging.getLogger(__name__)

EM_DECREASE_TOL = 1e-8
CEP_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class WaveFit:
    """Step-1 marginal-ML DINA fit for one wave."""

    item_params: ItemParams
    class_weights: np.ndarray
    posteriors: np.ndarray  # (N, 2**K)
    loglik: float
    n_iter: int
    loglik_path: np.ndarray
    converged: bool
    flagged_items: tuple = ()


@dataclass(frozen=True)
class OptimizerConfig:
    """Step-3 quasi-Newton settings."""

    n_starts: int = 5
    grad_step: float = 1e-5
    gtol: float = 1e-5
    ftol_rel: float = 1e-10
    max_iter: int = 500
    coef_bound: float = 15.0  # |logit| <= 15 keeps estimates finite on flat ridges


@dataclass(frozen=True)
class StepwiseResult:
    """Everything the three-step procedure produced."""

    wave_fits: tuple
    assignments: np.ndarray  # (N, T) profile indices
    ceps: tuple  # per-wave (S, S) matrices, entry (r, s) = P(assigned r | true s)
    cep_degenerate: tuple  # per-wave tuples of degenerate column indices
    params: StructuralParams
    loglik: float
    optimizer_status: str
    start_logliks: np.ndarray


def fit_dina_em(
    responses: np.ndarray, q: QMatrix, tol: float = 1e-6, max_iter: int = 500
) -> WaveFit:
    """Marginal maximum likelihood for one wave's DINA model via EM.

    E-step: profile posteriors per learner under the current item parameters
    and mixing weights. M-step: weights become the mean posterior; guessing
    and slipping become posterior-weighted correct/incorrect rates within the
    eta = 0 / eta = 1 strata. Stops when the log-likelihood gain drops below
    ``tol`` or after ``max_iter`` iterations.

    Raises
    ------
    EmDivergenceError
        If the log-likelihood decreases by more than 1e-8 between
        iterations (EM monotonicity breach).
    """
    if tol <= 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    responses = np.asarray(responses, dtype=float)
    if responses.ndim != 2 or responses.shape[1] != q.n_items:
        raise DimensionError(f"responses must be (N, {q.n_items}), got {responses.shape}")
    n = responses.shape[0]
    n_profiles = 2**q.n_attributes
    eta = q.ideal_response_table().astype(float)  # (S, J)
    item_total = responses.sum(axis=0)

    params = ItemParams(guess=np.full(q.n_items, 0.2), slip=np.full(q.n_items, 0.2))
    weights = np.full(n_profiles, 1.0 / n_profiles)
    flagged: set[int] = set()
    path: list[float] = []
    ll_prev = None
    converged = False

    def e_step(params, weights):
        with np.errstate(divide="ignore"):
            logpost = wave_loglik_matrix(responses, params, q) + np.log(weights)[None, :]
        norm = logsumexp(logpost, axis=1)
        return np.exp(logpost - norm[:, None]), float(norm.sum())

    for _ in range(max_iter):
        post, ll = e_step(params, weights)
        if ll_prev is not None:
            if ll < ll_prev - EM_DECREASE_TOL:
                raise EmDivergenceError(
                    f"EM log-likelihood decreased from {ll_prev} to {ll}"
                )
            if ll - ll_prev < tol:
                converged = True
                path.append(ll)
                break
        path.append(ll)
        ll_prev = ll

        weights = post.mean(axis=0)
        expected_eta = post @ eta  # (N, J)
        n1 = expected_eta.sum(axis=0)
        r1 = (responses * expected_eta).sum(axis=0)
        n0 = n - n1
        r0 = item_total - r1
        new_slip = params.slip.copy()
        new_guess = params.guess.copy()
        ok1 = n1 > 1e-10
        ok0 = n0 > 1e-10
        new_slip[ok1] = (n1[ok1] - r1[ok1]) / n1[ok1]
        new_guess[ok0] = r0[ok0] / n0[ok0]
        flagged.update(np.where(~ok1)[0].tolist())
        flagged.update(np.where(~ok0)[0].tolist())
        params = ItemParams(
            guess=np.clip(new_guess, PROB_CLAMP, 1.0 - PROB_CLAMP),
            slip=np.clip(new_slip, PROB_CLAMP, 1.0 - PROB_CLAMP),
        )
    else:
        post, ll = e_step(params, weights)
        path.append(ll)

    return WaveFit(
        item_params=params,
        class_weights=weights,
        posteriors=post,
        loglik=path[-1],
        n_iter=len(path),
        loglik_path=np.asarray(path),
        converged=converged,
        flagged_items=tuple(sorted(flagged)),
    )


def map_assign(posteriors: np.ndarray) -> np.ndarray:
    """Posterior-mode profile per learner; ties break to the lowest index."""
    posteriors = np.asarray(posteriors)
    if posteriors.ndim != 2:
        raise DimensionError(f"posteriors must be (N, S), got {posteriors.shape}")
    return posteriors.argmax(axis=1)


def estimate_cep(posteriors: np.ndarray, assignments: np.ndarray):
    """Classification-error-probability matrix from posteriors and assignments.

    Entry (r, s) is the posterior-weighted share of learners assigned to
    profile r among posterior mass on true profile s; columns sum to 1. A
    column whose posterior mass is below 1e-12 (profile absent from the
    sample) is replaced by a point mass at r = s and reported as degenerate.

    Returns
    -------
    (m, degenerate) : ((S, S) ndarray, tuple of int)
    """
    posteriors = np.asarray(posteriors, dtype=float)
    assignments = np.asarray(assignments)
    if posteriors.shape[0] != assignments.shape[0]:
        raise DimensionError("posteriors and assignments disagree on N")
    n_profiles = posteriors.shape[1]
    denom = posteriors.sum(axis=0)  # per true profile s
    num = np.zeros((n_profiles, n_profiles))
    for r in range(n_profiles):
        picked = posteriors[assignments == r]
        if picked.size:
            num[r] = picked.sum(axis=0)
    m = np.empty_like(num)
    degenerate = []
    for s in range(n_profiles):
        if denom[s] < CEP_DEGENERATE_TOL:
            m[:, s] = 0.0
            m[s, s] = 1.0
            degenerate.append(s)
        else:
            m[:, s] = num[:, s] / denom[s]
    if degenerate:
        logger.warning("CEP columns %s degenerate; replaced by point mass", degenerate)
    return m, tuple(degenerate)


def pack_coefficients(params: StructuralParams) -> np.ndarray:
    """Flatten structural coefficients into one optimizer vector."""
    parts = [params.initial.ravel(), params.acquire.ravel()]
    if not params.monotone:
        parts.append(params.lose.ravel())
    return np.concatenate(parts)


def unpack_coefficients(
    theta: np.ndarray, n_attributes: int, n_covariates: int, monotone: bool
) -> StructuralParams:
    """Inverse of :func:`pack_coefficients`."""
    theta = np.asarray(theta, dtype=float)
    block = n_attributes * (1 + n_covariates)
    expected = 2 * block if monotone else 3 * block
    if theta.shape != (expected,):
        raise DimensionError(f"theta must have length {expected}, got {theta.shape}")
    shape = (n_attributes, 1 + n_covariates)
    return StructuralParams(
        initial=theta[:block].reshape(shape),
        acquire=theta[block : 2 * block].reshape(shape),
        lose=None if monotone else theta[2 * block :].reshape(shape),
        monotone=monotone,
    )


def step3_loglik(
    theta: np.ndarray,
    assignments: np.ndarray,
    ceps,
    covariates: np.ndarray,
    monotone: bool = True,
) -> float:
    """Misclassification-corrected log-likelihood of assigned profile sequences.

    Sums, for every learner, over all latent profile sequences the product of
    the initial profile mass, the per-step transition masses, and the CEP
    entries linking latent profiles to the observed assignments; computed by
    a forward recursion over the 2**K states with per-step rescaling.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.isfinite(theta).all():
        raise InputError("structural coefficients must be finite")
    assignments = np.asarray(assignments)
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    n, n_waves = assignments.shape
    n_profiles = ceps[0].shape[0]
    n_attributes = int(np.log2(n_profiles))
    if len(ceps) != n_waves:
        raise DimensionError(f"need {n_waves} CEP matrices, got {len(ceps)}")
    params = unpack_coefficients(theta, n_attributes, covariates.shape[1], monotone)

    alpha = initial_profile_matrix(params, covariates) * ceps[0][assignments[:, 0], :]
    total = np.zeros(n)
    dead = np.zeros(n, dtype=bool)
    if n_waves > 1:
        trans = transition_tensor(params, covariates)  # time-invariant covariates
    for t in range(n_waves):
        if t > 0:
            alpha = np.einsum("ns,nsc->nc", alpha, trans) * ceps[t][assignments[:, t], :]
        scale = alpha.sum(axis=1)
        alive = scale > 0.0
        dead |= ~alive
        total[alive] += np.log(scale[alive])
        alpha[alive] /= scale[alive, None]
        alpha[~alive] = 0.0
    if dead.any():
        logger.debug("zero corrected likelihood for learners %s", np.where(dead)[0].tolist())
        return float("-inf")
    return float(total.sum())


def fit_structural_corrected(
    assignments: np.ndarray,
    ceps,
    covariates: np.ndarray,
    monotone: bool = True,
    opt: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
):
    """Maximize the corrected likelihood over the structural coefficients.

    Quasi-Newton (L-BFGS-B) ascent with central finite-difference gradients,
    multi-started from zeros plus prior draws; the best optimum is retained.

    Returns
    -------
    (params, loglik, status, start_logliks)
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    n_profiles = ceps[0].shape[0]
    n_attributes = int(np.log2(n_profiles))
    n_covariates = covariates.shape[1]
    block = n_attributes * (1 + n_covariates)
    dim = 2 * block if monotone else 3 * block

    # at extreme coefficients the logistic saturates and some learner's
    # corrected likelihood is exactly zero; a large finite penalty keeps the
    # line search well-behaved where the log-likelihood is -inf
    penalty = 1e12

    def objective(theta):
        value = step3_loglik(theta, assignments, ceps, covariates, monotone)
        return -value if np.isfinite(value) else penalty

    h = opt.grad_step

    def gradient(theta):
        g = np.empty_like(theta)
        for d in range(theta.size):
            step = np.zeros_like(theta)
            step[d] = h
            g[d] = (objective(theta + step) - objective(theta - step)) / (2.0 * h)
        return g

    rng = split_rng(seed, "step3-starts")
    starts = [np.zeros(dim)]
    for _ in range(max(0, opt.n_starts - 1)):
        draw = rng.normal(0.0, 1.0, size=dim)
        if not monotone:
            # loss intercepts start near the informative prior center
            lose_icpt = 2 * block + np.arange(n_attributes) * (1 + n_covariates)
            draw[lose_icpt] = rng.normal(-2.0, 1.0, size=n_attributes)
        starts.append(draw)

    bounds = [(-opt.coef_bound, opt.coef_bound)] * dim
    best = None
    start_logliks = np.full(len(starts), -np.inf)
    any_converged = False
    for s_idx, x0 in enumerate(starts):
        res = minimize(
            objective,
            x0,
            jac=gradient,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opt.max_iter, "gtol": opt.gtol, "ftol": opt.ftol_rel},
        )
        start_logliks[s_idx] = -res.fun
        any_converged = any_converged or bool(res.success)
        if best is None or -res.fun > -best.fun:
            best = res

    status = "ok" if any_converged else "optimizer-failure"
    params = unpack_coefficients(best.x, n_attributes, n_covariates, monotone)
    return params, float(-best.fun), status, start_logliks


def fit_stepwise(
    responses: np.ndarray,
    covariates: np.ndarray,
    q: QMatrix,
    monotone: bool = True,
    em_tol: float = 1e-6,
    em_max_iter: int = 500,
    opt: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
) -> StepwiseResult:
    """Run the full three-step procedure on an (N, J, T) response panel."""
    responses = np.asarray(responses)
    if responses.ndim != 3:
        raise DimensionError(f"responses must be (N, J, T), got {responses.shape}")
    n, _, n_waves = responses.shape

    wave_fits = []
    for t in range(n_waves):
        wave_fits.append(fit_dina_em(responses[:, :, t], q, tol=em_tol, max_iter=em_max_iter))

    assignments = np.stack([map_assign(f.posteriors) for f in wave_fits], axis=1)
    ceps = []
    degenerate = []
    for t, fit in enumerate(wave_fits):
        m, degen = estimate_cep(fit.posteriors, assignments[:, t])
        ceps.append(m)
        degenerate.append(degen)

    params, loglik, status, start_lls = fit_structural_corrected(
        assignments, ceps, covariates, monotone=monotone, opt=opt, seed=seed
    )
    return StepwiseResult(
        wave_fits=tuple(wave_fits),
        assignments=assignments,
        ceps=tuple(ceps),
        cep_degenerate=tuple(degenerate),
        params=params,
        loglik=loglik,
        optimizer_status=status,
        start_logliks=start_lls,
    )


def dump_stepwise_audit(result: StepwiseResult, out_dir) -> Path:
    """Write per-wave posteriors, assignments, and CEP matrices as CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, n_waves = result.assignments.shape
    n_profiles = result.ceps[0].shape[0]

    for t, fit in enumerate(result.wave_fits):
        with open(out / f"posteriors_wave{t + 1}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["learner"] + [f"profile{s}" for s in range(n_profiles)])
            for i in range(n):
                w.writerow([i + 1] + [repr(float(v)) for v in fit.posteriors[i]])

    with open(out / "assignments.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["learner"] + [f"wave{t + 1}" for t in range(n_waves)])
        for i in range(n):
            w.writerow([i + 1] + result.assignments[i].tolist())

    for t, cep in enumerate(result.ceps):
        with open(out / f"cep_wave{t + 1}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["assigned"] + [f"true{s}" for s in range(n_profiles)])
            for r in range(n_profiles):
                w.writerow([r] + [repr(float(v)) for v in cep[r]])
    return out
