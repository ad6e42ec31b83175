"""Scikit-learn style estimator classes wrapping the two fitting routines.

Both estimators follow the usual conventions: constructor arguments are
stored verbatim (so ``get_params``/``set_params`` and ``clone`` work), all
computation happens in ``fit(responses, covariates)``, and fitted results
land in trailing-underscore attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .joint import McmcConfig, PriorSpec, fit_joint
from .stepwise import OptimizerConfig, fit_stepwise
from .validation import check_covariates, check_qmatrix, check_response_panel


class JointEstimator(BaseEstimator):
    """Joint Bayesian fit of measurement, transition, and initial-mastery
    components by Metropolis-within-Gibbs MCMC.

    Parameters
    ----------
    q_matrix : array-like of shape (J, K)
        Binary item-attribute loadings, assumed known and time-invariant.
    monotone : bool, default True
        Treat mastery as absorbing (loss probability pinned to 0).
    chains, burn_in, kept, thin : int
        MCMC schedule per chain.
    proposal_sd : float
        Initial random-walk scale for coefficient blocks.
    adapt_window : int
        Burn-in sweeps between proposal-scale adaptations.
    psrf_threshold : float
        Convergence flag cutoff on the maximum PSRF.
    priors : PriorSpec or None
        Defaults to flat Beta(1,1) item priors and standard-normal
        coefficient priors.
    seed : int
        Master seed; chains derive their own streams.
    trace_path : str or None
        If set, kept draws are dumped to this CSV for offline diagnostics.

    Attributes
    ----------
    summary_ : PosteriorSummary
    profiles_ : ndarray of shape (N, T, K)
        Marginal MAP mastery indicators.
    item_guess_, item_slip_ : ndarray of shape (J,)
    initial_coef_, acquire_coef_ : ndarray of shape (K, 1 + C)
    lose_coef_ : ndarray or None
    psrf_max_ : float
    converged_ : bool
    """

    def __init__(
        self,
        q_matrix=None,
        monotone=True,
        chains=2,
        burn_in=1000,
        kept=2000,
        thin=1,
        proposal_sd=0.25,
        adapt_window=50,
        psrf_threshold=1.2,
        priors=None,
        seed=0,
        trace_path=None,
    ):
        self.q_matrix = q_matrix
        self.monotone = monotone
        self.chains = chains
        self.burn_in = burn_in
        self.kept = kept
        self.thin = thin
        self.proposal_sd = proposal_sd
        self.adapt_window = adapt_window
        self.psrf_threshold = psrf_threshold
        self.priors = priors
        self.seed = seed
        self.trace_path = trace_path

    def fit(self, responses, covariates=None):
        q = check_qmatrix(self.q_matrix)
        responses = check_response_panel(responses, q)
        covariates = check_covariates(covariates, responses.shape[0])
        base = self.priors if self.priors is not None else PriorSpec()
        priors = PriorSpec(
            item_a=base.item_a,
            item_b=base.item_b,
            coef_mean=base.coef_mean,
            coef_sd=base.coef_sd,
            lose_intercept_mean=base.lose_intercept_mean,
            lose_intercept_sd=base.lose_intercept_sd,
            monotone=self.monotone,
        )
        mcmc = McmcConfig(
            chains=self.chains,
            burn_in=self.burn_in,
            kept=self.kept,
            thin=self.thin,
            proposal_sd=self.proposal_sd,
            adapt_window=self.adapt_window,
            seed=self.seed,
        )
        summary = fit_joint(
            responses,
            covariates,
            q,
            priors=priors,
            mcmc=mcmc,
            psrf_threshold=self.psrf_threshold,
            trace_path=self.trace_path,
        )
        k = q.n_attributes
        c = covariates.shape[1]
        self.summary_ = summary
        self.profiles_ = summary.map_profile_bits
        self.item_guess_ = summary.point_estimates("guess", (q.n_items,))
        self.item_slip_ = summary.point_estimates("slip", (q.n_items,))
        self.initial_coef_ = summary.point_estimates("initial", (k, 1 + c))
        self.acquire_coef_ = summary.point_estimates("acquire", (k, 1 + c))
        self.lose_coef_ = (
            None if self.monotone else summary.point_estimates("lose", (k, 1 + c))
        )
        self.psrf_max_ = summary.psrf_max
        self.converged_ = summary.converged
        return self

    def predict_profiles(self):
        """Marginal MAP mastery indicators for the fitted learners."""
        if not hasattr(self, "summary_"):
            raise NotFittedError("call fit before predict_profiles")
        return self.profiles_


class StepwiseEstimator(BaseEstimator):
    """Bias-corrected three-step fit: per-wave DINA EM, MAP assignment with
    classification-error matrices, then corrected structural estimation.

    Parameters
    ----------
    q_matrix : array-like of shape (J, K)
    monotone : bool, default True
    em_tol, em_max_iter : EM stopping rule per wave.
    n_starts, grad_step, gtol, ftol_rel, opt_max_iter, coef_bound :
        Step-3 optimizer settings (multi-start quasi-Newton with central
        finite-difference gradients).
    seed : int
        Seeds the optimizer's prior-draw starts.

    Attributes
    ----------
    result_ : StepwiseResult
    profiles_ : ndarray of shape (N, T, K)
        MAP-assigned mastery indicators.
    item_guess_, item_slip_ : ndarray of shape (T, J)
        Per-wave Step-1 estimates.
    initial_coef_, acquire_coef_, lose_coef_ : structural estimates.
    ceps_ : tuple of (S, S) classification-error matrices.
    optimizer_status_ : str
    """

    def __init__(
        self,
        q_matrix=None,
        monotone=True,
        em_tol=1e-6,
        em_max_iter=500,
        n_starts=5,
        grad_step=1e-5,
        gtol=1e-5,
        ftol_rel=1e-10,
        opt_max_iter=500,
        coef_bound=15.0,
        seed=0,
    ):
        self.q_matrix = q_matrix
        self.monotone = monotone
        self.em_tol = em_tol
        self.em_max_iter = em_max_iter
        self.n_starts = n_starts
        self.grad_step = grad_step
        self.gtol = gtol
        self.ftol_rel = ftol_rel
        self.opt_max_iter = opt_max_iter
        self.coef_bound = coef_bound
        self.seed = seed

    def fit(self, responses, covariates=None):
        q = check_qmatrix(self.q_matrix)
        responses = check_response_panel(responses, q)
        covariates = check_covariates(covariates, responses.shape[0])
        opt = OptimizerConfig(
            n_starts=self.n_starts,
            grad_step=self.grad_step,
            gtol=self.gtol,
            ftol_rel=self.ftol_rel,
            max_iter=self.opt_max_iter,
            coef_bound=self.coef_bound,
        )
        result = fit_stepwise(
            responses,
            covariates,
            q,
            monotone=self.monotone,
            em_tol=self.em_tol,
            em_max_iter=self.em_max_iter,
            opt=opt,
            seed=self.seed,
        )
        profiles = q.profiles()
        self.result_ = result
        self.profiles_ = profiles[result.assignments]
        self.item_guess_ = np.stack([f.item_params.guess for f in result.wave_fits])
        self.item_slip_ = np.stack([f.item_params.slip for f in result.wave_fits])
        self.initial_coef_ = result.params.initial
        self.acquire_coef_ = result.params.acquire
        self.lose_coef_ = result.params.lose
        self.ceps_ = result.ceps
        self.optimizer_status_ = result.optimizer_status
        return self

    def predict_profiles(self):
        """MAP-assigned mastery indicators for the fitted learners."""
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict_profiles")
        return self.profiles_
