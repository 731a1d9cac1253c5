"""Scikit-learn style front end for the particle-filter mixture of experts."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from . import engine, gate
from .expert import Observation, batch_predictive_params


class HSMoEParticleFilter(BaseEstimator, RegressorMixin):
    """Sparse mixture-of-experts regressor fit by sequential Monte Carlo.

    ``fit`` consumes the rows of (X, y) in order as a data stream; calling
    ``partial_fit`` afterwards continues the same run on new rows, which is
    the natural online-update mode. Sparsity in expert usage comes from a
    global-local shrinkage prior on the routing coefficients.

    Parameters
    ----------
    n_experts : int
        Number of mixture components K.
    n_particles : int
        Particle count N; more particles lower the Monte Carlo error of the
        posterior summaries and of ``log_marginal_likelihood_``.
    a0, b0, v0_scale, m0 : float
        Prior hyperparameters of each expert: inverse-gamma(a0, b0) noise
        variance and coefficient prior N(m0, v0_scale * I) scaled by it.
    resampling : {"systematic", "multinomial"}
    resample_threshold : float
        Resample when ESS <= threshold * N; 1.0 resamples every step.
    phi_refresh : {"sample", "mean"}
        Whether routing coefficients are redrawn from their conditional
        posterior or set to its mean after each update.
    rejuvenate_every : int
        Observations between shrinkage-scale Gibbs sweeps (0 disables).
    n_threads : int
        Worker threads for the per-particle propagation loop. Results are
        identical for any value.
    random_state : int
        Seed; fixed seed gives bit-identical results.

    Attributes
    ----------
    filter_state_ : engine.FilterState
        Full particle state after fitting.
    log_marginal_likelihood_ : float
        Online evidence estimate of the processed stream.
    allocation_frequencies_ : ndarray of shape (n_experts,)
        Particle-averaged share of observations routed to each expert.
    """

    def __init__(
        self,
        n_experts: int = 2,
        n_particles: int = 100,
        a0: float = 1.0,
        b0: float = 1.0,
        v0_scale: float = 1.0,
        m0: float = 0.0,
        resampling: str = "systematic",
        resample_threshold: float = 1.0,
        phi_refresh: str = "sample",
        rejuvenate_every: int = 1,
        n_threads: int = 1,
        random_state: int = 0,
    ):
        self.n_experts = n_experts
        self.n_particles = n_particles
        self.a0 = a0
        self.b0 = b0
        self.v0_scale = v0_scale
        self.m0 = m0
        self.resampling = resampling
        self.resample_threshold = resample_threshold
        self.phi_refresh = phi_refresh
        self.rejuvenate_every = rejuvenate_every
        self.n_threads = n_threads
        self.random_state = random_state

    def _config(self) -> engine.FilterConfig:
        return engine.FilterConfig(
            n_particles=self.n_particles,
            n_experts=self.n_experts,
            m0=self.m0,
            v0_scale=self.v0_scale,
            a0=self.a0,
            b0=self.b0,
            resampling=self.resampling,
            resample_threshold=self.resample_threshold,
            phi_refresh=self.phi_refresh,
            rejuvenate_every=self.rejuvenate_every,
            n_threads=self.n_threads,
            seed=self.random_state,
        )

    def _check_fitted(self):
        if not hasattr(self, "filter_state_"):
            raise NotFittedError("call fit or partial_fit first")

    def fit(self, X, y):
        """Run the filter over the rows of (X, y) from a fresh prior."""
        X, y = check_X_y(X, y, y_numeric=True)
        self.filter_state_ = engine.init_filter(self._config(), X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        """Continue the run on more rows (starts one if none exists)."""
        X, y = check_X_y(X, y, y_numeric=True)
        if not hasattr(self, "filter_state_"):
            self.filter_state_ = engine.init_filter(self._config(), X.shape[1])
            self.n_features_in_ = X.shape[1]
        for i in range(X.shape[0]):
            engine.step(self.filter_state_, Observation(x=X[i], y=y[i]))
        return self

    @property
    def log_marginal_likelihood_(self) -> float:
        self._check_fitted()
        return self.filter_state_.log_ml

    @property
    def allocation_frequencies_(self) -> np.ndarray:
        self._check_fitted()
        return engine.allocation_frequencies(self.filter_state_)

    def _gate_and_predictives(self, x):
        fs = self.filter_state_
        if self.n_experts > 1:
            eta = np.einsum("nkd,d->nk", fs.phi, x)
        else:
            eta = np.zeros((fs.n_particles, 0))
        log_gate = gate.stick_log_probabilities(eta)
        nu, mu, s2 = batch_predictive_params(
            fs.expert_m, fs.expert_P, fs.expert_a, fs.expert_b, x
        )
        return log_gate, nu, mu, s2

    def predict(self, X):
        """Posterior predictive mean, averaged over particles and experts."""
        self._check_fitted()
        X = check_array(X)
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            log_gate, _, mu, _ = self._gate_and_predictives(x)
            out[i] = float(np.mean(np.sum(np.exp(log_gate) * mu, axis=1)))
        return out

    def predict_alloc_proba(self, X):
        """Particle-averaged gate probabilities per row, shape (n, K)."""
        self._check_fitted()
        X = check_array(X)
        out = np.empty((X.shape[0], self.n_experts))
        for i, x in enumerate(X):
            log_gate, _, _, _ = self._gate_and_predictives(x)
            out[i] = np.exp(log_gate).mean(axis=0)
        return out

    def log_predictive_density(self, X, y):
        """Per-row log posterior predictive density of y given x."""
        self._check_fitted()
        X, y = check_X_y(X, y, y_numeric=True)
        from .dist import log_t_density

        fs = self.filter_state_
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            log_gate, nu, mu, s2 = self._gate_and_predictives(x)
            comp = log_gate + log_t_density(y[i], nu, mu, s2)
            out[i] = float(logsumexp(comp) - np.log(fs.n_particles))
        return out

    def score_experts(self, X, alpha: float = 0.0):
        """Routing scores per row, shape (n, K); see ``engine.expert_scores``."""
        self._check_fitted()
        X = check_array(X)
        return np.stack(
            [engine.expert_scores(self.filter_state_, x, alpha) for x in X]
        )
