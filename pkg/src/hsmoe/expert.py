"""Conjugate Gaussian linear expert.

Each expert is a Bayesian linear regression with a normal-inverse-gamma
state (m, P, a, b), P the coefficient precision. The one-step-ahead
predictive is a location-scale Student-t, and absorbing one observation is a
rank-one update of the state. Both are exact, so an expert never needs to
see its raw history.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dist import StudentTParams, log_t_density
from .exceptions import ConfigurationError, NumericalDegeneracyError

B_CLAMP = 1e-300


@dataclass
class Observation:
    """One regression observation: covariate vector x and scalar response y."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = float(self.y)
        if self.x.ndim != 1 or not np.all(np.isfinite(self.x)) or not np.isfinite(self.y):
            raise ValueError("observation needs a finite 1-D x and finite scalar y")


@dataclass
class NIGStats:
    """Normal-inverse-gamma state of one expert.

    m: posterior coefficient mean, (d,)
    P: posterior coefficient precision (inverse of the scaled covariance), (d, d)
    a, b: inverse-gamma shape and scale of the noise variance
    """

    m: np.ndarray
    P: np.ndarray
    a: float
    b: float


def nig_prior(m0, V0, a0: float, b0: float) -> NIGStats:
    """Build the prior state from mean m0, SPD covariance V0 and IG(a0, b0)."""
    m0 = np.asarray(m0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    if a0 <= 0 or b0 <= 0:
        raise ConfigurationError(f"need a0 > 0 and b0 > 0, got a0={a0}, b0={b0}")
    if V0.shape != (m0.size, m0.size):
        raise ConfigurationError("V0 must be square and match m0")
    try:
        L = np.linalg.cholesky(V0)
    except np.linalg.LinAlgError as err:
        raise ConfigurationError(f"prior covariance V0 not SPD: {err}") from err
    Linv = np.linalg.solve(L, np.eye(m0.size))
    P = Linv.T @ Linv
    return NIGStats(m=m0.copy(), P=0.5 * (P + P.T), a=float(a0), b=float(b0))


def batch_predictive_params(m, P, a, b, x):
    """Student-t predictive parameters for stacked expert states.

    m: (..., d), P: (..., d, d), a, b: (...), x: (d,). Returns (nu, mu, s2)
    arrays of the stacked shape. The quadratic form x' P^-1 x is obtained by
    a linear solve; P is never inverted explicitly.
    """
    m = np.asarray(m, dtype=float)
    P = np.asarray(P, dtype=float)
    x = np.asarray(x, dtype=float)
    mu = m @ x
    try:
        u = np.linalg.solve(P, np.broadcast_to(x, m.shape)[..., None])[..., 0]
    except np.linalg.LinAlgError as err:
        raise NumericalDegeneracyError(f"expert precision not invertible: {err}") from err
    q = u @ x
    nu = 2.0 * np.asarray(a, dtype=float)
    s2 = np.asarray(b, dtype=float) / np.asarray(a, dtype=float) * (1.0 + q)
    return nu, mu, s2


def predictive_params(s: NIGStats, x) -> StudentTParams:
    """One-step predictive t(nu=2a, mu=x'm, s2=(b/a)(1 + x'P^-1 x))."""
    nu, mu, s2 = batch_predictive_params(s.m, s.P, s.a, s.b, x)
    return StudentTParams(nu=float(nu), mu=float(mu), s2=float(s2))


def nig_log_predictive(s: NIGStats, obs: Observation) -> float:
    """Log predictive density of obs.y under the expert's current state."""
    p = predictive_params(s, obs.x)
    return float(log_t_density(obs.y, p.nu, p.mu, p.s2))


def nig_update_arrays(m, P, a, b, x, y):
    """Rank-one conjugate update on raw arrays.

    Returns (m', P', a', b', clamped) with
        P' = P + x x',  m' = P'^-1 (P m + x y),  a' = a + 1/2,
        b' = b + (y^2 + m'P m - m''P' m') / 2.
    b' is exact in real arithmetic but can round below zero; it is then
    clamped to a tiny positive value and flagged.
    """
    P2 = P + np.outer(x, x)
    P2 = 0.5 * (P2 + P2.T)
    Pm = P @ m
    m2 = np.linalg.solve(P2, Pm + x * y)
    a2 = a + 0.5
    b2 = b + 0.5 * (y * y + m @ Pm - m2 @ (P2 @ m2))
    clamped = False
    if b2 <= 0.0:
        b2 = B_CLAMP
        clamped = True
    return m2, P2, a2, b2, clamped


def nig_update(s: NIGStats, obs: Observation) -> NIGStats:
    """Absorb one observation; returns a new state, input left untouched."""
    m2, P2, a2, b2, clamped = nig_update_arrays(s.m, s.P, s.a, s.b, obs.x, obs.y)
    if clamped:
        warnings.warn("b rounded below zero and was clamped", RuntimeWarning, stacklevel=2)
    return NIGStats(m=m2, P=P2, a=a2, b=b2)
