"""Densities and samplers used throughout the filter.

All densities are computed and accumulated in log space; per-observation
predictive products underflow float64 within a few dozen steps otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log_ndtr

from .exceptions import FilterDegeneracyError, NumericalDegeneracyError

RESAMPLING_SCHEMES = ("multinomial", "systematic")


@dataclass(frozen=True)
class StudentTParams:
    """Location-scale Student-t parameters (nu, mu, s2), s2 a squared scale."""

    nu: float
    mu: float
    s2: float

    def __post_init__(self):
        if not (self.nu > 0 and self.s2 > 0):
            raise ValueError(f"need nu > 0 and s2 > 0, got nu={self.nu}, s2={self.s2}")


def log_t_density(y, nu, mu, s2):
    """Vectorized log density of the location-scale Student-t.

    Broadcasts over all arguments; callers guarantee nu > 0 and s2 > 0.
    """
    y = np.asarray(y, dtype=float)
    z2 = (y - mu) ** 2 / (nu * s2)
    return (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi * s2)
        - (nu + 1.0) / 2.0 * np.log1p(z2)
    )


def student_t_logpdf(y: float, p: StudentTParams) -> float:
    """Log density of y under the location-scale Student-t ``p``."""
    return float(log_t_density(y, p.nu, p.mu, p.s2))


# ---------------------------------------------------------------------------
# Polya-Gamma PG(1, c)
#
# Exact sampler via the alternating-series rejection method: PG(1, c) is
# 0.25 * J*(1, |c|/2), where J*(1, z) is drawn from a two-piece proposal
# (truncated inverse-Gaussian below t, exponential tail above t) and accepted
# against the partial sums of the series density. Truncation point t = 0.64
# keeps both series rapidly decreasing.
# ---------------------------------------------------------------------------

_PG_T = 0.64
_LOG_4_OVER_PI = math.log(4.0 / math.pi)


def _pg_coef(n: int, x: float) -> float:
    """n-th term of the alternating series for the J*(1, 0) density at x."""
    k = (n + 0.5) * math.pi
    if x > _PG_T:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        return math.exp(
            -1.5 * (math.log(0.5 * math.pi) + math.log(x))
            + math.log(k)
            - 2.0 * (n + 0.5) ** 2 / x
        )
    return 0.0


def _pg_mass_right(z: float) -> float:
    """Probability that the proposal uses the exponential-tail piece."""
    t = _PG_T
    fz = math.pi**2 / 8.0 + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = math.log(fz) + fz * t
    log_qdivp = _LOG_4_OVER_PI + np.logaddexp(
        x0 - z + log_ndtr(b), x0 + z + log_ndtr(a)
    )
    # p/(p+q) = sigmoid(-log(q/p)); stays finite even when q/p overflows
    return float(expit(-log_qdivp))


def _rtigauss(z: float, rng: np.random.Generator) -> float:
    """Inverse-Gaussian IG(1/z, 1) draw truncated to (0, t]."""
    t = _PG_T
    if z < 1.0 / t:
        # mean above the truncation point (includes z = 0): sample the
        # one-sided stable restriction of IG and thin by the exp tilt.
        while True:
            while True:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            x = t / (1.0 + t * e1) ** 2
            if rng.random() <= math.exp(-0.5 * z * z * x):
                return x
    mu = 1.0 / z
    while True:
        y = rng.standard_normal() ** 2
        mu_y = mu * y
        x = mu + 0.5 * mu * (mu_y - math.sqrt(4.0 * mu_y + mu_y * mu_y))
        if rng.random() > mu / (mu + x):
            x = mu * mu / x
        if x <= t:
            return x


def sample_polya_gamma_1(c: float, rng: np.random.Generator) -> float:
    """Draw from PG(1, c). Symmetric in c; exact (no series truncation bias)."""
    z = 0.5 * abs(c)
    fz = math.pi**2 / 8.0 + 0.5 * z * z
    p_right = _pg_mass_right(z)
    while True:
        if rng.random() < p_right:
            x = _PG_T + rng.standard_exponential() / fz
        else:
            x = _rtigauss(z, rng)
        s = _pg_coef(0, x)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _pg_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _pg_coef(n, x)
                if y > s:
                    break


def sample_inverse_gamma(a, b, rng: np.random.Generator):
    """Draw from IG(a, b), density proportional to x^-(a+1) * exp(-b/x).

    ``a`` and ``b`` broadcast; returns an array of the broadcast shape
    (a scalar for scalar inputs).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("inverse-gamma requires a > 0 and b > 0")
    out = np.asarray(1.0 / rng.gamma(shape=a, scale=1.0 / b))
    return float(out) if out.ndim == 0 else out


def sample_gaussian_from_precision(
    h: np.ndarray, Lambda: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw from N(Lambda^-1 h, Lambda^-1) without forming the inverse.

    Uses the Cholesky factor L of Lambda: the mean solves two triangular
    systems, and the fluctuation L^-T z has covariance Lambda^-1.
    """
    h = np.asarray(h, dtype=float)
    Lambda = np.asarray(Lambda, dtype=float)
    try:
        L = np.linalg.cholesky(Lambda)
    except np.linalg.LinAlgError as err:
        raise NumericalDegeneracyError(f"precision matrix not SPD: {err}") from err
    z = rng.standard_normal(h.shape[0])
    # L^-T (L^-1 h + z) has mean Lambda^-1 h and covariance Lambda^-1
    return np.linalg.solve(L.T, np.linalg.solve(L, h) + z)


def resample_indices(
    weights, n_out: int, scheme: str, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n_out`` ancestor indices with selection probability ~ weights.

    ``multinomial`` draws iid categorical indices; ``systematic`` uses a
    single uniform offset over a stratified grid. Indices are returned in
    nondecreasing order (copies of one ancestor are adjacent).
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty 1-D array")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise FilterDegeneracyError("all resampling weights are zero")
    p = w / total
    if scheme == "multinomial":
        idx = rng.choice(w.size, size=n_out, p=p)
        idx.sort()
    elif scheme == "systematic":
        positions = (rng.random() + np.arange(n_out)) / n_out
        idx = np.searchsorted(np.cumsum(p), positions, side="left")
        idx = np.minimum(idx, w.size - 1)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    return idx.astype(np.int64)
