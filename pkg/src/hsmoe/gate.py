"""Stick-breaking logistic gate with horseshoe-shrunk coefficients.

K categories are encoded by K-1 binary "sticks": category k wins stick k
after losing sticks 1..k-1, and the last category is the all-failures event.
Each stick is a logistic regression in x whose likelihood becomes Gaussian
in the coefficients once a Polya-Gamma variable is drawn per visited stick,
so the per-stick posterior state is just a precision accumulator and a
linear accumulator. Sparsity comes from a global-local (horseshoe) prior on
the stick coefficients, kept current by inverse-gamma Gibbs sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import (
    sample_gaussian_from_precision,
    sample_inverse_gamma,
    sample_polya_gamma_1,
)

PHI_REFRESH_MODES = ("sample", "mean")


@dataclass
class StickState:
    """Data-side Gaussian accumulators and current coefficient draw of one stick.

    ``Lambda`` and ``h`` hold only the data contribution; the prior precision
    (from the horseshoe scales) is added when phi is refreshed, so scale
    updates never have to subtract a stale prior term.
    """

    Lambda: np.ndarray
    h: np.ndarray
    phi: np.ndarray


@dataclass
class HorseshoeState:
    """Global scale tau2 (auxiliary xi) and per-coefficient scales lambda2 (auxiliaries nu)."""

    tau2: float
    xi: float
    lambda2: np.ndarray  # (n_sticks, d)
    nu: np.ndarray  # (n_sticks, d)


@dataclass
class GateState:
    sticks: list[StickState]
    hs: HorseshoeState


def stick_log_probabilities(eta: np.ndarray) -> np.ndarray:
    """Log category probabilities from stick logits.

    eta: (..., K-1) logits; returns (..., K) log probabilities.
    log sigma and log(1 - sigma) are computed via softplus, never by
    exponentiating logits.
    """
    eta = np.asarray(eta, dtype=float)
    log_sig = -np.logaddexp(0.0, -eta)
    log_fail = -np.logaddexp(0.0, eta)
    cum_fail = np.cumsum(log_fail, axis=-1)
    prev_fail = np.concatenate(
        [np.zeros(eta.shape[:-1] + (1,)), cum_fail[..., :-1]], axis=-1
    )
    last = cum_fail[..., -1:] if eta.shape[-1] else np.zeros(eta.shape[:-1] + (1,))
    return np.concatenate([log_sig + prev_fail, last], axis=-1)


def stick_probabilities(phi_all: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Category probabilities P(z = 1..K | x) for coefficients phi_all ((K-1, d))."""
    phi_all = np.atleast_2d(np.asarray(phi_all, dtype=float))
    eta = phi_all @ np.asarray(x, dtype=float) if phi_all.size else np.zeros(0)
    return np.exp(stick_log_probabilities(eta))


def visited_sticks(z: int, n_experts: int) -> list[tuple[int, int]]:
    """Sticks touched by an allocation z in 1..K, with their binary labels.

    Stick k is reached only if all sticks before it failed, i.e. for
    k <= min(z, K-1); its label is 1 exactly when z == k.
    """
    if not 1 <= z <= n_experts:
        raise ValueError(f"allocation {z} outside 1..{n_experts}")
    return [(k, int(z == k)) for k in range(1, min(z, n_experts - 1) + 1)]


def prior_precision_diag(hs: HorseshoeState) -> np.ndarray:
    """Diagonal prior precision 1/(tau2 * lambda2) per stick, (n_sticks, d)."""
    return 1.0 / (hs.tau2 * hs.lambda2)


def refresh_phi(
    Lambda_data: np.ndarray,
    h: np.ndarray,
    prior_diag: np.ndarray,
    rng: np.random.Generator,
    mode: str = "sample",
) -> np.ndarray:
    """Draw (or take the mean of) phi from N(L^-1 h, L^-1), L = prior + data."""
    L = Lambda_data + np.diag(prior_diag)
    if mode == "sample":
        return sample_gaussian_from_precision(h, L, rng)
    if mode == "mean":
        return np.linalg.solve(L, h)
    raise ValueError(f"unknown phi refresh mode {mode!r}")


def pg_stick_accumulate(
    s: StickState, x: np.ndarray, label: int, rng: np.random.Generator
) -> StickState:
    """Absorb one binary stick observation without refreshing phi.

    Draws omega ~ PG(1, x'phi) at the current phi and applies the rank-one
    increments Lambda += omega x x', h += (label - 1/2) x.
    """
    x = np.asarray(x, dtype=float)
    omega = sample_polya_gamma_1(float(x @ s.phi), rng)
    Lam = s.Lambda + omega * np.outer(x, x)
    return StickState(
        Lambda=0.5 * (Lam + Lam.T),
        h=s.h + (label - 0.5) * x,
        phi=s.phi,
    )


def pg_stick_update(
    s: StickState,
    x: np.ndarray,
    label: int,
    prior_diag: np.ndarray,
    rng: np.random.Generator,
    phi_refresh: str = "sample",
) -> StickState:
    """One observation's stick update: PG draw, accumulate, refresh phi."""
    out = pg_stick_accumulate(s, x, label, rng)
    out.phi = refresh_phi(out.Lambda, out.h, prior_diag, rng, phi_refresh)
    return out


def horseshoe_sweep(phi, tau2, xi, lam2, nu, rng: np.random.Generator):
    """One Gibbs sweep over the shrinkage scales given the coefficient draws.

    Conditionals (phi the (n_sticks, d) coefficients, p their count):
        lambda2_kj ~ IG(1, 1/nu_kj + phi_kj^2 / (2 tau2))
        nu_kj     ~ IG(1, 1 + 1/lambda2_kj)
        tau2      ~ IG((p+1)/2, 1/xi + sum phi_kj^2 / (2 lambda2_kj))
        xi        ~ IG(1, 1 + 1/tau2)
    Returns (tau2, xi, lambda2, nu).
    """
    phi2 = np.asarray(phi, dtype=float) ** 2
    p = phi2.size
    # IG(a, b) drawn as 1/Gamma(a, scale=1/b) inline; this loop is hot
    if p:
        lam2 = 1.0 / rng.gamma(1.0, 1.0 / (1.0 / nu + phi2 / (2.0 * tau2)))
        nu = 1.0 / rng.gamma(1.0, 1.0 / (1.0 + 1.0 / lam2))
        rate = 1.0 / xi + np.sum(phi2 / (2.0 * lam2))
    else:
        rate = 1.0 / xi
    tau2 = 1.0 / rng.gamma((p + 1) / 2.0, 1.0 / rate)
    xi = 1.0 / rng.gamma(1.0, 1.0 / (1.0 + 1.0 / tau2))
    return tau2, xi, lam2, nu


def horseshoe_rejuvenate(g: GateState, rng: np.random.Generator) -> GateState:
    """Refresh the horseshoe scales of a gate given its current phi draws."""
    phi = np.array([s.phi for s in g.sticks]) if g.sticks else np.zeros_like(g.hs.lambda2)
    tau2, xi, lam2, nu = horseshoe_sweep(
        phi, g.hs.tau2, g.hs.xi, g.hs.lambda2, g.hs.nu, rng
    )
    return GateState(sticks=g.sticks, hs=HorseshoeState(tau2=tau2, xi=xi, lambda2=lam2, nu=nu))


def sample_horseshoe_prior(n_sticks: int, d: int, rng: np.random.Generator) -> HorseshoeState:
    """Draw the shrinkage scales from their prior via the IG-mixture chain."""
    nu = sample_inverse_gamma(np.full((n_sticks, d), 0.5), 1.0, rng)
    lam2 = sample_inverse_gamma(np.full((n_sticks, d), 0.5), 1.0 / nu, rng)
    xi = sample_inverse_gamma(0.5, 1.0, rng)
    tau2 = sample_inverse_gamma(0.5, 1.0 / xi, rng)
    return HorseshoeState(
        tau2=tau2, xi=xi, lambda2=np.atleast_2d(lam2), nu=np.atleast_2d(nu)
    )


def sample_phi_prior(hs: HorseshoeState, rng: np.random.Generator) -> np.ndarray:
    """Draw stick coefficients from N(0, tau2 * lambda2) given the scales."""
    return rng.standard_normal(hs.lambda2.shape) * np.sqrt(hs.tau2 * hs.lambda2)
