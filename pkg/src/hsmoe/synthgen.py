"""Synthetic regression data with a sparse softmax routing gate.

The generator draws standard-normal covariates, routes each row through a
softmax gate in which only the first ``n_active`` experts carry signal (the
rest get a large negative bias), and emits a Gaussian linear response from
the selected expert. The data-generating gate is softmax on purpose: the
filter infers a stick-breaking gate, so recovering the allocation pattern is
a genuine cross-parameterization test, not a round trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expert import Observation
from .rng import PURPOSE_SYNTH, substream


@dataclass
class SynthConfig:
    """Generator settings; defaults reproduce the standard example setup."""

    n_experts: int = 10
    n_active: int = 3
    n_obs: int = 500
    dim: int = 5
    inactive_bias: float = -3.0
    temperature: float = 0.70
    noise_var: float = 0.25
    active_gate_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_active <= self.n_experts:
            raise ValueError("need 1 <= n_active <= n_experts")
        if self.temperature <= 0 or self.noise_var <= 0:
            raise ValueError("temperature and noise_var must be positive")
        if self.active_gate_scale < 0:
            raise ValueError("active_gate_scale must be >= 0")


@dataclass
class GroundTruth:
    """Generator-side parameters, written alongside every dataset."""

    betas: np.ndarray  # (K, d) expert coefficients
    sigma2s: np.ndarray  # (K,) expert noise variances
    gate_coeffs: np.ndarray  # (K, d) softmax gate coefficients
    gate_bias: np.ndarray  # (K,) additive logit biases
    temperature: float
    config: SynthConfig = field(default=None)


def generate(cfg: SynthConfig, rng: np.random.Generator | None = None):
    """Draw a dataset; returns (observations, ground_truth, z) with z 1-based.

    Inactive experts keep well-defined regression coefficients but zero gate
    coefficients plus the inactive bias, so they are rarely selected.
    """
    if rng is None:
        rng = substream(cfg.seed, PURPOSE_SYNTH)
    K, s, n, d = cfg.n_experts, cfg.n_active, cfg.n_obs, cfg.dim

    betas = rng.standard_normal((K, d))
    gate_coeffs = np.zeros((K, d))
    gate_coeffs[:s] = cfg.active_gate_scale * rng.standard_normal((s, d))
    gate_bias = np.where(np.arange(K) < s, 0.0, cfg.inactive_bias)
    sigma2s = np.full(K, cfg.noise_var)
    truth = GroundTruth(
        betas=betas,
        sigma2s=sigma2s,
        gate_coeffs=gate_coeffs,
        gate_bias=gate_bias,
        temperature=cfg.temperature,
        config=cfg,
    )

    X = rng.standard_normal((n, d))
    logits = (X @ gate_coeffs.T + gate_bias) / cfg.temperature
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(n)
    z = 1 + (np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1)
    z = np.minimum(z, K)
    eps = rng.standard_normal(n) * np.sqrt(sigma2s[z - 1])
    y = np.einsum("nd,nd->n", X, betas[z - 1]) + eps

    obs = [Observation(x=X[i], y=y[i]) for i in range(n)]
    return obs, truth, z.astype(np.int64)


def empirical_allocation_frequencies(z, n_experts: int) -> np.ndarray:
    """Normalized counts of 1-based allocation labels."""
    z = np.asarray(z, dtype=np.int64)
    if z.size == 0:
        raise ValueError("empty allocation sequence")
    if z.min() < 1 or z.max() > n_experts:
        raise ValueError("allocation labels outside 1..K")
    return np.bincount(z - 1, minlength=n_experts) / z.size
