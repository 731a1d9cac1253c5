"""Sparse mixture-of-experts regression with sequential particle inference."""

from .engine import (
    FilterConfig,
    FilterState,
    Particle,
    allocate,
    allocation_frequencies,
    expert_scores,
    init_filter,
    predictive_weight,
    run,
    select_n_experts,
    select_winner,
    step,
)
from .estimator import HSMoEParticleFilter
from .exceptions import (
    ConfigurationError,
    DataFormatError,
    FilterDegeneracyError,
    NumericalDegeneracyError,
)
from .expert import NIGStats, Observation, nig_log_predictive, nig_prior, nig_update
from .gate import GateState, HorseshoeState, StickState
from .synthgen import GroundTruth, SynthConfig, empirical_allocation_frequencies, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataFormatError",
    "FilterConfig",
    "FilterDegeneracyError",
    "FilterState",
    "GateState",
    "GroundTruth",
    "HSMoEParticleFilter",
    "HorseshoeState",
    "NIGStats",
    "NumericalDegeneracyError",
    "Observation",
    "Particle",
    "StickState",
    "SynthConfig",
    "allocate",
    "allocation_frequencies",
    "empirical_allocation_frequencies",
    "expert_scores",
    "generate",
    "init_filter",
    "nig_log_predictive",
    "nig_prior",
    "nig_update",
    "predictive_weight",
    "run",
    "select_n_experts",
    "select_winner",
    "step",
]
