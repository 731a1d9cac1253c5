"""Particle filter over expert and gate sufficient statistics.

Each of the N particles carries everything needed to price and absorb the
next observation exactly: per-expert normal-inverse-gamma states, per-stick
Gaussian accumulators with a current coefficient draw, and the horseshoe
scales. One observation is processed as

    weight    w_i = sum_k P(z=k | x, phi_i) * t-predictive_k(y)
    evidence  log_ml += log mean_i w_i
    resample  ancestors drawn proportional to the weights
    propagate draw z, update the chosen expert, update visited sticks,
              refresh the shrinkage scales

The running product of mean weights is an online estimate of the marginal
likelihood, which is what makes comparing expert counts cheap.

Particles live in stacked arrays (leading axis = particle) rather than as
objects; the ``FilterState.particles`` property materializes object views
for inspection. Every random draw comes from a stream keyed by
(seed, purpose, epoch, ancestor identity, copy rank), so results do not
depend on thread count or on the order particles happen to be stored in.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import expert as ex
from . import gate as gt
from .dist import (
    RESAMPLING_SCHEMES,
    log_t_density,
    resample_indices,
    sample_polya_gamma_1,
)
from .exceptions import ConfigurationError, FilterDegeneracyError
from .expert import Observation
from .rng import PURPOSE_INIT, PURPOSE_PROPAGATE, PURPOSE_RESAMPLE, substream

_PID_SLOT_BITS = 32
_PID_SLOT_MASK = (1 << _PID_SLOT_BITS) - 1


@dataclass
class FilterConfig:
    """Everything a run needs besides the data.

    ``resample_threshold`` is the ESS fraction below which ancestors are
    redrawn; 1.0 resamples at every observation. ``rejuvenate_every`` thins
    the horseshoe sweeps (0 disables them). ``m0`` may be a scalar,
    broadcast to the data dimension, or an explicit vector.
    """

    n_particles: int = 100
    n_experts: int = 2
    m0: float = 0.0
    v0_scale: float = 1.0
    a0: float = 1.0
    b0: float = 1.0
    resampling: str = "systematic"
    resample_threshold: float = 1.0
    phi_refresh: str = "sample"
    rejuvenate_every: int = 1
    store_paths: bool = False
    n_threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1 or self.n_experts < 1:
            raise ConfigurationError("need n_particles >= 1 and n_experts >= 1")
        if self.resampling not in RESAMPLING_SCHEMES:
            raise ConfigurationError(f"unknown resampling scheme {self.resampling!r}")
        if self.phi_refresh not in gt.PHI_REFRESH_MODES:
            raise ConfigurationError(f"unknown phi refresh mode {self.phi_refresh!r}")
        if self.a0 <= 0 or self.b0 <= 0 or self.v0_scale <= 0:
            raise ConfigurationError("prior hyperparameters must be positive")
        if self.rejuvenate_every < 0 or self.n_threads < 1:
            raise ConfigurationError("rejuvenate_every >= 0 and n_threads >= 1 required")


@dataclass
class Particle:
    """Object view of one particle (a copy of the stacked-array row)."""

    experts: list[ex.NIGStats]
    gate: gt.GateState
    alloc_counts: np.ndarray
    last_z: int | None


@dataclass
class FilterState:
    """Mutable state of a run over the stacked particle arrays."""

    config: FilterConfig
    dim: int
    t: int = 0
    log_ml: float = 0.0
    ess_history: list[float] = field(default_factory=list)
    b_clamp_count: int = 0
    # stacked particle arrays; leading axis is the particle slot
    pid: np.ndarray = None  # (N,) int64, (birth_epoch << 32) | birth_slot
    expert_m: np.ndarray = None  # (N, K, d)
    expert_P: np.ndarray = None  # (N, K, d, d)
    expert_a: np.ndarray = None  # (N, K)
    expert_b: np.ndarray = None  # (N, K)
    stick_L: np.ndarray = None  # (N, K-1, d, d) data-side precision
    stick_h: np.ndarray = None  # (N, K-1, d)
    phi: np.ndarray = None  # (N, K-1, d) current coefficient draws
    tau2: np.ndarray = None  # (N,)
    xi: np.ndarray = None  # (N,)
    lambda2: np.ndarray = None  # (N, K-1, d)
    hs_nu: np.ndarray = None  # (N, K-1, d)
    alloc_counts: np.ndarray = None  # (N, K) int64
    last_z: np.ndarray = None  # (N,) int64, -1 before the first step
    log_weights: np.ndarray = None  # (N,) carried log-weights, zero after resampling
    paths: np.ndarray | None = None  # (N, t) allocation history if stored

    @property
    def n_particles(self) -> int:
        return self.config.n_particles

    @property
    def particles(self) -> list[Particle]:
        """Materialize object views (copies) of all particles."""
        out = []
        for i in range(self.n_particles):
            experts = [
                ex.NIGStats(
                    m=self.expert_m[i, k].copy(),
                    P=self.expert_P[i, k].copy(),
                    a=float(self.expert_a[i, k]),
                    b=float(self.expert_b[i, k]),
                )
                for k in range(self.config.n_experts)
            ]
            sticks = [
                gt.StickState(
                    Lambda=self.stick_L[i, k].copy(),
                    h=self.stick_h[i, k].copy(),
                    phi=self.phi[i, k].copy(),
                )
                for k in range(self.config.n_experts - 1)
            ]
            hs = gt.HorseshoeState(
                tau2=float(self.tau2[i]),
                xi=float(self.xi[i]),
                lambda2=self.lambda2[i].copy(),
                nu=self.hs_nu[i].copy(),
            )
            out.append(
                Particle(
                    experts=experts,
                    gate=gt.GateState(sticks=sticks, hs=hs),
                    alloc_counts=self.alloc_counts[i].copy(),
                    last_z=int(self.last_z[i]) + 1 if self.last_z[i] >= 0 else None,
                )
            )
        return out


def init_filter(config: FilterConfig, dim: int) -> FilterState:
    """Draw N particles from the prior."""
    N, K, d = config.n_particles, config.n_experts, dim
    m0 = np.broadcast_to(np.asarray(config.m0, dtype=float), (d,)).copy()
    prior = ex.nig_prior(m0, config.v0_scale * np.eye(d), config.a0, config.b0)
    fs = FilterState(config=config, dim=d)
    fs.pid = np.arange(N, dtype=np.int64)
    fs.expert_m = np.broadcast_to(prior.m, (N, K, d)).copy()
    fs.expert_P = np.broadcast_to(prior.P, (N, K, d, d)).copy()
    fs.expert_a = np.full((N, K), prior.a)
    fs.expert_b = np.full((N, K), prior.b)
    fs.stick_L = np.zeros((N, K - 1, d, d))
    fs.stick_h = np.zeros((N, K - 1, d))
    fs.phi = np.zeros((N, K - 1, d))
    fs.tau2 = np.zeros(N)
    fs.xi = np.zeros(N)
    fs.lambda2 = np.zeros((N, K - 1, d))
    fs.hs_nu = np.zeros((N, K - 1, d))
    for i in range(N):
        g = substream(config.seed, PURPOSE_INIT, i)
        hs = gt.sample_horseshoe_prior(K - 1, d, g)
        fs.tau2[i], fs.xi[i] = hs.tau2, hs.xi
        fs.lambda2[i], fs.hs_nu[i] = hs.lambda2, hs.nu
        fs.phi[i] = gt.sample_phi_prior(hs, g)
    fs.alloc_counts = np.zeros((N, K), dtype=np.int64)
    fs.last_z = np.full(N, -1, dtype=np.int64)
    fs.log_weights = np.zeros(N)
    fs.paths = np.zeros((N, 0), dtype=np.int64) if config.store_paths else None
    return fs


def _component_log_weights(fs: FilterState, x: np.ndarray, y: float) -> np.ndarray:
    """(N, K) matrix of log[P(z=k | x, phi_i) * predictive_k(y)]."""
    if fs.config.n_experts > 1:
        eta = np.einsum("nkd,d->nk", fs.phi, x)
    else:
        eta = np.zeros((fs.n_particles, 0))
    log_gate = gt.stick_log_probabilities(eta)
    nu, mu, s2 = ex.batch_predictive_params(
        fs.expert_m, fs.expert_P, fs.expert_a, fs.expert_b, x
    )
    return log_gate + log_t_density(y, nu, mu, s2)


def _particle_component_log_weights(p: Particle, obs: Observation) -> np.ndarray:
    eta = np.array([float(s.phi @ obs.x) for s in p.gate.sticks])
    log_pred = np.array([ex.nig_log_predictive(e, obs) for e in p.experts])
    return gt.stick_log_probabilities(eta) + log_pred


def predictive_weight(p: Particle, obs: Observation) -> float:
    """Log mixture predictive of one particle, log sum_k g_k * t_k(y)."""
    return float(logsumexp(_particle_component_log_weights(p, obs)))


def allocate(p: Particle, obs: Observation, rng: np.random.Generator) -> int:
    """Draw the expert index (1-based) with probability ~ gate * predictive."""
    return 1 + _draw_categorical(_particle_component_log_weights(p, obs), rng.random())


def _draw_categorical(log_p: np.ndarray, u: float) -> int:
    # small K; plain loops beat numpy call overhead here
    top = max(log_p)
    probs = [math.exp(v - top) for v in log_p]
    target = u * sum(probs)
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if target < acc:
            return i
    return len(probs) - 1


def _canonicalize(fs: FilterState) -> None:
    """Put particle slots in persistent-identity order so results never
    depend on how callers permuted the arrays."""
    if np.all(fs.pid[:-1] < fs.pid[1:]):
        return
    order = np.argsort(fs.pid)
    for name in (
        "pid", "expert_m", "expert_P", "expert_a", "expert_b", "stick_L",
        "stick_h", "phi", "tau2", "xi", "lambda2", "hs_nu", "alloc_counts",
        "last_z", "log_weights",
    ):
        setattr(fs, name, getattr(fs, name)[order])
    if fs.paths is not None:
        fs.paths = fs.paths[order]


def _gather(fs: FilterState, anc: np.ndarray) -> None:
    for name in (
        "expert_m", "expert_P", "expert_a", "expert_b", "stick_L",
        "stick_h", "phi", "tau2", "xi", "lambda2", "hs_nu", "alloc_counts",
        "last_z",
    ):
        setattr(fs, name, getattr(fs, name)[anc])
    if fs.paths is not None:
        fs.paths = fs.paths[anc]


def _copy_ranks(anc: np.ndarray) -> np.ndarray:
    """Rank of each offspring among the copies of its ancestor (anc sorted)."""
    n = anc.size
    change = np.empty(n, dtype=bool)
    change[0] = True
    change[1:] = anc[1:] != anc[:-1]
    start = np.maximum.accumulate(np.where(change, np.arange(n), 0))
    return np.arange(n) - start


def _propagate_slot(fs: FilterState, j: int, epoch: int, anc_pid: int, rank: int,
                    comp_row: np.ndarray, x: np.ndarray, y: float) -> int:
    """Allocate, update and rejuvenate one offspring. Returns b-clamp count."""
    cfg = fs.config
    g = substream(
        cfg.seed, PURPOSE_PROPAGATE, epoch,
        int(anc_pid) >> _PID_SLOT_BITS, int(anc_pid) & _PID_SLOT_MASK, int(rank),
    )
    z = _draw_categorical(comp_row, g.random())

    m2, P2, a2, b2, clamped = ex.nig_update_arrays(
        fs.expert_m[j, z], fs.expert_P[j, z], fs.expert_a[j, z], fs.expert_b[j, z], x, y
    )
    fs.expert_m[j, z] = m2
    fs.expert_P[j, z] = P2
    fs.expert_a[j, z] = a2
    fs.expert_b[j, z] = b2

    n_sticks = cfg.n_experts - 1
    if n_sticks:
        prior_diag = 1.0 / (fs.tau2[j] * fs.lambda2[j])
        for k in range(min(z, n_sticks - 1) + 1):
            omega = sample_polya_gamma_1(float(x @ fs.phi[j, k]), g)
            Lam = fs.stick_L[j, k] + omega * np.outer(x, x)
            fs.stick_L[j, k] = 0.5 * (Lam + Lam.T)
            fs.stick_h[j, k] += ((1.0 if z == k else 0.0) - 0.5) * x
            fs.phi[j, k] = gt.refresh_phi(
                fs.stick_L[j, k], fs.stick_h[j, k], prior_diag[k], g, cfg.phi_refresh
            )
        if cfg.rejuvenate_every and epoch % cfg.rejuvenate_every == 0:
            tau2, xi_new, lam2, nu = gt.horseshoe_sweep(
                fs.phi[j], fs.tau2[j], fs.xi[j], fs.lambda2[j], fs.hs_nu[j], g
            )
            fs.tau2[j], fs.xi[j] = tau2, xi_new
            fs.lambda2[j], fs.hs_nu[j] = lam2, nu

    fs.alloc_counts[j, z] += 1
    fs.last_z[j] = z
    if fs.paths is not None:
        fs.paths[j, -1] = z
    return int(clamped)


def step(fs: FilterState, obs: Observation) -> FilterState:
    """Absorb one observation (mutates and returns ``fs``)."""
    cfg = fs.config
    N = cfg.n_particles
    x, y = obs.x, obs.y
    if x.shape != (fs.dim,):
        raise ValueError(f"observation dimension {x.shape} != filter dimension {fs.dim}")
    epoch = fs.t + 1
    _canonicalize(fs)

    comp = _component_log_weights(fs, x, y)
    log_w = logsumexp(comp, axis=1)
    if not np.any(np.isfinite(log_w)):
        raise FilterDegeneracyError(f"all predictive weights underflowed at t={epoch}")

    new_lw = fs.log_weights + log_w
    fs.log_ml += float(logsumexp(new_lw) - logsumexp(fs.log_weights))
    norm = np.exp(new_lw - logsumexp(new_lw))
    ess = 1.0 / float(np.sum(norm**2))
    fs.ess_history.append(ess)

    if ess <= cfg.resample_threshold * N:
        anc = resample_indices(norm, N, cfg.resampling,
                               substream(cfg.seed, PURPOSE_RESAMPLE, epoch))
        ranks = _copy_ranks(anc)
        anc_pid = fs.pid[anc]
        _gather(fs, anc)
        comp = comp[anc]
        fs.pid = (np.int64(epoch) << _PID_SLOT_BITS) | np.arange(N, dtype=np.int64)
        fs.log_weights = np.zeros(N)
    else:
        ranks = np.zeros(N, dtype=np.int64)
        anc_pid = fs.pid
        fs.log_weights = new_lw - logsumexp(new_lw) + np.log(N)

    if fs.paths is not None:
        fs.paths = np.concatenate(
            [fs.paths, np.zeros((N, 1), dtype=np.int64)], axis=1
        )

    if cfg.n_threads > 1 and N > 1:
        bounds = np.linspace(0, N, cfg.n_threads + 1).astype(int)

        def work(lo, hi):
            return sum(
                _propagate_slot(fs, j, epoch, anc_pid[j], ranks[j], comp[j], x, y)
                for j in range(lo, hi)
            )

        with ThreadPoolExecutor(max_workers=cfg.n_threads) as pool:
            clamps = sum(pool.map(work, bounds[:-1], bounds[1:]))
    else:
        clamps = sum(
            _propagate_slot(fs, j, epoch, anc_pid[j], ranks[j], comp[j], x, y)
            for j in range(N)
        )
    fs.b_clamp_count += clamps
    fs.t = epoch
    return fs


def run(config: FilterConfig, data, dim: int | None = None) -> FilterState:
    """Initialize from the prior and fold ``step`` over the observations.

    ``dim`` is inferred from the first observation; it must be given
    explicitly when ``data`` is empty (the result is then the prior state).
    """
    data = list(data)
    if not data and dim is None:
        raise ValueError("cannot infer dimension from an empty dataset; pass dim")
    fs = init_filter(config, dim if dim is not None else data[0].x.size)
    for obs in data:
        step(fs, obs)
    return fs


def allocation_frequencies(fs: FilterState) -> np.ndarray:
    """Particle-averaged share of allocations per expert, a length-K simplex."""
    if fs.t < 1:
        raise ValueError("no observations processed yet")
    return fs.alloc_counts.mean(axis=0) / fs.t


def expert_scores(
    fs: FilterState,
    x: np.ndarray,
    alpha: float = 0.0,
    include_within_particle_variance: bool = False,
) -> np.ndarray:
    """Uncertainty-penalized routing scores, mean - alpha * sd per expert.

    Sticks are scored on their logit x'phi_k across particles; the last
    category has no own logit and is scored on its log gate probability.
    ``include_within_particle_variance`` adds the per-particle Gaussian
    variance x' (prior + data precision)^-1 x to the stick logit spread.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    x = np.asarray(x, dtype=float)
    K = fs.config.n_experts
    if K > 1:
        eta = np.einsum("nkd,d->nk", fs.phi, x)
    else:
        eta = np.zeros((fs.n_particles, 0))
    log_gate = gt.stick_log_probabilities(eta)
    vals = np.concatenate([eta, log_gate[:, -1:]], axis=1)
    mean = vals.mean(axis=0)
    var = vals.var(axis=0)
    if include_within_particle_variance and K > 1:
        Lam = fs.stick_L.copy()
        idx = np.arange(fs.dim)
        Lam[..., idx, idx] += 1.0 / (fs.tau2[:, None, None] * fs.lambda2)
        u = np.linalg.solve(Lam, np.broadcast_to(x, fs.phi.shape)[..., None])[..., 0]
        var[:-1] += (u @ x).mean(axis=0)
    return mean - alpha * np.sqrt(var)


def select_n_experts(config: FilterConfig, ks, data) -> list[tuple[int, float]]:
    """Run the filter once per candidate expert count; returns (K, log_ml) rows."""
    from dataclasses import replace

    data = list(data)
    rows = []
    for k in sorted(set(int(k) for k in ks)):
        fs = run(replace(config, n_experts=k), data)
        rows.append((k, fs.log_ml))
    return rows


def select_winner(rows) -> int:
    """Expert count with the highest evidence; ties go to the smaller count."""
    best_k, best = None, -np.inf
    for k, log_ml in sorted(rows):
        if log_ml > best:
            best_k, best = k, log_ml
    return best_k
