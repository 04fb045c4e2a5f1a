"""Preference-weight inference from buffered demonstrations.

Demonstrations are the buffer's best episodes by task reward; each is scored
against buffer-drawn alternatives under a softmax likelihood in the weight
vector, which a Metropolis-Hastings chain samples over the unit ball.  Chain
means are folded into a running estimate with a configurable merge ratio,
and the resulting preference reward is scaled by the latest success rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import FeatureVector, WeightEstimate
from .core import estimated_preference_reward as _contract

log = logging.getLogger(__name__)

BALL_TOL = 1e-9
MIN_PARTICLES = 100


@dataclass(frozen=True)
class DemoSet:
    """Demo feature rows plus per-demo alternative rows from the same buffer."""

    features: np.ndarray       # (n, m)
    alternatives: np.ndarray   # (n, K, m)

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        a = np.asarray(self.alternatives, dtype=np.float64)
        if f.ndim != 2:
            raise ValueError("features must be (n, m)")
        if a.ndim != 3 or a.shape[0] != f.shape[0] or a.shape[2] != f.shape[1]:
            raise ValueError("alternatives must be (n, K, m) matching features")
        if f.shape[0] > 0 and a.shape[1] < 1:
            raise ValueError("need at least one alternative per demo")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(a))):
            raise ValueError("demo features must be finite")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "alternatives", a)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return self.alternatives.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def score_rows(self) -> np.ndarray:
        """Stacked (n, K+1, m) rows with each demo first in its group."""
        return np.concatenate([self.features[:, None, :], self.alternatives], axis=1)


def build_demo_set(features: np.ndarray, task_rewards: np.ndarray, n: int,
                   k: int, rng: np.random.Generator) -> DemoSet:
    """Top-n episodes by task reward as demos, K buffer rows each as alternatives."""
    features = np.asarray(features, dtype=np.float64)
    task_rewards = np.asarray(task_rewards, dtype=np.float64)
    pool = features.shape[0]
    if features.ndim != 2 or task_rewards.shape != (pool,):
        raise ValueError("features must be (P, m) with matching task_rewards")
    if pool < n:
        raise ValueError(f"pool has {pool} episodes, need {n}")
    order = np.argsort(-task_rewards, kind="stable")
    demo_idx = order[:n]
    alts = np.empty((n, k, features.shape[1]))
    for j, i in enumerate(demo_idx):
        others = np.delete(np.arange(pool), i)
        replace = others.size < k
        pick = rng.choice(others, size=k, replace=replace)
        alts[j] = features[pick]
    return DemoSet(features[demo_idx], alts)


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def log_posterior(w, demos: DemoSet) -> float:
    """Sum of per-demo softmax log-likelihoods at weight vector w."""
    w = w.w if isinstance(w, WeightEstimate) else np.asarray(w, dtype=np.float64)
    if w.shape != (demos.dim,):
        raise ValueError(f"weight dim {w.shape}, expected ({demos.dim},)")
    if np.linalg.norm(w) > 1.0 + BALL_TOL:
        raise ValueError("weight vector outside the unit ball")
    if demos.n == 0:
        return 0.0
    scores = demos.score_rows() @ w          # (n, K+1), demo first
    return float(np.sum(scores[:, 0] - _logsumexp(scores, axis=1)))


@dataclass(frozen=True)
class WeightPosterior:
    """Thinned post-burn-in particles plus chain diagnostics."""

    particles: np.ndarray
    acceptance_rate: float
    post_adapt_rate: float
    proposal_std: float
    ess: float
    low_acceptance: bool = False

    def __post_init__(self):
        p = np.asarray(self.particles, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < MIN_PARTICLES:
            raise ValueError(f"need at least {MIN_PARTICLES} particles, got {p.shape}")
        norms = np.linalg.norm(p, axis=1)
        if np.any(norms > 1.0 + 1e-12):
            raise ValueError("particle outside unit ball")
        object.__setattr__(self, "particles", p)

    def mean(self) -> WeightEstimate:
        return WeightEstimate(self.particles.mean(axis=0))


def _ess(chain: np.ndarray) -> float:
    """Smallest per-dimension effective sample size (initial positive sequence)."""
    n, dim = chain.shape
    if n < 10:
        return float(n)
    out = []
    for d in range(dim):
        x = chain[:, d] - chain[:, d].mean()
        var = float(np.dot(x, x)) / n
        if var == 0.0:
            out.append(float(n))
            continue
        # autocorrelation via FFT
        size = 1
        while size < 2 * n:
            size *= 2
        f = np.fft.rfft(x, size)
        acf = np.fft.irfft(f * np.conj(f), size)[:n].real
        acf /= acf[0]
        total = 0.0
        for lag in range(1, n):
            if acf[lag] <= 0.0:
                break
            total += acf[lag]
        out.append(n / (1.0 + 2.0 * total))
    return float(min(out))


def mcmc_sample(demos: DemoSet, n_samples: int = 20000, burn_in: int = 5000,
                proposal_std: float = 0.05, seed: int = 0, thin: int = 10,
                target_accept: float = 0.3) -> WeightPosterior:
    """Metropolis-Hastings over the unit ball with one step-size adaptation.

    Proposals landing outside the ball are rejected outright (zero prior
    mass there), so the stationary law is the posterior restricted to the
    ball.  Fully deterministic given (demos, seed, settings).
    """
    if burn_in < 0 or n_samples <= burn_in:
        raise ValueError("need n_samples > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    kept_target = (n_samples - burn_in + thin - 1) // thin
    if kept_target < MIN_PARTICLES:
        raise ValueError(
            f"settings keep only {kept_target} particles, need {MIN_PARTICLES}"
        )
    m = demos.dim
    rng = np.random.default_rng(seed)
    rows = demos.score_rows().reshape(-1, m) if demos.n else None
    nk = demos.k + 1 if demos.n else 0

    def lp(w: np.ndarray) -> float:
        if rows is None:
            return 0.0
        s = (rows @ w).reshape(demos.n, nk)
        return float(np.sum(s[:, 0] - _logsumexp(s, axis=1)))

    w = np.zeros(m)
    cur = lp(w)
    std = float(proposal_std)
    adapt_at = min(1000, burn_in // 2) if burn_in else 0
    accepted = 0
    accepted_post = 0
    steps_post = 0
    kept = []

    block = 4096
    i = 0
    while i < n_samples:
        nb = min(block, n_samples - i)
        noise = rng.standard_normal((nb, m))
        logu = np.log(1.0 - rng.random(nb))
        for j in range(nb):
            step = i + j
            prop = w + std * noise[j]
            if np.dot(prop, prop) <= 1.0:
                cand = lp(prop)
                if cand - cur >= logu[j]:
                    w = prop
                    cur = cand
                    accepted += 1
                    if step >= adapt_at:
                        accepted_post += 1
            if step >= adapt_at:
                steps_post += 1
            if step >= burn_in and (step - burn_in) % thin == 0:
                kept.append(w.copy())
            if adapt_at and step + 1 == adapt_at:
                rate = accepted / adapt_at
                scale = (rate + 0.05) / (target_accept + 0.05)
                std *= float(np.clip(scale, 0.1, 10.0))
        i += nb

    particles = np.stack(kept)
    acc = accepted / n_samples
    acc_post = accepted_post / max(1, steps_post)
    low = acc_post < 0.01
    if low:
        log.warning("MCMC acceptance rate %.4f after adaptation", acc_post)
    return WeightPosterior(
        particles=particles,
        acceptance_rate=acc,
        post_adapt_rate=acc_post,
        proposal_std=std,
        ess=_ess(particles),
        low_acceptance=low,
    )


def merge_estimate(new_mean: WeightEstimate, prev: WeightEstimate,
                   merge_ratio: float) -> WeightEstimate:
    """Blend the newest chain mean with the previous estimate.

    The ratio weights the previous estimate: 0 adopts the new mean outright,
    1 freezes the old one.  Interior ratios blend direction and magnitude
    separately so the result stays inside the unit ball.
    """
    if not 0.0 <= merge_ratio <= 1.0:
        raise ValueError(f"merge_ratio {merge_ratio} outside [0, 1]")
    if new_mean.w.shape != prev.w.shape:
        raise ValueError("estimate dimensions differ")
    if merge_ratio == 0.0:
        return new_mean
    if merge_ratio == 1.0:
        return prev
    blend = (1.0 - merge_ratio) * new_mean.w + merge_ratio * prev.w
    norm = float(np.linalg.norm(blend))
    if norm == 0.0:
        return WeightEstimate(np.zeros_like(blend))
    mag = (1.0 - merge_ratio) * new_mean.norm() + merge_ratio * prev.norm()
    return WeightEstimate(blend * (mag / norm))


@dataclass(frozen=True)
class UtilityEstimate:
    """Running weight estimate with its update count and success-rate gate."""

    w_hat: WeightEstimate
    epoch: int = 0
    gate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gate <= 1.0:
            raise ValueError(f"gate {self.gate} outside [0, 1]")

    @classmethod
    def initial(cls, dim: int = 3) -> "UtilityEstimate":
        return cls(WeightEstimate.zero(dim), epoch=0, gate=0.0)


def estimated_pref_reward(f: FeatureVector, est: UtilityEstimate) -> float:
    """Gated preference reward under the current estimate."""
    return est.gate * _contract(f, est.w_hat)


@dataclass
class UtilityConfig:
    n_demos: int = 10
    n_alternatives: int = 8
    merge_ratio: float = 0.3
    mcmc_steps: int = 20000
    mcmc_burn_in: int = 5000
    mcmc_thin: int = 10
    proposal_std: float = 0.05


@dataclass
class CycleInfo:
    """Diagnostics from one utility update cycle."""

    updated: bool
    reason: str = ""
    pool_size: int = 0
    chain_mean: Optional[np.ndarray] = None
    acceptance_rate: float = float("nan")
    ess: float = float("nan")
    proposal_std: float = float("nan")


def update_cycle(features: np.ndarray, task_rewards: np.ndarray,
                 prev: UtilityEstimate, config: UtilityConfig,
                 success_rate: float, seed: int) -> Tuple[UtilityEstimate, CycleInfo]:
    """One inference cycle over the episode pool; a small pool is a no-op."""
    features = np.asarray(features, dtype=np.float64)
    pool = features.shape[0]
    if pool < config.n_demos:
        return prev, CycleInfo(
            updated=False,
            reason=f"insufficient episodes: {pool} < {config.n_demos}",
            pool_size=pool,
        )
    rng = np.random.default_rng(seed)
    demos = build_demo_set(features, task_rewards, config.n_demos,
                           config.n_alternatives, rng)
    posterior = mcmc_sample(
        demos,
        n_samples=config.mcmc_steps,
        burn_in=config.mcmc_burn_in,
        proposal_std=config.proposal_std,
        seed=int(rng.integers(0, 2**63 - 1)),
        thin=config.mcmc_thin,
    )
    new_mean = posterior.mean()
    merged = merge_estimate(new_mean, prev.w_hat, config.merge_ratio)
    est = UtilityEstimate(merged, epoch=prev.epoch + 1, gate=float(success_rate))
    info = CycleInfo(
        updated=True,
        pool_size=pool,
        chain_mean=new_mean.w.copy(),
        acceptance_rate=posterior.acceptance_rate,
        ess=posterior.ess,
        proposal_std=posterior.proposal_std,
    )
    return est, info
