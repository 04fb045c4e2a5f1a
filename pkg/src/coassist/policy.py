"""PPO policies for both agents: diagonal Gaussian with tanh squashing.

The stored log-probabilities are the Gaussian densities at the pre-squash
sample; the squash is treated as part of the environment interface, which
keeps the surrogate objective and its gradients in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .nets import MLP, Adam, clip_grad_norm

LOG_STD_INIT = math.log(0.5)
LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
HIDDEN = (64, 64)


class NanGradientError(RuntimeError):
    """Raised when an update produces non-finite gradients or losses."""


@dataclass
class PpoConfig:
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    lr: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    discount: float = 0.99
    gae_lambda: float = 0.95
    max_grad_norm: float = 0.5
    adv_eps: float = 1e-8


class ActResult(NamedTuple):
    action: np.ndarray
    pre_squash: np.ndarray
    log_prob: float
    value: float


class GaussianPolicy:
    """Mean/value MLPs plus a state-independent log-std vector."""

    def __init__(self, obs_dim: int, act_dim: int, rng: np.random.Generator):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.mean_net = MLP([obs_dim, *HIDDEN, act_dim], rng, out_scale=0.01)
        self.log_std = np.full(act_dim, LOG_STD_INIT)
        self.value_net = MLP([obs_dim, *HIDDEN, 1], rng)
        self.optimizer = Adam(self._all_params())

    def _all_params(self) -> List[np.ndarray]:
        return [*self.mean_net.param_list(), self.log_std,
                *self.value_net.param_list()]

    def _check_input(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"input width {obs.shape[-1]}, expected {self.obs_dim}")
        return obs

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> ActResult:
        """Sample an action; returns the squashed action plus bookkeeping."""
        obs = self._check_input(obs)
        mean = self.mean_net(obs)
        value = float(self.value_net(obs)[0])
        std = np.exp(self.log_std)
        pre = mean + std * rng.standard_normal(self.act_dim)
        log_prob = float(
            -0.5 * np.sum(((pre - mean) / std) ** 2)
            - np.sum(self.log_std)
            - 0.5 * self.act_dim * math.log(2.0 * math.pi)
        )
        return ActResult(np.tanh(pre), pre, log_prob, value)

    def act_deterministic(self, obs: np.ndarray) -> np.ndarray:
        obs = self._check_input(obs)
        return np.tanh(self.mean_net(obs))

    def log_probs(self, obs: np.ndarray, pre: np.ndarray):
        """Batched log-density at the stored pre-squash actions."""
        mean, cache = self.mean_net.forward(obs)
        std = np.exp(self.log_std)
        z = (pre - mean) / std
        logp = (
            -0.5 * np.sum(z * z, axis=1)
            - np.sum(self.log_std)
            - 0.5 * self.act_dim * math.log(2.0 * math.pi)
        )
        return logp, mean, cache

    def entropy(self) -> float:
        return float(np.sum(self.log_std) +
                     0.5 * self.act_dim * math.log(2.0 * math.pi * math.e))

    # ----------------------------------------------------- serialization
    def to_arrays(self) -> Dict[str, np.ndarray]:
        out = {"log_std": self.log_std.copy()}
        for i, (w, b) in enumerate(zip(self.mean_net.weights, self.mean_net.biases)):
            out[f"mean.w{i}"] = w.copy()
            out[f"mean.b{i}"] = b.copy()
        for i, (w, b) in enumerate(zip(self.value_net.weights, self.value_net.biases)):
            out[f"value.w{i}"] = w.copy()
            out[f"value.b{i}"] = b.copy()
        return out

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        self.log_std[...] = arrays["log_std"]
        for i in range(self.mean_net.n_layers):
            self.mean_net.weights[i][...] = arrays[f"mean.w{i}"]
            self.mean_net.biases[i][...] = arrays[f"mean.b{i}"]
        for i in range(self.value_net.n_layers):
            self.value_net.weights[i][...] = arrays[f"value.w{i}"]
            self.value_net.biases[i][...] = arrays[f"value.b{i}"]


# ------------------------------------------------------------------ GAE
def gae(rewards, values, bootstrap: float, discount: float, lam: float):
    """Generalized advantage estimation by the standard backward recursion."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1 or rewards.size == 0:
        raise ValueError("rewards and values must be equal-length 1-d sequences")
    if not (0.0 <= discount <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("discount and lambda must lie in [0, 1]")
    T = rewards.size
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        next_v = bootstrap if t == T - 1 else values[t + 1]
        delta = rewards[t] + discount * next_v - values[t]
        running = delta + discount * lam * running
        adv[t] = running
    return adv


# ------------------------------------------------------- rollout storage
@dataclass
class EpisodeLane:
    """One agent's per-step records for a single episode."""

    obs: np.ndarray
    pre_squash: np.ndarray
    log_prob: np.ndarray
    reward: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


@dataclass
class RolloutBuffer:
    """Epoch storage: per-agent PPO lanes plus separate joint-info lanes.

    The joint snapshots (and penalty/task lanes) feed the anticipation and
    utility modules only; ``episodes(agent)`` is the sole view the PPO
    update consumes, so the isolation is structural.
    """

    lanes: Dict[str, List[EpisodeLane]] = field(
        default_factory=lambda: {"human": [], "robot": []}
    )
    joint_h: List[np.ndarray] = field(default_factory=list)
    joint_r: List[np.ndarray] = field(default_factory=list)
    penalties: List[np.ndarray] = field(default_factory=list)
    task_rewards: List[np.ndarray] = field(default_factory=list)
    successes: List[bool] = field(default_factory=list)

    def add_episode(self, human: EpisodeLane, robot: EpisodeLane,
                    joint_h: np.ndarray, joint_r: np.ndarray,
                    penalties: np.ndarray, task_rewards: np.ndarray,
                    success: bool) -> None:
        T = len(human)
        for name, arr in (("robot lane", robot.obs), ("joint_h", joint_h),
                          ("joint_r", joint_r), ("penalties", penalties),
                          ("task_rewards", task_rewards)):
            if arr.shape[0] != T:
                raise ValueError(f"{name} length {arr.shape[0]} != episode length {T}")
        self.lanes["human"].append(human)
        self.lanes["robot"].append(robot)
        self.joint_h.append(joint_h)
        self.joint_r.append(joint_r)
        self.penalties.append(penalties)
        self.task_rewards.append(task_rewards)
        self.successes.append(success)

    def episodes(self, agent: str) -> List[EpisodeLane]:
        return self.lanes[agent]

    def joint_sequences(self):
        return list(zip(self.joint_h, self.joint_r))

    @property
    def n_episodes(self) -> int:
        return len(self.successes)


# ------------------------------------------------------------ PPO update
def _surrogate_grads(policy: GaussianPolicy, obs, pre, logp_old, adv, ret,
                     cfg: PpoConfig):
    """Loss and gradients for one minibatch; everything in closed form."""
    B = obs.shape[0]
    logp, mean, cache_m = policy.log_probs(obs, pre)
    std = np.exp(policy.log_std)
    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr2 = clipped * adv
    take1 = surr1 <= surr2
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))

    # d(policy_loss)/d(logp): active only where the unclipped branch wins
    dlogp = np.where(take1, -ratio * adv / B, 0.0)
    z = (pre - mean) / std
    dmean = dlogp[:, None] * (z / std)
    mean_grads, _ = policy.mean_net.backward(cache_m, dmean)
    dlogstd = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    # entropy bonus: d(-coef * H)/d(log_std) = -coef per component
    dlogstd -= cfg.entropy_coef
    ent = policy.entropy()

    v, cache_v = policy.value_net.forward(obs)
    verr = v[:, 0] - ret
    value_loss = 0.5 * float(np.mean(verr * verr))
    dv = (cfg.value_coef * verr / B)[:, None]
    value_grads, _ = policy.value_net.backward(cache_v, dv)

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * ent
    grads = [g for pair in mean_grads for g in pair]
    grads.append(dlogstd)
    grads.extend(g for pair in value_grads for g in pair)
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent,
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_frac": float(np.mean(~take1)),
    }
    return loss, grads, stats


def ppo_update(policy: GaussianPolicy, episodes: List[EpisodeLane],
               cfg: PpoConfig, rng: np.random.Generator) -> Dict[str, float]:
    """Run clipped-surrogate updates over one epoch of episodes."""
    if not episodes:
        raise ValueError("empty rollout buffer")
    advs = []
    rets = []
    for ep in episodes:
        a = gae(ep.reward, ep.value, 0.0, cfg.discount, cfg.gae_lambda)
        advs.append(a)
        rets.append(a + ep.value)
    obs = np.concatenate([ep.obs for ep in episodes])
    pre = np.concatenate([ep.pre_squash for ep in episodes])
    logp_old = np.concatenate([ep.log_prob for ep in episodes])
    adv = np.concatenate(advs)
    ret = np.concatenate(rets)
    adv = (adv - adv.mean()) / (adv.std() + cfg.adv_eps)

    n = obs.shape[0]
    order = np.arange(n)
    agg: Dict[str, float] = {}
    batches = 0
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            loss, grads, stats = _surrogate_grads(
                policy, obs[idx], pre[idx], logp_old[idx], adv[idx], ret[idx], cfg
            )
            if not np.isfinite(loss) or any(
                not np.all(np.isfinite(g)) for g in grads
            ):
                raise NanGradientError(
                    f"non-finite loss/gradient in PPO update (loss={loss!r})"
                )
            clip_grad_norm(grads, cfg.max_grad_norm)
            policy.optimizer.lr = cfg.lr
            policy.optimizer.step(policy._all_params(), grads)
            np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=policy.log_std)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            batches += 1
    return {k: v / batches for k, v in agg.items()}
