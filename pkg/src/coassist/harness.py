"""End-to-end training loop: rollouts, reward routing, update cadence, evaluation.

The robot's reward stream depends on the configured mode:

  misaligned       task reward only
  co_opt           the human's reward array, shared object and all
  ours_full        task + gate * estimated preference reward
  ours_no_utility  task reward only, but the anticipation input stays on

The true preference weights touch only the human reward stream; the robot
side sees them exclusively through penalty events routed into the utility
module's featurization.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .anticipation import (
    K_MAX,
    AnticipationModel,
    augment_observation,
    augmented_dim,
    build_window,
    train as train_anticipation,
)
from .checkpoints import save_arrays
from .config import ExperimentConfig
from .core import (
    RewardBreakdown,
    Trajectory,
    TrajectoryStep,
    episode_features,
    estimated_preference_reward,
    make_breakdown,
    preference_reward,
)
from .env import AssistEnv
from .policy import (
    EpisodeLane,
    GaussianPolicy,
    NanGradientError,
    RolloutBuffer,
    ppo_update,
)
from .utility import UtilityEstimate, update_cycle


class RunAbort(RuntimeError):
    """Unrecoverable run failure; ``category`` selects the process exit code."""

    def __init__(self, message: str, category: str = "nan"):
        super().__init__(message)
        self.category = category


class EpisodeRecord(NamedTuple):
    trajectory: Trajectory
    breakdown: RewardBreakdown
    human_stream: np.ndarray
    robot_stream: np.ndarray
    task_stream: np.ndarray
    penalties: np.ndarray
    joint_h: np.ndarray
    joint_r: np.ndarray
    features: np.ndarray
    success: bool


@dataclass
class EvalResult:
    """Aggregate metrics from one deterministic evaluation pass."""

    epoch: int
    n_episodes: int
    mean_human_reward: float
    mean_robot_reward: float
    mean_task_reward: float
    mean_hit: float
    mean_force: float
    mean_high_force: float
    success_rate: float

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError(f"success rate {self.success_rate} outside [0, 1]")


@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    out_dir: Optional[Path]
    evals: List[EvalResult] = field(default_factory=list)
    curves: List[dict] = field(default_factory=list)
    posterior_rows: List[dict] = field(default_factory=list)
    estimate: Optional[UtilityEstimate] = None
    spec_string: str = ""


def _policy_obs(obs_r, ant_model, t, k_in, jh, jr):
    """Robot observation with the prediction block appended."""
    window = build_window(jh[: t + 1], jr[: t + 1], t, k_in)
    pred = ant_model.predict(window)
    return augment_observation(obs_r, pred, k_max=ant_model.k_max)


def rollout_episode(env: AssistEnv, human_policy: GaussianPolicy,
                    robot_policy: GaussianPolicy, w_true, estimate: UtilityEstimate,
                    reward_mode: str, ant_model: Optional[AnticipationModel],
                    anticipation_on: bool, k_in: int, env_seed: int,
                    rng_h: Optional[np.random.Generator] = None,
                    rng_r: Optional[np.random.Generator] = None,
                    ) -> Tuple[Optional[EpisodeLane], Optional[EpisodeLane], EpisodeRecord]:
    """Run one episode; sampled when rngs are given, deterministic otherwise.

    Returns (human lane, robot lane, record); lanes are None in the
    deterministic case since there is nothing for PPO to consume.
    """
    sample = rng_h is not None
    state, obs_h, obs_r = env.reset(seed=env_seed)
    horizon = env.spec.horizon
    d_h = env.joint_info_h(state).shape[0]
    d_r = env.joint_info_r(state).shape[0]
    jh = np.empty((horizon, d_h))
    jr = np.empty((horizon, d_r))

    steps = []
    obs_lane_h, obs_lane_r = [], []
    pre_h, pre_r, logp_h, logp_r, val_h, val_r = [], [], [], [], [], []
    r_h_steps, r_r_steps, task_steps, pen_rows = [], [], [], []
    gate = estimate.gate
    w_hat = estimate.w_hat.w

    t = 0
    while True:
        jh[t] = env.joint_info_h(state)
        jr[t] = env.joint_info_r(state)
        if anticipation_on:
            obs_r_pol = _policy_obs(obs_r, ant_model, t, k_in, jh, jr)
        else:
            obs_r_pol = obs_r

        if sample:
            res_h = human_policy.act(obs_h, rng_h)
            res_r = robot_policy.act(obs_r_pol, rng_r)
            action_h, action_r = res_h.action, res_r.action
        else:
            action_h = human_policy.act_deterministic(obs_h)
            action_r = robot_policy.act_deterministic(obs_r_pol)
        if not (np.all(np.isfinite(action_h)) and np.all(np.isfinite(action_r))):
            raise RunAbort(f"non-finite action at step {t}", category="nan")

        result = env.step(state, action_h, action_r)
        pen = result.events
        task_r = result.task_reward
        pref_step = (w_true.w_hit * pen.hit + w_true.w_force * pen.force
                     + w_true.w_high_force * pen.high_force)
        human_r = task_r + pref_step
        if reward_mode == "ours_full":
            est_step = (w_hat[0] * pen.hit + w_hat[1] * pen.force
                        + w_hat[2] * pen.high_force)
            robot_r = task_r + gate * est_step
        else:
            # co_opt shares the human array below; misaligned and
            # ours_no_utility train the robot on task reward alone.
            robot_r = task_r

        # trajectory steps log the resulting state, as env.success expects
        steps.append(TrajectoryStep(
            state=result.state, obs_h=result.obs_h, obs_r=result.obs_r,
            action_h=action_h, action_r=action_r, penalties=pen,
            task_reward=task_r,
        ))
        if sample:
            obs_lane_h.append(obs_h)
            obs_lane_r.append(obs_r_pol)
            pre_h.append(res_h.pre_squash)
            pre_r.append(res_r.pre_squash)
            logp_h.append(res_h.log_prob)
            logp_r.append(res_r.log_prob)
            val_h.append(res_h.value)
            val_r.append(res_r.value)
        r_h_steps.append(human_r)
        r_r_steps.append(robot_r)
        task_steps.append(task_r)
        pen_rows.append(pen.as_array())

        state, obs_h, obs_r = result.state, result.obs_h, result.obs_r
        t += 1
        if result.done:
            break

    trajectory = Trajectory(steps=tuple(steps), success=False, horizon=horizon)
    success = env.success(trajectory)
    trajectory = replace(trajectory, success=success)
    feats = episode_features(trajectory)
    task_total = 0.0
    for s in steps:
        task_total += s.task_reward
    pref_true = preference_reward(feats, w_true)
    pref_est = estimated_preference_reward(feats, estimate.w_hat)
    breakdown = make_breakdown(task_total, pref_true, pref_est, gate,
                               shared=reward_mode == "co_opt")

    human_stream = np.array(r_h_steps)
    robot_stream = human_stream if reward_mode == "co_opt" else np.array(r_r_steps)
    record = EpisodeRecord(
        trajectory=trajectory, breakdown=breakdown, human_stream=human_stream,
        robot_stream=robot_stream, task_stream=np.array(task_steps),
        penalties=np.array(pen_rows), joint_h=jh[:t].copy(), joint_r=jr[:t].copy(),
        features=feats.as_array(), success=success,
    )
    if not sample:
        return None, None, record
    human_lane = EpisodeLane(np.array(obs_lane_h), np.array(pre_h),
                             np.array(logp_h), human_stream, np.array(val_h))
    robot_lane = EpisodeLane(np.array(obs_lane_r), np.array(pre_r),
                             np.array(logp_r), robot_stream, np.array(val_r))
    return human_lane, robot_lane, record


def collect_epoch(env, human_policy, robot_policy, w_true, estimate, reward_mode,
                  ant_model, anticipation_on, k_in, n_episodes, env_seed_rng,
                  rng_h, rng_r) -> Tuple[RolloutBuffer, List[EpisodeRecord]]:
    """Collect one epoch of sampled episodes into a rollout buffer."""
    buffer = RolloutBuffer()
    records = []
    for _ in range(n_episodes):
        env_seed = int(env_seed_rng.integers(0, 2**31))
        lane_h, lane_r, record = rollout_episode(
            env, human_policy, robot_policy, w_true, estimate, reward_mode,
            ant_model, anticipation_on, k_in, env_seed, rng_h, rng_r)
        buffer.add_episode(lane_h, lane_r, record.joint_h, record.joint_r,
                           record.penalties, record.task_stream, record.success)
        records.append(record)
    return buffer, records


def summarize_records(epoch: int, records: List[EpisodeRecord]) -> EvalResult:
    """Aggregate episode breakdowns into the standard metric fields."""
    if not records:
        raise ValueError("no episodes to summarize")
    feats = np.stack([r.features for r in records])
    return EvalResult(
        epoch=epoch,
        n_episodes=len(records),
        mean_human_reward=float(np.mean([r.breakdown.human_total for r in records])),
        mean_robot_reward=float(np.mean([r.breakdown.robot_total for r in records])),
        mean_task_reward=float(np.mean([r.breakdown.task for r in records])),
        mean_hit=float(np.mean(feats[:, 0])),
        mean_force=float(np.mean(feats[:, 1])),
        mean_high_force=float(np.mean(feats[:, 2])),
        success_rate=float(np.mean([r.success for r in records])),
    )


def evaluate(env, human_policy, robot_policy, w_true, estimate, reward_mode,
             ant_model, anticipation_on, k_in, n_episodes, seed,
             epoch: int = 0) -> Tuple[EvalResult, List[EpisodeRecord]]:
    """Deterministic evaluation: policy means, no exploration noise."""
    seed_rng = np.random.default_rng(seed)
    records = []
    for _ in range(n_episodes):
        env_seed = int(seed_rng.integers(0, 2**31))
        _, _, record = rollout_episode(
            env, human_policy, robot_policy, w_true, estimate, reward_mode,
            ant_model, anticipation_on, k_in, env_seed)
        records.append(record)
    return summarize_records(epoch, records), records


def _save_checkpoints(out_dir: Path, prefix: str, human_policy, robot_policy,
                      ant_model) -> None:
    save_arrays(out_dir / f"{prefix}policy_human.bin", "policy",
                human_policy.to_arrays())
    save_arrays(out_dir / f"{prefix}policy_robot.bin", "policy",
                robot_policy.to_arrays())
    if ant_model is not None:
        save_arrays(out_dir / f"{prefix}anticipation.bin", "anticipation",
                    ant_model.to_arrays())


def run_training(config: ExperimentConfig, seed: int,
                 out_dir=None, log=None) -> RunResult:
    """Train both agents under the configured reward mode; returns all metrics.

    When ``out_dir`` is given, writes the canonical config, final checkpoints,
    CSV reports, and figures there.  All randomness descends from ``seed``.
    """
    from .report import emit_report

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    env = AssistEnv(config.task)
    w_true = config.true_weights()
    ant_on = config.anticipation_active()
    k_in = config.anticipation.k_in

    ss = np.random.SeedSequence(seed)
    (ss_init_h, ss_init_r, ss_init_ant, ss_env, ss_act_h, ss_act_r,
     ss_ppo_h, ss_ppo_r, ss_ant_train, ss_util, ss_eval) = ss.spawn(11)

    state0, _, _ = env.reset(seed=0)
    d_h = env.joint_info_h(state0).shape[0]
    d_r = env.joint_info_r(state0).shape[0]
    obs_dim_robot = (augmented_dim(env.obs_dim_r, d_h, K_MAX)
                     if ant_on else env.obs_dim_r)
    human_policy = GaussianPolicy(env.obs_dim_h, env.act_dim_h,
                                  np.random.default_rng(ss_init_h))
    robot_policy = GaussianPolicy(obs_dim_robot, env.act_dim_r,
                                  np.random.default_rng(ss_init_r))
    ant_model = AnticipationModel(d_h, d_r, k_in=k_in,
                                  rng=np.random.default_rng(ss_init_ant))
    estimate = UtilityEstimate.initial()

    env_seed_rng = np.random.default_rng(ss_env)
    rng_h = np.random.default_rng(ss_act_h)
    rng_r = np.random.default_rng(ss_act_r)
    ppo_rng_h = np.random.default_rng(ss_ppo_h)
    ppo_rng_r = np.random.default_rng(ss_ppo_r)
    ant_rng = np.random.default_rng(ss_ant_train)
    util_rng = np.random.default_rng(ss_util)
    eval_rng = np.random.default_rng(ss_eval)

    pool = deque(maxlen=config.anticipation.update_every * config.episodes_per_epoch)
    result = RunResult(config=config, seed=seed, out_dir=out_dir,
                       spec_string=env.spec_string)

    def run_eval(epoch: int) -> EvalResult:
        metrics, _ = evaluate(env, human_policy, robot_policy, w_true, estimate,
                              config.reward_mode, ant_model, ant_on, k_in,
                              config.eval_episodes,
                              seed=int(eval_rng.integers(0, 2**31)), epoch=epoch)
        result.evals.append(metrics)
        if log:
            log(f"eval epoch {epoch}: human {metrics.mean_human_reward:.2f} "
                f"success {metrics.success_rate:.2f}")
        return metrics

    try:
        baseline = run_eval(0)
        estimate = replace(estimate, gate=baseline.success_rate)

        for epoch in range(config.total_epochs):
            buffer, records = collect_epoch(
                env, human_policy, robot_policy, w_true, estimate,
                config.reward_mode, ant_model, ant_on, k_in,
                config.episodes_per_epoch, env_seed_rng, rng_h, rng_r)
            pool.extend(records)

            ant_mse = math.nan
            util_seed = int(util_rng.integers(0, 2**63 - 1))
            if epoch % config.anticipation.update_every == 0:
                if ant_on:
                    sequences = [(r.joint_h, r.joint_r) for r in pool]
                    try:
                        _, ant_mse = train_anticipation(
                            ant_model, sequences, config.anticipation.train_steps,
                            config.anticipation.learning_rate,
                            config.anticipation.batch_size, ant_rng)
                    except ValueError:
                        # every pooled episode shorter than one full window
                        ant_mse = math.nan
                if config.utility_active():
                    feats = np.stack([r.features for r in pool])
                    tasks = np.array([r.breakdown.task for r in pool])
                    estimate, info = update_cycle(
                        feats, tasks, estimate, config.utility,
                        success_rate=estimate.gate, seed=util_seed)
                    w = estimate.w_hat.w
                    chain = (info.chain_mean if info.chain_mean is not None
                             else np.full(w.shape[0], math.nan))
                    result.posterior_rows.append({
                        "epoch": epoch, "updated": int(info.updated),
                        "pool_size": info.pool_size,
                        "w_hat_hit": w[0], "w_hat_force": w[1],
                        "w_hat_high_force": w[2],
                        "chain_hit": chain[0], "chain_force": chain[1],
                        "chain_high_force": chain[2],
                        "acceptance_rate": info.acceptance_rate,
                        "ess": info.ess, "gate": estimate.gate,
                    })

            stats_h = ppo_update(human_policy, buffer.episodes("human"),
                                 config.ppo, ppo_rng_h)
            stats_r = ppo_update(robot_policy, buffer.episodes("robot"),
                                 config.ppo, ppo_rng_r)

            epoch_metrics = summarize_records(epoch, records)
            result.curves.append({
                "epoch": epoch,
                "human_reward": epoch_metrics.mean_human_reward,
                "robot_reward": epoch_metrics.mean_robot_reward,
                "task_reward": epoch_metrics.mean_task_reward,
                "hit": epoch_metrics.mean_hit,
                "force": epoch_metrics.mean_force,
                "high_force": epoch_metrics.mean_high_force,
                "success_rate": epoch_metrics.success_rate,
                "policy_loss_h": stats_h["policy_loss"],
                "policy_loss_r": stats_r["policy_loss"],
                "value_loss_h": stats_h["value_loss"],
                "value_loss_r": stats_r["value_loss"],
                "anticipation_mse": ant_mse,
                "gate": estimate.gate,
            })
            if log and (epoch + 1) % 10 == 0:
                log(f"epoch {epoch + 1}/{config.total_epochs}: "
                    f"human {epoch_metrics.mean_human_reward:.2f} "
                    f"success {epoch_metrics.success_rate:.2f}")

            if (epoch + 1) % config.eval_every == 0:
                metrics = run_eval(epoch + 1)
                estimate = replace(estimate, gate=metrics.success_rate)
    except (NanGradientError, RunAbort) as exc:
        if out_dir is not None:
            _save_checkpoints(out_dir, "abort_", human_policy, robot_policy,
                              ant_model if ant_on else None)
        raise RunAbort(f"run aborted at seed {seed}: {exc}") from exc

    result.estimate = estimate
    if out_dir is not None:
        from .config import save_config

        save_config(config, out_dir / "config.ini")
        _save_checkpoints(out_dir, "", human_policy, robot_policy,
                          ant_model if ant_on else None)
        save_arrays(out_dir / "estimate.bin", "estimate", {
            "w_hat": estimate.w_hat.w,
            "meta": np.array([float(estimate.epoch), estimate.gate]),
        })
        emit_report(out_dir, result)
    return result


SWEEP_AXES = {
    "preference_setting": (1, 2, 3, 4),
    "merge_ratio": (0.0, 0.1, 0.3, 0.5),
    "reward_mode": ("misaligned", "co_opt", "ours_full", "ours_no_utility"),
    "module_ablation": ("full", "no_anticipation", "no_utility", "none"),
}

# module_ablation cells toggle the two assistance modules independently.
_ABLATION_CELLS = {
    "full": ("ours_full", True),
    "no_anticipation": ("ours_full", False),
    "no_utility": ("ours_no_utility", True),
    "none": ("misaligned", False),
}


def _config_for_cell(template: ExperimentConfig, axis: str, value):
    if axis == "preference_setting":
        return replace(template, preference_setting=int(value),
                       preference_weights=None)
    if axis == "merge_ratio":
        return replace(template, utility=replace(template.utility,
                                                 merge_ratio=float(value)))
    if axis == "reward_mode":
        return replace(template, reward_mode=str(value))
    if axis == "module_ablation":
        mode, ant_enabled = _ABLATION_CELLS[value]
        return replace(template, reward_mode=mode,
                       anticipation=replace(template.anticipation,
                                            enabled=ant_enabled))
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepCell:
    axis: str
    value: object
    seed: int
    metrics: Optional[EvalResult] = None
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


def sweep(template: ExperimentConfig, axis: str, out_dir=None,
          values=None, log=None) -> List[SweepCell]:
    """Run one training per (axis value, seed); failures do not stop the sweep."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    values = SWEEP_AXES[axis] if values is None else tuple(values)
    cells = []
    for value in values:
        for seed in template.seeds:
            cell = SweepCell(axis=axis, value=value, seed=seed)
            try:
                cfg = _config_for_cell(template, axis, value)
                run_dir = (Path(out_dir) / f"{axis}_{value}_seed{seed}"
                           if out_dir is not None else None)
                run = run_training(cfg, seed, out_dir=run_dir, log=log)
                cell.metrics = run.evals[-1]
            except Exception as exc:  # keep sweeping; record the failure
                cell.error = f"{type(exc).__name__}: {exc}"
            cells.append(cell)
            if log:
                status = cell.error or "ok"
                log(f"sweep {axis}={value} seed {seed}: {status}")
    return cells
