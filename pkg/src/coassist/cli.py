"""Command line front end: train, evaluate, sweep, inspect-posterior.

Exit codes: 0 success, 2 configuration error, 3 numeric abort (NaN reward,
loss, or gradient), 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .anticipation import AnticipationModel
from .checkpoints import load_arrays
from .config import ConfigError, ExperimentConfig, load_config
from .core import WeightEstimate
from .env import AssistEnv
from .harness import RunAbort, SWEEP_AXES, evaluate, run_training, sweep
from .policy import GaussianPolicy
from .report import emit_sweep_report, read_csv, write_csv, METRICS_COLUMNS
from .utility import UtilityEstimate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NAN = 3


def _load_experiment(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config)
    return ExperimentConfig()


def _policy_from_checkpoint(path) -> GaussianPolicy:
    _, arrays = load_arrays(path, expected_tag="policy")
    obs_dim = arrays["mean.w0"].shape[1]
    act_dim = arrays["log_std"].shape[0]
    policy = GaussianPolicy(obs_dim, act_dim, np.random.default_rng(0))
    policy.load_arrays(arrays)
    return policy


def _estimate_from_checkpoint(path) -> UtilityEstimate:
    _, arrays = load_arrays(path, expected_tag="estimate")
    epoch, gate = arrays["meta"]
    return UtilityEstimate(WeightEstimate(arrays["w_hat"]), epoch=int(epoch),
                           gate=float(gate))


def _print_metrics(metrics) -> None:
    print(f"episodes: {metrics.n_episodes}")
    print(f"mean human reward: {metrics.mean_human_reward:.3f}")
    print(f"mean robot reward: {metrics.mean_robot_reward:.3f}")
    print(f"mean task reward: {metrics.mean_task_reward:.3f}")
    print(f"mean hit penalty: {metrics.mean_hit:.3f}")
    print(f"mean force penalty: {metrics.mean_force:.3f}")
    print(f"mean high-force penalty: {metrics.mean_high_force:.3f}")
    print(f"success rate: {metrics.success_rate:.3f}")


def cmd_train(args) -> int:
    config = _load_experiment(args)
    seed = args.seed if args.seed is not None else config.seeds[0]
    out_dir = Path(args.out_dir)
    log = None if args.quiet else print
    result = run_training(config, seed, out_dir=out_dir, log=log)
    last = result.evals[-1]
    print(f"run complete: seed {seed}, {config.total_epochs} epochs, "
          f"artifacts in {out_dir}")
    _print_metrics(last)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    config_path = args.config if args.config else run_dir / "config.ini"
    config = load_config(config_path)
    env = AssistEnv(config.task)

    human_policy = _policy_from_checkpoint(run_dir / "policy_human.bin")
    robot_policy = _policy_from_checkpoint(run_dir / "policy_robot.bin")
    ant_on = config.anticipation_active()
    ant_model = None
    if ant_on:
        _, arrays = load_arrays(run_dir / "anticipation.bin",
                                expected_tag="anticipation")
        ant_model = AnticipationModel.from_arrays(arrays)
    est_path = run_dir / "estimate.bin"
    estimate = (_estimate_from_checkpoint(est_path) if est_path.exists()
                else UtilityEstimate.initial())

    seed = args.seed if args.seed is not None else 0
    metrics, _ = evaluate(env, human_policy, robot_policy, config.true_weights(),
                          estimate, config.reward_mode, ant_model, ant_on,
                          config.anticipation.k_in, args.episodes or
                          config.eval_episodes, seed)
    _print_metrics(metrics)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "evaluation.csv", "metrics", METRICS_COLUMNS, [{
            "epoch": metrics.epoch, "n_episodes": metrics.n_episodes,
            "mean_human_reward": metrics.mean_human_reward,
            "mean_robot_reward": metrics.mean_robot_reward,
            "mean_task_reward": metrics.mean_task_reward,
            "mean_hit": metrics.mean_hit, "mean_force": metrics.mean_force,
            "mean_high_force": metrics.mean_high_force,
            "success_rate": metrics.success_rate,
        }])
        print(f"wrote {out_dir / 'evaluation.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    template = _load_experiment(args)
    out_dir = Path(args.out_dir)
    log = None if args.quiet else print
    cells = sweep(template, args.axis, out_dir=out_dir, log=log)
    rows = emit_sweep_report(out_dir, args.axis, cells)
    print(f"{'value':>16} {'human_reward':>14} {'high_force':>12} "
          f"{'success':>8} {'failed':>7}")
    for row in rows:
        print(f"{row['value']!s:>16} {row['human_reward']:>14.3f} "
              f"{row['high_force']:>12.3f} {row['success_rate']:>8.3f} "
              f"{row['n_failed']:>7d}")
    if all(cell.failed for cell in cells):
        print("every sweep cell failed", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_inspect_posterior(args) -> int:
    run_dir = Path(args.run_dir)
    kind, rows = read_csv(run_dir / "posterior.csv")
    if kind != "posterior":
        print(f"{run_dir / 'posterior.csv'} is a {kind!r} file", file=sys.stderr)
        return EXIT_ERROR
    if not rows:
        print("no utility cycles recorded")
        return EXIT_OK
    print(f"{'epoch':>6} {'pool':>5} {'updated':>8} {'w_hit':>8} {'w_force':>8} "
          f"{'w_high':>8} {'accept':>7} {'ess':>8} {'gate':>5}")
    for r in rows:
        print(f"{int(r['epoch']):>6} {int(r['pool_size']):>5} "
              f"{int(r['updated']):>8} {r['w_hat_hit']:>8.4f} "
              f"{r['w_hat_force']:>8.4f} {r['w_hat_high_force']:>8.4f} "
              f"{r['acceptance_rate']:>7.3f} {r['ess']:>8.1f} {r['gate']:>5.2f}")
    if args.out_dir:
        from .report import render_posterior_figure

        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        render_posterior_figure(out_dir / "posterior.png", rows)
        print(f"wrote {out_dir / 'posterior.png'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coassist",
        description="Assistive two-agent training with preference inference "
                    "and motion anticipation.")
    sub = parser.add_subparsers(dest="verb", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="experiment config file (INI); defaults apply if omitted")
    common.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    common.add_argument("--out-dir", default=None, help="artifact directory")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress lines")

    p = sub.add_parser("train", parents=[common],
                       help="train both agents under the configured reward mode")
    p.set_defaults(func=cmd_train, needs_out=True)

    p = sub.add_parser("evaluate", parents=[common],
                       help="deterministic evaluation of a finished run")
    p.add_argument("--run-dir", required=True,
                   help="directory with checkpoints from a training run")
    p.add_argument("--episodes", type=int, default=None,
                   help="evaluation episode count (default from config)")
    p.set_defaults(func=cmd_evaluate, needs_out=False)

    p = sub.add_parser("sweep", parents=[common],
                       help="run an ablation axis across all configured seeds")
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES),
                   help="which configuration axis to vary")
    p.set_defaults(func=cmd_sweep, needs_out=True)

    p = sub.add_parser("inspect-posterior", parents=[common],
                       help="show utility inference cycles from a run directory")
    p.add_argument("--run-dir", required=True,
                   help="directory with posterior.csv from a training run")
    p.set_defaults(func=cmd_inspect_posterior, needs_out=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "needs_out", False) and not args.out_dir:
        print(f"{args.verb} requires --out-dir", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NAN if exc.category == "nan" else EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
