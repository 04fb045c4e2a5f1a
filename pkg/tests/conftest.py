"""Shared test fixtures: demo pools with a known weight vector, one small run."""

import numpy as np
import pytest

# PASS/FAIL lines collected by the acceptance checks, echoed after the run
# so they stay visible without -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One short ours_full training with artifacts, shared across test modules."""
    from coassist.config import ExperimentConfig
    from coassist.env import TaskSpec
    from coassist.harness import run_training
    from coassist.utility import UtilityConfig

    config = ExperimentConfig(
        reward_mode="ours_full", seeds=(0,), total_epochs=4,
        episodes_per_epoch=3, eval_every=2, eval_episodes=2,
        task=TaskSpec(horizon=40),
        utility=UtilityConfig(mcmc_steps=1500, mcmc_burn_in=400, mcmc_thin=5),
    )
    out_dir = tmp_path_factory.mktemp("tiny_run")
    result = run_training(config, seed=0, out_dir=out_dir)
    return result, out_dir


def make_feature_pool(rng, size=80):
    """Episode-level penalty feature rows, all non-positive."""
    hit = -rng.integers(0, 4, size=size).astype(np.float64)
    force = -rng.uniform(0.0, 4.0, size=size)
    high = -rng.uniform(0.0, 4.0, size=size)
    return np.column_stack([hit, force, high])


def boltzmann_pool(w_star, rng, pool_size=80, n_demos=10, beta=1.0):
    """Pool of episodes where the top task-reward rows are Boltzmann draws.

    Demonstrations are sampled without replacement with probability
    proportional to exp(beta * w_star . features) via the Gumbel top-k
    trick, then given the highest task rewards so a top-n-by-task-reward
    selection recovers exactly the Boltzmann-rational subset.
    """
    w_star = np.asarray(w_star, dtype=np.float64)
    feats = make_feature_pool(rng, pool_size)
    logits = beta * feats @ w_star
    keys = logits + rng.gumbel(size=pool_size)
    demo_idx = np.argsort(-keys)[:n_demos]
    task = rng.uniform(0.0, 50.0, size=pool_size)
    task[demo_idx] = 100.0 + rng.uniform(0.0, 10.0, size=n_demos)
    return feats, task
