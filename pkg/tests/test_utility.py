"""Preference inference: likelihood oracle, MCMC correctness, merge, cycles."""

import math

import numpy as np
import pytest
from scipy.special import logsumexp as sp_logsumexp

from conftest import boltzmann_pool
from coassist.core import FeatureVector, WeightEstimate, cosine
from coassist.utility import (
    CycleInfo,
    DemoSet,
    UtilityConfig,
    UtilityEstimate,
    WeightPosterior,
    build_demo_set,
    estimated_pref_reward,
    log_posterior,
    mcmc_sample,
    merge_estimate,
    update_cycle,
)

SETTING2 = np.array([1.00, 0.10, 5.00])
W_STAR = SETTING2 / np.linalg.norm(SETTING2)


def _demo_set(rng, n=3, k=4, m=3):
    feats = -rng.uniform(0, 3, size=(n, m))
    alts = -rng.uniform(0, 3, size=(n, k, m))
    return DemoSet(feats, alts)


# ---------------------------------------------------------- log_posterior
def test_log_posterior_zero_weights_uniform():
    rng = np.random.default_rng(0)
    n, k = 4, 8
    demos = _demo_set(rng, n=n, k=k)
    got = log_posterior(np.zeros(3), demos)
    assert got == pytest.approx(-n * math.log(k + 1), rel=1e-12)


def test_log_posterior_dominance():
    # demo strictly dominates alternatives; positive-diagonal w prefers it
    feats = np.array([[-0.1, -0.1, -0.1]])
    alts = np.array([[[-2.0, -2.0, -2.0], [-3.0, -1.0, -2.0]]])
    demos = DemoSet(feats, alts)
    w = np.ones(3) / math.sqrt(3.0)
    assert log_posterior(w, demos) > log_posterior(np.zeros(3), demos)


def test_log_posterior_matches_loop_oracle():
    rng = np.random.default_rng(1)
    demos = _demo_set(rng, n=3, k=4, m=3)
    w = np.array([0.2, -0.3, 0.5])
    total = 0.0
    for j in range(demos.n):
        scores = [float(np.dot(w, demos.features[j]))]
        for a in range(demos.k):
            scores.append(float(np.dot(w, demos.alternatives[j, a])))
        total += scores[0] - sp_logsumexp(scores)
    assert log_posterior(w, demos) == pytest.approx(total, rel=1e-12)


def test_log_posterior_rejects_outside_ball():
    demos = _demo_set(np.random.default_rng(2))
    with pytest.raises(ValueError):
        log_posterior(np.array([0.9, 0.9, 0.0]), demos)


def test_log_posterior_empty_demos_constant():
    demos = DemoSet(np.zeros((0, 3)), np.zeros((0, 5, 3)))
    assert log_posterior(np.zeros(3), demos) == 0.0
    assert log_posterior(np.array([0.3, 0.1, -0.2]), demos) == 0.0


# ------------------------------------------------------------------ MCMC
def test_mcmc_uniform_ball_symmetry():
    demos = DemoSet(np.zeros((0, 3)), np.zeros((0, 5, 3)))
    post = mcmc_sample(demos, n_samples=55000, burn_in=5000, proposal_std=0.05,
                       seed=3, thin=10)
    assert post.particles.shape[0] == 5000
    assert float(np.linalg.norm(post.particles.mean(axis=0))) <= 0.1
    norms = np.linalg.norm(post.particles, axis=1)
    assert np.all(norms <= 1.0 + 1e-12)


def test_mcmc_deterministic():
    rng = np.random.default_rng(4)
    demos = _demo_set(rng)
    a = mcmc_sample(demos, n_samples=3000, burn_in=1000, seed=11)
    b = mcmc_sample(demos, n_samples=3000, burn_in=1000, seed=11)
    np.testing.assert_array_equal(a.particles, b.particles)
    assert a.acceptance_rate == b.acceptance_rate


def test_mcmc_planted_axis_direction():
    # strong signal along axis 1: demos much better on feature 1
    feats = np.tile(np.array([-0.2, -3.0, -3.0]), (6, 1))
    alts = np.tile(np.array([-5.0, -3.0, -3.0]), (6, 4, 1))
    demos = DemoSet(feats, alts)
    post = mcmc_sample(demos, n_samples=20000, burn_in=5000, seed=5)
    mean = post.mean().w
    assert cosine(mean, np.array([1.0, 0.0, 0.0])) >= 0.9
    # grid argmax over the ball confirms the mode direction
    grid = np.linspace(-1, 1, 21)
    best, best_lp = None, -np.inf
    for x in grid:
        for y in grid:
            for z in grid:
                w = np.array([x, y, z])
                if np.linalg.norm(w) > 1.0:
                    continue
                lp = log_posterior(w, demos)
                if lp > best_lp:
                    best, best_lp = w, lp
    assert cosine(best, np.array([1.0, 0.0, 0.0])) >= 0.9


def test_mcmc_validation():
    demos = _demo_set(np.random.default_rng(6))
    with pytest.raises(ValueError):
        mcmc_sample(demos, n_samples=100, burn_in=200)
    with pytest.raises(ValueError):
        mcmc_sample(demos, n_samples=1500, burn_in=1000, thin=10)  # too few kept


def test_mcmc_direction_invariant_to_feature_scale():
    rng = np.random.default_rng(7)
    feats = np.tile(np.array([-0.1, -2.0, -1.0]), (5, 1))
    alts = -rng.uniform(1.0, 4.0, size=(5, 6, 3))
    for c in (0.5, 2.0):
        demos = DemoSet(feats, alts)
        scaled = DemoSet(c * feats, c * alts)
        grid = np.linspace(-1, 1, 15)
        args = []
        for d in (demos, scaled):
            best, best_lp = None, -np.inf
            for x in grid:
                for y in grid:
                    for z in grid:
                        w = np.array([x, y, z])
                        if np.linalg.norm(w) > 1.0:
                            continue
                        lp = log_posterior(w, d)
                        if lp > best_lp:
                            best, best_lp = w, lp
            args.append(best)
        assert cosine(args[0], args[1]) >= 0.99


# ------------------------------------------------------------- demo sets
def test_build_demo_set_top_n():
    rng = np.random.default_rng(8)
    feats = -rng.uniform(0, 3, size=(20, 3))
    task = np.arange(20, dtype=np.float64)
    demos = build_demo_set(feats, task, n=5, k=4, rng=rng)
    np.testing.assert_array_equal(demos.features, feats[[19, 18, 17, 16, 15]])


def test_build_demo_set_excludes_own_row():
    rng = np.random.default_rng(9)
    # make every row unique so identity can be checked by value
    feats = -np.arange(30, dtype=np.float64).reshape(10, 3) / 10.0
    task = np.arange(10, dtype=np.float64)
    for trial in range(20):
        demos = build_demo_set(feats, task, n=3, k=4,
                               rng=np.random.default_rng(trial))
        for j in range(demos.n):
            for a in range(demos.k):
                assert not np.array_equal(demos.alternatives[j, a],
                                          demos.features[j])


def test_build_demo_set_pool_too_small():
    with pytest.raises(ValueError):
        build_demo_set(np.zeros((3, 3)), np.zeros(3), n=5, k=2,
                       rng=np.random.default_rng(0))


# ----------------------------------------------------------------- merge
def test_merge_ratio_zero_returns_new_exactly():
    new = WeightEstimate(np.array([0.3, 0.4, 0.1]))
    prev = WeightEstimate(np.array([0.0, 0.9, 0.0]))
    out = merge_estimate(new, prev, 0.0)
    assert out is new


def test_merge_ratio_one_returns_prev_exactly():
    new = WeightEstimate(np.array([0.3, 0.4, 0.1]))
    prev = WeightEstimate(np.array([0.0, 0.9, 0.0]))
    out = merge_estimate(new, prev, 1.0)
    assert out is prev


def test_merge_midpoint_unit_vectors():
    new = WeightEstimate(np.array([1.0, 0.0, 0.0]))
    prev = WeightEstimate(np.array([0.0, 1.0, 0.0]))
    out = merge_estimate(new, prev, 0.5)
    np.testing.assert_allclose(out.w, [math.sqrt(0.5), math.sqrt(0.5), 0.0],
                               atol=1e-12)


def test_merge_stays_in_ball():
    rng = np.random.default_rng(10)
    for _ in range(100):
        a = rng.normal(size=3)
        a = a / np.linalg.norm(a) * rng.uniform(0, 1)
        b = rng.normal(size=3)
        b = b / np.linalg.norm(b) * rng.uniform(0, 1)
        out = merge_estimate(WeightEstimate(a), WeightEstimate(b),
                             float(rng.uniform(0, 1)))
        assert np.linalg.norm(out.w) <= 1.0 + 1e-12


def test_merge_ratio_validation():
    est = WeightEstimate(np.zeros(3))
    with pytest.raises(ValueError):
        merge_estimate(est, est, 1.2)
    with pytest.raises(ValueError):
        merge_estimate(est, est, -0.1)


def test_merge_zero_blend():
    new = WeightEstimate(np.array([0.5, 0.0, 0.0]))
    prev = WeightEstimate(np.array([-0.5, 0.0, 0.0]))
    out = merge_estimate(new, prev, 0.5)
    np.testing.assert_array_equal(out.w, np.zeros(3))


# ------------------------------------------------------- gated estimate
def test_estimated_pref_reward_examples():
    f = FeatureVector(-3, -9, -9)
    est = UtilityEstimate(WeightEstimate(np.array([1.0, 0.0, 0.0])), gate=1.0)
    assert estimated_pref_reward(f, est) == -3.0
    est0 = UtilityEstimate(WeightEstimate(np.array([1.0, 0.0, 0.0])), gate=0.0)
    assert estimated_pref_reward(f, est0) == 0.0
    est5 = UtilityEstimate(WeightEstimate(np.array([0.6, 0.8, 0.0])), gate=0.5)
    got = estimated_pref_reward(FeatureVector(-1, -1, 0), est5)
    assert got == pytest.approx(-0.7, abs=1e-12)


def test_estimated_pref_reward_linear_in_gate():
    f = FeatureVector(-2, -1, -3)
    w = WeightEstimate(np.array([0.5, 0.2, 0.8]) / 1.2)
    r1 = estimated_pref_reward(f, UtilityEstimate(w, gate=1.0))
    for g in (0.0, 0.25, 0.5, 0.75):
        assert estimated_pref_reward(f, UtilityEstimate(w, gate=g)) == \
            pytest.approx(g * r1, rel=1e-12, abs=1e-15)


def test_gate_validation():
    with pytest.raises(ValueError):
        UtilityEstimate(WeightEstimate(np.zeros(3)), gate=1.5)


# ---------------------------------------------------------- update_cycle
def test_update_cycle_insufficient_pool():
    prev = UtilityEstimate.initial()
    cfg = UtilityConfig()
    feats = -np.ones((4, 3))
    est, info = update_cycle(feats, np.zeros(4), prev, cfg, 0.5, seed=0)
    assert est is prev
    assert not info.updated
    assert "insufficient" in info.reason


def test_update_cycle_empty_pool():
    prev = UtilityEstimate.initial()
    est, info = update_cycle(np.zeros((0, 3)), np.zeros(0), prev,
                             UtilityConfig(), 0.5, seed=0)
    assert est is prev
    assert not info.updated


def test_update_cycle_first_cycle_merge_zero():
    rng = np.random.default_rng(11)
    feats, task = boltzmann_pool(W_STAR, rng)
    cfg = UtilityConfig(merge_ratio=0.0, mcmc_steps=4000, mcmc_burn_in=1000)
    prev = UtilityEstimate.initial()
    est, info = update_cycle(feats, task, prev, cfg, 0.7, seed=12)
    assert info.updated
    np.testing.assert_array_equal(est.w_hat.w, info.chain_mean)
    assert est.gate == 0.7
    assert est.epoch == 1


def test_update_cycle_gate_refresh_and_epoch():
    rng = np.random.default_rng(13)
    feats, task = boltzmann_pool(W_STAR, rng)
    cfg = UtilityConfig(mcmc_steps=3000, mcmc_burn_in=1000)
    est = UtilityEstimate.initial()
    est, _ = update_cycle(feats, task, est, cfg, 0.25, seed=1)
    assert est.gate == 0.25
    est, _ = update_cycle(feats, task, est, cfg, 0.9, seed=2)
    assert est.gate == 0.9
    assert est.epoch == 2


def test_planted_recovery_five_cycles():
    cfg = UtilityConfig()
    for seed in range(3):
        master = np.random.default_rng(1000 + seed)
        est = UtilityEstimate.initial()
        for cycle in range(5):
            feats, task = boltzmann_pool(W_STAR, master)
            est, info = update_cycle(feats, task, est, cfg, 0.8,
                                     seed=int(master.integers(2**32)))
            assert info.updated
        assert cosine(est.w_hat.w, W_STAR) >= 0.9, f"seed {seed}"
