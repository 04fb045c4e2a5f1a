"""Reward algebra unit tests with frozen oracle values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coassist.core import (
    FEATURE_DIM,
    PREFERENCE_SETTINGS,
    FeatureVector,
    PreferenceWeights,
    RewardBreakdown,
    Trajectory,
    TrajectoryStep,
    WeightEstimate,
    cosine,
    episode_features,
    estimated_preference_reward,
    human_reward,
    make_breakdown,
    preference_reward,
    robot_reward,
)


class _Pen:
    def __init__(self, hit=0.0, force=0.0, high_force=0.0):
        self.hit = hit
        self.force = force
        self.high_force = high_force


def _step(pen):
    z = np.zeros(2)
    return TrajectoryStep(None, z, z, z, z, pen, 0.0)


def _traj(pens, success=False):
    return Trajectory(tuple(_step(p) for p in pens), success)


def test_settings_table_exact():
    assert PREFERENCE_SETTINGS[0] == (1.00, 0.01, 0.05)
    assert PREFERENCE_SETTINGS[1] == (10.0, 0.01, 0.50)
    assert PREFERENCE_SETTINGS[2] == (1.00, 0.10, 5.00)
    assert PREFERENCE_SETTINGS[3] == (0.10, 0.001, 0.005)
    assert PREFERENCE_SETTINGS[4] == (10.0, 0.10, 0.005)
    for sid in range(5):
        w = PreferenceWeights.from_setting(sid)
        assert (w.w_hit, w.w_force, w.w_high_force) == PREFERENCE_SETTINGS[sid]


def test_feature_vector_validation():
    FeatureVector(0.0, 0.0, 0.0)
    FeatureVector(-1.0, -2.5, -0.1)
    with pytest.raises(ValueError):
        FeatureVector(0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        FeatureVector(0.0, float("nan"), 0.0)
    with pytest.raises(ValueError):
        FeatureVector(0.0, 0.0, float("inf"))


def test_weights_validation():
    with pytest.raises(ValueError):
        PreferenceWeights(-0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        PreferenceWeights.from_setting(99)
    # mismatched explicit weights for a claimed setting id
    with pytest.raises(ValueError):
        PreferenceWeights(1.0, 1.0, 1.0, setting_id=0)


def test_episode_features_zero_case():
    traj = _traj([_Pen(), _Pen(), _Pen()])
    f = episode_features(traj)
    assert (f.hit, f.force, f.high_force) == (0.0, 0.0, 0.0)


def test_episode_features_additivity():
    traj = _traj([_Pen(hit=-1.0), _Pen(), _Pen(hit=-1.0)])
    f = episode_features(traj)
    assert (f.hit, f.force, f.high_force) == (-2.0, 0.0, 0.0)


def test_episode_features_matches_loop_oracle():
    rng = np.random.default_rng(7)
    pens = [
        _Pen(-float(rng.integers(0, 2)), -float(rng.uniform(0, 2)), -float(rng.uniform(0, 3)))
        for _ in range(200)
    ]
    f = episode_features(_traj(pens))
    hit = force = high = 0.0
    for p in pens:
        hit += p.hit
        force += p.force
        high += p.high_force
    assert f.hit == hit
    assert f.force == force
    assert f.high_force == high


def test_episode_features_empty_error():
    with pytest.raises(ValueError, match="empty trajectory"):
        episode_features(Trajectory((), False))


def test_preference_reward_examples():
    w = PreferenceWeights(1.0, 0.0, 0.0)
    assert preference_reward(FeatureVector(-2, -5, -1), w) == -2.0

    w1 = PreferenceWeights.from_setting(1)
    got = preference_reward(FeatureVector(-1, -2, -3), w1)
    assert got == pytest.approx(-11.52, abs=1e-12)

    assert preference_reward(FeatureVector(0, 0, 0), w1) == 0.0


def test_preference_reward_nonpositive_for_nonneg_weights():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = PreferenceWeights(*rng.uniform(0, 10, size=3))
        f = FeatureVector(*(-rng.uniform(0, 5, size=3)))
        assert preference_reward(f, w) <= 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=3, max_size=3),
    st.lists(st.floats(0, 5, allow_nan=False), min_size=3, max_size=3),
    st.floats(0, 4, allow_nan=False),
)
def test_preference_reward_scale_covariance(wv, fv, c):
    w = PreferenceWeights(*wv)
    wc = PreferenceWeights(c * wv[0], c * wv[1], c * wv[2])
    f = FeatureVector(-fv[0], -fv[1], -fv[2])
    assert preference_reward(f, wc) == pytest.approx(
        c * preference_reward(f, w), rel=1e-12, abs=1e-12
    )


def test_preference_reward_monotone_in_penalty_magnitude():
    w = PreferenceWeights(2.0, 0.5, 1.0)
    base = FeatureVector(-1.0, -1.0, -1.0)
    r0 = preference_reward(base, w)
    for worse in [
        FeatureVector(-2.0, -1.0, -1.0),
        FeatureVector(-1.0, -3.0, -1.0),
        FeatureVector(-1.0, -1.0, -1.5),
    ]:
        assert preference_reward(worse, w) <= r0


def test_human_reward_examples():
    assert human_reward(10, -3) == 7.0
    assert human_reward(0, 0) == 0.0
    # task-only degenerate case: aligned objectives
    assert human_reward(5.0, 0.0) == robot_reward(5.0, -2.0, 0.0)


def test_robot_reward_examples():
    assert robot_reward(10, -5, 0.0) == 10.0
    assert robot_reward(10, -5, 1.0) == 5.0
    assert robot_reward(10, -4, 0.5) == 8.0


def test_robot_reward_gate_validation():
    with pytest.raises(ValueError, match="invalid gate"):
        robot_reward(1.0, -1.0, 1.5)
    with pytest.raises(ValueError, match="invalid gate"):
        robot_reward(1.0, -1.0, -0.1)
    with pytest.raises(ValueError, match="invalid gate"):
        robot_reward(1.0, -1.0, float("nan"))


def test_weight_estimate_ball_constraint():
    WeightEstimate(np.array([0.6, 0.8, 0.0]))
    with pytest.raises(ValueError):
        WeightEstimate(np.array([0.8, 0.8, 0.0]))
    with pytest.raises(ValueError):
        WeightEstimate(np.array([np.nan, 0.0, 0.0]))
    z = WeightEstimate.zero()
    assert z.norm() == 0.0
    assert z.w.shape == (FEATURE_DIM,)


def test_weight_estimate_immutable():
    est = WeightEstimate(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        est.w[0] = 9.0


def test_estimated_preference_reward():
    est = WeightEstimate(np.array([1.0, 0.0, 0.0]))
    assert estimated_preference_reward(FeatureVector(-3, -9, -9), est) == -3.0
    est2 = WeightEstimate(np.array([0.6, 0.8, 0.0]))
    got = estimated_preference_reward(FeatureVector(-1, -1, 0), est2)
    assert got == pytest.approx(-1.4, abs=1e-12)


def test_breakdown_identity_bitwise():
    rng = np.random.default_rng(11)
    for _ in range(200):
        task = float(rng.normal(0, 50))
        pref = -float(rng.uniform(0, 40))
        est = -float(rng.uniform(0, 40))
        gate = float(rng.uniform(0, 1))
        b = make_breakdown(task, pref, est, gate)
        assert b.human_total == task + pref
        assert b.robot_total == task + gate * est
        # difference identity holds to rounding, not bitwise (cancellation)
        assert b.human_total - b.robot_total == pytest.approx(
            pref - gate * est, rel=1e-9, abs=1e-9
        )


def test_breakdown_shared_mode():
    b = make_breakdown(12.0, -3.0, -99.0, 1.0, shared=True)
    assert b.robot_total == b.human_total


def test_breakdown_rejects_inconsistent_totals():
    with pytest.raises(ValueError):
        RewardBreakdown(1.0, -1.0, 0.0, 0.0, 0.5, 1.0)


def test_trajectory_horizon_validation():
    steps = tuple(_step(_Pen()) for _ in range(5))
    Trajectory(steps, False, horizon=5)
    with pytest.raises(ValueError):
        Trajectory(steps, False, horizon=4)


def test_cosine():
    assert cosine([1, 0, 0], [1, 0, 0]) == pytest.approx(1.0)
    assert cosine([1, 0, 0], [0, 1, 0]) == pytest.approx(0.0)
    assert cosine([0, 0, 0], [1, 0, 0]) == 0.0
    assert cosine([1, 1, 0], [-1, -1, 0]) == pytest.approx(-1.0)
