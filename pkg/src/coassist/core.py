"""Shared domain types and reward algebra for the two-agent assistive task.

The human's private reward adds a weighted sum of non-positive penalty
features (head hits, contact force, high force) on top of the shared task
reward.  The robot never sees the true weights; it receives the task reward
plus a gated estimate of the preference term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FEATURE_NAMES = ("hit", "force", "high_force")
FEATURE_DIM = 3

# Built-in preference weight settings, ordered (w_hit, w_force, w_high_force).
PREFERENCE_SETTINGS = {
    0: (1.00, 0.01, 0.05),
    1: (10.0, 0.01, 0.50),
    2: (1.00, 0.10, 5.00),
    3: (0.10, 0.001, 0.005),
    4: (10.0, 0.10, 0.005),
}


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class FeatureVector:
    """Per-episode penalty feature sums; every component is <= 0."""

    hit: float
    force: float
    high_force: float

    def __post_init__(self):
        for name in FEATURE_NAMES:
            value = _require_finite(name, getattr(self, name))
            if value > 0.0:
                raise ValueError(f"feature {name} must be non-positive, got {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.hit, self.force, self.high_force], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (FEATURE_DIM,):
            raise ValueError(f"expected shape ({FEATURE_DIM},), got {arr.shape}")
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class PreferenceWeights:
    """Non-negative preference weights, optionally tied to a built-in setting."""

    w_hit: float
    w_force: float
    w_high_force: float
    setting_id: Optional[int] = None

    def __post_init__(self):
        for name in ("w_hit", "w_force", "w_high_force"):
            value = _require_finite(name, getattr(self, name))
            if value < 0.0:
                raise ValueError(f"{name} must be non-negative, got {value}")
            object.__setattr__(self, name, value)
        if self.setting_id is not None:
            if self.setting_id not in PREFERENCE_SETTINGS:
                raise ValueError(f"unknown preference setting {self.setting_id}")
            expected = PREFERENCE_SETTINGS[self.setting_id]
            actual = (self.w_hit, self.w_force, self.w_high_force)
            if actual != expected:
                raise ValueError(
                    f"weights {actual} do not match setting {self.setting_id} {expected}"
                )

    @classmethod
    def from_setting(cls, setting_id: int) -> "PreferenceWeights":
        if setting_id not in PREFERENCE_SETTINGS:
            raise ValueError(f"unknown preference setting {setting_id}")
        w = PREFERENCE_SETTINGS[setting_id]
        return cls(w[0], w[1], w[2], setting_id=setting_id)

    def as_array(self) -> np.ndarray:
        return np.array([self.w_hit, self.w_force, self.w_high_force], dtype=np.float64)


@dataclass(frozen=True)
class WeightEstimate:
    """Point estimate of the preference weights, constrained to the unit ball."""

    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError(f"weight estimate must be a 1-d vector, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weight estimate must be finite")
        if np.linalg.norm(w) > 1.0 + 1e-12:
            raise ValueError(f"weight estimate outside unit ball, norm={np.linalg.norm(w)}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def zero(cls, dim: int = FEATURE_DIM) -> "WeightEstimate":
        return cls(np.zeros(dim))

    def norm(self) -> float:
        return float(np.linalg.norm(self.w))


@dataclass(frozen=True)
class TrajectoryStep:
    """One logged environment transition with both agents' views."""

    state: object
    obs_h: np.ndarray
    obs_r: np.ndarray
    action_h: np.ndarray
    action_r: np.ndarray
    penalties: object
    task_reward: float


@dataclass(frozen=True)
class Trajectory:
    """A full episode record; at most ``horizon`` steps when a horizon is given."""

    steps: tuple
    success: bool
    horizon: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.horizon is not None and len(self.steps) > self.horizon:
            raise ValueError(
                f"trajectory has {len(self.steps)} steps, horizon is {self.horizon}"
            )

    @property
    def length(self) -> int:
        return len(self.steps)


def episode_features(trajectory: Trajectory) -> FeatureVector:
    """Sum per-step penalties over an episode, in step order."""
    if trajectory.length == 0:
        raise ValueError("empty trajectory")
    # Sequential accumulation keeps the result bit-identical to a plain loop.
    hit = 0.0
    force = 0.0
    high_force = 0.0
    for step in trajectory.steps:
        hit += step.penalties.hit
        force += step.penalties.force
        high_force += step.penalties.high_force
    return FeatureVector(hit, force, high_force)


def preference_reward(features: FeatureVector, weights: PreferenceWeights) -> float:
    """Weighted penalty sum; <= 0 whenever weights are non-negative."""
    return (
        weights.w_hit * features.hit
        + weights.w_force * features.force
        + weights.w_high_force * features.high_force
    )


def estimated_preference_reward(features: FeatureVector, estimate: WeightEstimate) -> float:
    """Same contraction as preference_reward but against an estimated weight vector."""
    w = estimate.w
    if w.shape != (FEATURE_DIM,):
        raise ValueError(f"estimate has dimension {w.shape}, expected ({FEATURE_DIM},)")
    return w[0] * features.hit + w[1] * features.force + w[2] * features.high_force


def human_reward(task_reward: float, pref_reward: float) -> float:
    """True human objective: shared task reward plus the preference term."""
    task_reward = _require_finite("task_reward", task_reward)
    pref_reward = _require_finite("pref_reward", pref_reward)
    return task_reward + pref_reward


def robot_reward(task_reward: float, estimated_pref: float, gate: float) -> float:
    """Robot objective: task reward plus the gate-scaled preference estimate."""
    task_reward = _require_finite("task_reward", task_reward)
    estimated_pref = _require_finite("estimated_pref", estimated_pref)
    gate = float(gate)
    if not np.isfinite(gate) or gate < 0.0 or gate > 1.0:
        raise ValueError(f"invalid gate {gate!r}, expected a value in [0, 1]")
    return task_reward + gate * estimated_pref


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-episode reward accounting shared by all experiment modes."""

    task: float
    pref_true: float
    pref_estimated: float
    gate: float
    human_total: float
    robot_total: float

    def __post_init__(self):
        if self.human_total != self.task + self.pref_true:
            raise ValueError("human_total must equal task + pref_true exactly")


def make_breakdown(
    task: float,
    pref_true: float,
    pref_estimated: float,
    gate: float,
    shared: bool = False,
) -> RewardBreakdown:
    """Compose the canonical episode accounting.

    ``shared`` marks the fully cooperative mode where the robot optimizes the
    human's exact reward stream; otherwise the robot gets the gated estimate.
    """
    h_total = human_reward(task, pref_true)
    r_total = h_total if shared else robot_reward(task, pref_estimated, gate)
    return RewardBreakdown(
        task=float(task),
        pref_true=float(pref_true),
        pref_estimated=float(pref_estimated),
        gate=float(gate),
        human_total=h_total,
        robot_total=r_total,
    )


def cosine(a, b) -> float:
    """Cosine similarity between two vectors; 0 when either is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
