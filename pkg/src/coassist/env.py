"""Planar kinematic analogue of an assistive feeding/drinking/bathing task.

Two agents share the scene: a 2-link robot arm delivering a payload (or
wiping), and a human whose head is a disc on a neck segment.  The human
controls head tilt and mouth offset; the robot controls joint velocities.
Contact with the head or body outside the target region produces penalty
events (hit on entry, force while in contact, high force past a penetration
threshold).  All transitions are deterministic given state and actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .core import Trajectory

# ---------------------------------------------------------------- geometry
LINK_LENGTHS = (0.5, 0.4)       # meters, arm base at the origin
DT = 0.05                       # seconds per step
MAX_JOINT_SPEED = 1.5           # rad/s, per robot joint
ARM_JOINT_LIMIT = 3.0           # rad, symmetric
WRIST_LIMIT = 2.0               # rad, drink only
HOME_POSE = (math.pi / 2.0, -math.pi / 2.0)

NECK_BASE = (0.75, -0.35)       # meters
NECK_LENGTH = 0.5
HEAD_RADIUS = 0.1
HEAD_TILT_RANGE = 0.5           # rad, symmetric
MOUTH_OFFSET_RANGE = 0.08       # meters of arc along the head rim
MAX_HEAD_SPEED = 0.6            # rad/s
MAX_MOUTH_SPEED = 0.08          # m/s

# ------------------------------------------------------------- penalties
SEG_CONTACT_MARGIN = 0.04       # contact band around the body segment
HIGH_FORCE_DEPTH = 0.02         # penetration depth threshold, meters
FORCE_BASE = 0.2                # keeps force < 0 whenever contact fires
HIT_PENALTY = -1.0

# ---------------------------------------------------------- task scoring
DELIVER_BONUS = 100.0
ALIGN_TOLERANCE = 0.2           # rad, drink delivery alignment
ALIGN_SHAPING = 0.3
WIPE_CELLS = 20
WIPE_TOLERANCE = 0.05
WIPE_BONUS = 5.0
WIPE_COMPLETE_BONUS = 50.0

TASK_KINDS = ("feed", "drink", "bathe")


@dataclass(frozen=True)
class TaskSpec:
    """Task selection and success parameters."""

    task_kind: str = "feed"
    target_tolerance: float = 0.05
    hold_steps: int = 5
    horizon: int = 200
    wipe_threshold: float = 0.8

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if self.target_tolerance <= 0.0:
            raise ValueError("target_tolerance must be > 0")
        if self.hold_steps < 1:
            raise ValueError("hold_steps must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.wipe_threshold <= 1.0:
            raise ValueError("wipe_threshold must be in (0, 1]")


@dataclass(frozen=True)
class PenaltyEvents:
    """Non-positive penalty values for one step; all zero without contact."""

    hit: float = 0.0
    force: float = 0.0
    high_force: float = 0.0

    def __post_init__(self):
        for name in ("hit", "force", "high_force"):
            v = getattr(self, name)
            if not np.isfinite(v) or v > 0.0:
                raise ValueError(f"penalty {name} must be finite and <= 0, got {v}")
        if self.high_force < 0.0 and self.force >= 0.0:
            raise ValueError("high_force < 0 requires force < 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.hit, self.force, self.high_force], dtype=np.float64)


@dataclass(frozen=True)
class EnvState:
    robot_joints: np.ndarray
    tool_tip: np.ndarray
    human_joints: np.ndarray      # (head tilt rad, mouth arc offset m)
    mouth_pos: np.ndarray
    body_segment: tuple
    t: int
    carried_payload: bool
    hold_count: int = 0
    wiped: frozenset = frozenset()
    in_contact: bool = False      # non-target contact at this state


class StepResult(NamedTuple):
    state: EnvState
    obs_h: np.ndarray
    obs_r: np.ndarray
    task_reward: float
    events: PenaltyEvents
    done: bool


def forward_kinematics(joints: np.ndarray) -> np.ndarray:
    """Tool tip position of the 2-link arm (extra joints ignored)."""
    q1, q2 = float(joints[0]), float(joints[1])
    l1, l2 = LINK_LENGTHS
    return np.array(
        [l1 * math.cos(q1) + l2 * math.cos(q1 + q2),
         l1 * math.sin(q1) + l2 * math.sin(q1 + q2)],
        dtype=np.float64,
    )


def elbow_position(joints: np.ndarray) -> np.ndarray:
    q1 = float(joints[0])
    return np.array(
        [LINK_LENGTHS[0] * math.cos(q1), LINK_LENGTHS[0] * math.sin(q1)],
        dtype=np.float64,
    )


def inverse_kinematics(target: np.ndarray, elbow_sign: float = -1.0) -> np.ndarray:
    """Closed-form 2-link IK; unreachable targets are clamped to the boundary."""
    x, y = float(target[0]), float(target[1])
    l1, l2 = LINK_LENGTHS
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    c2 = min(1.0, max(-1.0, c2))
    s2 = elbow_sign * math.sqrt(max(0.0, 1.0 - c2 * c2))
    q2 = math.atan2(s2, c2)
    q1 = math.atan2(y, x) - math.atan2(l2 * s2, l1 + l2 * c2)
    return np.array([q1, q2], dtype=np.float64)


def head_center(theta: float) -> np.ndarray:
    return np.array(
        [NECK_BASE[0] - NECK_LENGTH * math.sin(theta),
         NECK_BASE[1] + NECK_LENGTH * math.cos(theta)],
        dtype=np.float64,
    )


def mouth_position(theta: float, offset: float) -> np.ndarray:
    """Mouth point on the head rim, facing the robot side; tilts with the head."""
    center = head_center(theta)
    ang = math.pi + theta + offset / HEAD_RADIUS
    return center + HEAD_RADIUS * np.array([math.cos(ang), math.sin(ang)])


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    s = float(np.dot(p - a, ab)) / denom
    s = min(1.0, max(0.0, s))
    return float(np.linalg.norm(p - (a + s * ab)))


def wipe_cells(segment) -> np.ndarray:
    """Fixed scoring points along the body segment for the bathe task.

    The span stops short of the head disc so a clean wipe needs no head
    contact even with the wipe tolerance slack.
    """
    a, b = segment
    fracs = np.linspace(0.05, 0.68, WIPE_CELLS)
    return a[None, :] + fracs[:, None] * (b - a)[None, :]


class AssistEnv:
    """Deterministic planar assistive environment; instances hold only the spec."""

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.n_robot_joints = 3 if spec.task_kind == "drink" else 2
        self.act_dim_r = self.n_robot_joints
        self.act_dim_h = 2
        # joint-information block sizes used by the anticipation module
        self.joint_dim_h = 4                       # tilt, offset, mouth xy
        self.joint_dim_r = self.n_robot_joints + 2  # joints + tool tip

    @property
    def spec_string(self) -> str:
        s = self.spec
        return (
            f"planar-assist-v1/{s.task_kind}/h{s.horizon}"
            f"/tol{s.target_tolerance:g}/hold{s.hold_steps}"
        )

    @property
    def obs_dim_r(self) -> int:
        base = self.n_robot_joints + 2 + 2 + 2      # joints, tip, mouth, rel
        if self.spec.task_kind == "drink":
            return base + 1                          # alignment error
        if self.spec.task_kind == "bathe":
            return base + 5                          # wipe target, rel, frac
        return base

    @property
    def obs_dim_h(self) -> int:
        return 8

    # ------------------------------------------------------------- reset
    def reset(self, seed: int):
        rng = np.random.default_rng(seed)
        theta = float(rng.uniform(-0.25, 0.25))
        offset = float(rng.uniform(-0.04, 0.04))
        joints = np.array(HOME_POSE, dtype=np.float64)
        if self.n_robot_joints == 3:
            joints = np.append(joints, 0.0)
        state = self._make_state(
            joints, np.array([theta, offset]), t=0,
            carried_payload=self.spec.task_kind in ("feed", "drink"),
            hold_count=0, wiped=frozenset(), in_contact=False,
        )
        return state, self._obs_h(state), self._obs_r(state)

    def _make_state(self, joints, human, t, carried_payload, hold_count, wiped,
                    in_contact) -> EnvState:
        theta, offset = float(human[0]), float(human[1])
        center = head_center(theta)
        segment = (np.array(NECK_BASE, dtype=np.float64), center)
        return EnvState(
            robot_joints=joints,
            tool_tip=forward_kinematics(joints),
            human_joints=np.array([theta, offset], dtype=np.float64),
            mouth_pos=mouth_position(theta, offset),
            body_segment=segment,
            t=t,
            carried_payload=carried_payload,
            hold_count=hold_count,
            wiped=wiped,
            in_contact=in_contact,
        )

    # -------------------------------------------------------------- step
    def step(self, state: EnvState, action_h, action_r) -> StepResult:
        action_h = np.asarray(action_h, dtype=np.float64)
        action_r = np.asarray(action_r, dtype=np.float64)
        if action_h.shape != (self.act_dim_h,):
            raise ValueError(
                f"human action shape {action_h.shape}, expected ({self.act_dim_h},)"
            )
        if action_r.shape != (self.act_dim_r,):
            raise ValueError(
                f"robot action shape {action_r.shape}, expected ({self.act_dim_r},)"
            )
        if not (np.all(np.isfinite(action_h)) and np.all(np.isfinite(action_r))):
            raise ValueError("NaN or inf in actions")
        if self._terminal(state):
            raise ValueError("step called on a terminal state")
        action_h = np.clip(action_h, -1.0, 1.0)
        action_r = np.clip(action_r, -1.0, 1.0)

        joints = state.robot_joints + action_r * MAX_JOINT_SPEED * DT
        limits = np.full(self.n_robot_joints, ARM_JOINT_LIMIT)
        if self.n_robot_joints == 3:
            limits[2] = WRIST_LIMIT
        joints = np.clip(joints, -limits, limits)

        theta = state.human_joints[0] + action_h[0] * MAX_HEAD_SPEED * DT
        offset = state.human_joints[1] + action_h[1] * MAX_MOUTH_SPEED * DT
        theta = float(np.clip(theta, -HEAD_TILT_RANGE, HEAD_TILT_RANGE))
        offset = float(np.clip(offset, -MOUTH_OFFSET_RANGE, MOUTH_OFFSET_RANGE))

        tip = forward_kinematics(joints)
        tip_speed = float(np.linalg.norm(tip - state.tool_tip)) / DT

        center = head_center(theta)
        segment = (np.array(NECK_BASE, dtype=np.float64), center)
        mouth = mouth_position(theta, offset)

        depth_head = HEAD_RADIUS - float(np.linalg.norm(tip - center))
        depth_seg = SEG_CONTACT_MARGIN - point_segment_distance(tip, segment[0], segment[1])
        depth = max(depth_head, depth_seg)
        near_target = float(np.linalg.norm(tip - mouth)) <= self.spec.target_tolerance

        if self.spec.task_kind == "bathe":
            # body contact is the point of the task; only the head is off-limits
            non_target = depth_head > 0.0
            over_depth = depth_head > HIGH_FORCE_DEPTH
            hf_depth = depth_head
        else:
            non_target = depth > 0.0 and not near_target
            over_depth = depth > HIGH_FORCE_DEPTH
            hf_depth = depth

        hit = HIT_PENALTY if (non_target and not state.in_contact) else 0.0
        force = -(FORCE_BASE + tip_speed) if (non_target or over_depth) else 0.0
        high_force = -(hf_depth / HIGH_FORCE_DEPTH) if over_depth else 0.0
        events = PenaltyEvents(hit=hit, force=force, high_force=high_force)

        task_r, new_state, success_now = self._task_update(
            state, joints, tip, np.array([theta, offset]), mouth, segment,
            near_target, non_target,
        )
        done = success_now or new_state.t >= self.spec.horizon
        return StepResult(new_state, self._obs_h(new_state), self._obs_r(new_state),
                          task_r, events, done)

    def _task_update(self, state, joints, tip, human, mouth, segment,
                     near_target, non_target):
        kind = self.spec.task_kind
        t_next = state.t + 1
        wiped = state.wiped
        payload = state.carried_payload
        success_now = False

        if kind in ("feed", "drink"):
            dist = float(np.linalg.norm(tip - mouth))
            task_r = -dist
            counts = near_target and payload
            if kind == "drink":
                align_err = self._alignment_error(joints, mouth, human[0])
                task_r -= ALIGN_SHAPING * abs(align_err)
                counts = counts and abs(align_err) <= ALIGN_TOLERANCE
            hold = state.hold_count + 1 if counts else 0
            if hold >= self.spec.hold_steps and payload:
                task_r += DELIVER_BONUS
                payload = False
                success_now = True
        else:
            cells = wipe_cells(segment)
            dists = np.linalg.norm(cells - tip[None, :], axis=1)
            touched = {
                int(i) for i in np.nonzero(dists <= WIPE_TOLERANCE)[0]
            } - set(wiped)
            wiped = frozenset(set(wiped) | touched)
            remaining = [i for i in range(WIPE_CELLS) if i not in wiped]
            if remaining:
                task_r = -float(np.min(dists[remaining])) + WIPE_BONUS * len(touched)
            else:
                task_r = WIPE_BONUS * len(touched)
            hold = 0
            if len(wiped) >= math.ceil(self.spec.wipe_threshold * WIPE_CELLS):
                task_r += WIPE_COMPLETE_BONUS
                success_now = True

        new_state = self._make_state(
            joints, human, t=t_next, carried_payload=payload,
            hold_count=hold, wiped=wiped, in_contact=non_target,
        )
        return task_r, new_state, success_now

    def _alignment_error(self, joints, mouth, theta) -> float:
        """Angle between the tool axis and the into-the-mouth direction."""
        tool_angle = float(joints[0] + joints[1] + joints[2])
        center = head_center(theta)
        want = math.atan2(center[1] - mouth[1], center[0] - mouth[0])
        err = tool_angle - want
        return math.atan2(math.sin(err), math.cos(err))

    def _terminal(self, state: EnvState) -> bool:
        if state.t >= self.spec.horizon:
            return True
        if self.spec.task_kind in ("feed", "drink"):
            return not state.carried_payload
        return len(state.wiped) >= math.ceil(self.spec.wipe_threshold * WIPE_CELLS)

    # ------------------------------------------------------ observations
    def _obs_r(self, state: EnvState) -> np.ndarray:
        tip = state.tool_tip
        mouth = state.mouth_pos
        parts = [state.robot_joints, tip, mouth, mouth - tip]
        if self.spec.task_kind == "drink":
            err = self._alignment_error(state.robot_joints, mouth, state.human_joints[0])
            parts.append(np.array([err]))
        elif self.spec.task_kind == "bathe":
            cells = wipe_cells(state.body_segment)
            remaining = [i for i in range(WIPE_CELLS) if i not in state.wiped]
            if remaining:
                dists = np.linalg.norm(cells[remaining] - tip[None, :], axis=1)
                target = cells[remaining[int(np.argmin(dists))]]
            else:
                target = cells[-1]
            parts.append(target)
            parts.append(target - tip)
            parts.append(np.array([len(state.wiped) / WIPE_CELLS]))
        return np.concatenate(parts)

    def _obs_h(self, state: EnvState) -> np.ndarray:
        tip = state.tool_tip
        mouth = state.mouth_pos
        return np.concatenate(
            [state.human_joints, mouth, tip, tip - mouth]
        )

    # joint-information blocks consumed by the anticipation module
    def joint_info_h(self, state: EnvState) -> np.ndarray:
        return np.concatenate([state.human_joints, state.mouth_pos])

    def joint_info_r(self, state: EnvState) -> np.ndarray:
        return np.concatenate([state.robot_joints, state.tool_tip])

    # ----------------------------------------------------------- success
    def success(self, trajectory: Trajectory) -> bool:
        """Recompute task success from the final logged state."""
        if trajectory.length == 0:
            return False
        last = trajectory.steps[-1].state
        if self.spec.task_kind in ("feed", "drink"):
            return (not last.carried_payload) and last.hold_count >= self.spec.hold_steps
        return len(last.wiped) >= math.ceil(self.spec.wipe_threshold * WIPE_CELLS)


# ------------------------------------------------------- scripted agents
class SinusoidalHuman:
    """Deterministic head-tilt oscillation used by prediction tests."""

    def __init__(self, theta_amplitude: float = 0.1, period: int = 60,
                 phase: float = 0.0):
        self.period = period
        self.phase = phase
        # drive amplitude that integrates to the requested tilt amplitude
        self.drive = theta_amplitude * 2.0 * math.pi / (MAX_HEAD_SPEED * DT * period)
        if abs(self.drive) > 1.0:
            raise ValueError("theta_amplitude too large for the head speed limit")

    def act(self, obs_h: np.ndarray, t: int) -> np.ndarray:
        a = self.drive * math.cos(2.0 * math.pi * t / self.period + self.phase)
        return np.array([a, 0.0], dtype=np.float64)


class IkReachRobot:
    """Scripted robot driving straight to the task target via closed-form IK."""

    def __init__(self, env: AssistEnv, elbow_sign: float = -1.0):
        self.env = env
        self.elbow_sign = elbow_sign

    def act(self, obs_r: np.ndarray, t: int) -> np.ndarray:
        nj = self.env.n_robot_joints
        joints = obs_r[:nj]
        if self.env.spec.task_kind == "bathe":
            target = obs_r[nj + 6 : nj + 8]
        else:
            target = obs_r[nj + 2 : nj + 4]
        goal = inverse_kinematics(target, self.elbow_sign)
        action = np.zeros(nj)
        action[:2] = (goal - joints[:2]) / (MAX_JOINT_SPEED * DT)
        if nj == 3:
            # align the tool axis with the into-the-mouth direction
            err = obs_r[nj + 6]
            action[2] = -err / (MAX_JOINT_SPEED * DT)
        return np.clip(action, -1.0, 1.0)
