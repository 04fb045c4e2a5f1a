"""Windowed prediction of the human's near-future joint information.

A feed-forward regressor maps the last k_in frames of both agents' joint
blocks to the next k_max human frames; the stage-dependent horizon schedule
decides how many predicted rows are actually used at each step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .nets import MLP, Adam

K_IN = 10
K_MAX = 10

# (exclusive stage end, horizon); the last stage is open-ended
HORIZON_STAGES = ((50, 10), (100, 8), (None, 5))


def horizon_for(t: int) -> int:
    """Prediction horizon by episode stage: 10 early, 8 mid, 5 late."""
    t = int(t)
    if t < 0:
        raise ValueError(f"negative step index {t}")
    for end, k in HORIZON_STAGES:
        if end is None or t < end:
            return k
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class JointWindow:
    """k_in frames of joint information for both agents, oldest first."""

    p_h: np.ndarray
    p_r: np.ndarray
    t: int

    def __post_init__(self):
        p_h = np.asarray(self.p_h, dtype=np.float64)
        p_r = np.asarray(self.p_r, dtype=np.float64)
        if p_h.ndim != 2 or p_r.ndim != 2:
            raise ValueError("window blocks must be 2-d (frames x dims)")
        if p_h.shape[0] != p_r.shape[0]:
            raise ValueError(
                f"frame counts differ: {p_h.shape[0]} vs {p_r.shape[0]}"
            )
        if self.t < 0:
            raise ValueError("negative step index")
        object.__setattr__(self, "p_h", p_h)
        object.__setattr__(self, "p_r", p_r)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.p_h.ravel(), self.p_r.ravel()])


def build_window(joint_h: np.ndarray, joint_r: np.ndarray, t: int,
                 k_in: int = K_IN) -> JointWindow:
    """Window ending at frame t; early frames are front-padded with frame 0."""
    if t < 0 or t >= joint_h.shape[0]:
        raise ValueError(f"step {t} outside sequence of length {joint_h.shape[0]}")
    lo = t - k_in + 1
    if lo >= 0:
        ph = joint_h[lo : t + 1]
        pr = joint_r[lo : t + 1]
    else:
        pad = -lo
        ph = np.concatenate([np.repeat(joint_h[:1], pad, axis=0), joint_h[: t + 1]])
        pr = np.concatenate([np.repeat(joint_r[:1], pad, axis=0), joint_r[: t + 1]])
    return JointWindow(ph, pr, t)


class AnticipationModel:
    """Regressor from flattened joint windows to a k_max-frame prediction block."""

    def __init__(self, d_h: int, d_r: int, k_in: int = K_IN, k_max: int = K_MAX,
                 rng: Optional[np.random.Generator] = None,
                 hidden: Sequence[int] = (64, 64)):
        self.d_h = d_h
        self.d_r = d_r
        self.k_in = k_in
        self.k_max = k_max
        sizes = [k_in * (d_h + d_r), *hidden, k_max * d_h]
        self.net = MLP(sizes, rng) if rng is not None else MLP.zeros(sizes)
        self.optimizer = Adam(self.net.param_list())

    def _check_window(self, window: JointWindow) -> np.ndarray:
        if window.p_h.shape != (self.k_in, self.d_h):
            raise ValueError(
                f"human block {window.p_h.shape}, expected ({self.k_in}, {self.d_h})"
            )
        if window.p_r.shape != (self.k_in, self.d_r):
            raise ValueError(
                f"robot block {window.p_r.shape}, expected ({self.k_in}, {self.d_r})"
            )
        return window.flat()

    def predict_block(self, window: JointWindow) -> np.ndarray:
        """Full k_max x d_h prediction block."""
        out = self.net(self._check_window(window))
        return out.reshape(self.k_max, self.d_h)

    def predict(self, window: JointWindow) -> np.ndarray:
        """Prediction truncated to the stage horizon at the window's step."""
        return self.predict_block(window)[: horizon_for(window.t)]

    # ----------------------------------------------------- serialization
    def to_arrays(self) -> Dict[str, np.ndarray]:
        out = {
            "dims": np.array([self.d_h, self.d_r, self.k_in, self.k_max],
                             dtype=np.float64)
        }
        for i, (w, b) in enumerate(zip(self.net.weights, self.net.biases)):
            out[f"w{i}"] = w.copy()
            out[f"b{i}"] = b.copy()
        return out

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray]) -> "AnticipationModel":
        d_h, d_r, k_in, k_max = (int(v) for v in arrays["dims"])
        n_hidden = sum(1 for k in arrays if k.startswith("w")) - 1
        hidden = [arrays[f"w{i}"].shape[0] for i in range(n_hidden)]
        model = cls(d_h, d_r, k_in, k_max, hidden=hidden)
        for i in range(model.net.n_layers):
            model.net.weights[i][...] = arrays[f"w{i}"]
            model.net.biases[i][...] = arrays[f"b{i}"]
        return model


def augment_observation(obs_r: np.ndarray, prediction: np.ndarray,
                        k_max: int = K_MAX, d_h: Optional[int] = None) -> np.ndarray:
    """Concatenate obs, zero-padded prediction block, and the horizon fraction."""
    prediction = np.asarray(prediction, dtype=np.float64)
    if prediction.ndim != 2:
        raise ValueError("prediction must be 2-d (k x d_h)")
    k, d = prediction.shape
    if d_h is not None and d != d_h:
        raise ValueError(f"prediction width {d}, expected {d_h}")
    if k > k_max:
        raise ValueError(f"prediction has {k} rows, cap is {k_max}")
    block = np.zeros((k_max, d))
    block[:k] = prediction
    return np.concatenate([obs_r, block.ravel(), [k / k_max]])


def augmented_dim(obs_dim: int, d_h: int, k_max: int = K_MAX) -> int:
    return obs_dim + k_max * d_h + 1


# ----------------------------------------------------------- training
def extract_windows(joint_sequences, k_in: int = K_IN,
                    k_max: int = K_MAX) -> Tuple[np.ndarray, np.ndarray]:
    """Build (input, target) pairs from episode joint lanes.

    Windows never cross episode boundaries: episodes shorter than
    k_in + k_max contribute nothing, and targets stop k_max frames short
    of each episode's end.
    """
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    for joint_h, joint_r in joint_sequences:
        T = joint_h.shape[0]
        for t in range(k_in - 1, T - k_max):
            w = build_window(joint_h, joint_r, t, k_in)
            xs.append(w.flat())
            ys.append(joint_h[t + 1 : t + 1 + k_max].ravel())
    if not xs:
        return (np.zeros((0, 0)), np.zeros((0, 0)))
    return np.stack(xs), np.stack(ys)


def _loss_and_grads(model: AnticipationModel, x: np.ndarray, y: np.ndarray):
    out, cache = model.net.forward(x)
    err = out - y
    loss = float(np.mean(err * err))
    grads, _ = model.net.backward(cache, 2.0 * err / err.size)
    flat = [g for pair in grads for g in pair]
    return loss, flat


def evaluate_mse(model: AnticipationModel, x: np.ndarray, y: np.ndarray) -> float:
    out, _ = model.net.forward(x)
    return float(np.mean((out - y) ** 2))


def train(model: AnticipationModel, joint_sequences, steps: int, lr: float,
          batch_size: int, rng: np.random.Generator):
    """Minibatch regression on extracted windows; returns (model, final MSE)."""
    x, y = extract_windows(joint_sequences, model.k_in, model.k_max)
    if x.shape[0] == 0:
        raise ValueError("insufficient data: no complete windows in buffer")
    n = x.shape[0]
    model.optimizer.lr = lr
    for _ in range(int(steps)):
        idx = rng.integers(0, n, size=min(batch_size, n))
        _, grads = _loss_and_grads(model, x[idx], y[idx])
        model.optimizer.step(model.net.param_list(), grads)
    return model, evaluate_mse(model, x, y)


# ------------------------------------------------------------ baselines
def zoh_block(x: np.ndarray, k_in: int, d_h: int, k_max: int) -> np.ndarray:
    """Zero-order-hold baseline: repeat each window's last human frame."""
    last = x[:, (k_in - 1) * d_h : k_in * d_h]
    return np.tile(last, (1, k_max))


def mse_at_horizon(pred: np.ndarray, y: np.ndarray, k: int, d_h: int) -> float:
    """MSE over the first k predicted frames only."""
    cols = k * d_h
    return float(np.mean((pred[:, :cols] - y[:, :cols]) ** 2))
