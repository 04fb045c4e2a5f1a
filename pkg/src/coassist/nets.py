"""Minimal dense networks with explicit backward passes, float64 throughout.

Everything downstream (policy heads, anticipation regressor) runs on these,
so the gradients here are the ones the finite-difference checks exercise.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence

import numpy as np


def tanh_backward(h: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad * (1.0 - h * h)


class MLP:
    """Fully connected net with tanh hidden layers and a linear output."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator],
                 out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if rng is None:
                w = np.zeros((n_out, n_in))
            else:
                w = rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_out, n_in))
                if i == len(self.sizes) - 2:
                    w = w * out_scale
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "MLP":
        return cls(sizes, rng=None)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray):
        """Returns (output, cache); accepts a single row or a batch."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]}, expected {self.sizes[0]}")
        acts = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.weights[i].T + self.biases[i]
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        out = h[0] if squeeze else h
        return out, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, grad_out: np.ndarray):
        """Backprop a gradient w.r.t. the output; returns (grads, grad_input).

        ``grads`` is a list of (dW, db) matching layer order.
        """
        grad = np.asarray(grad_out, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None, :]
        grads = [None] * self.n_layers
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                grad = tanh_backward(cache[i + 1], grad)
            dw = grad.T @ cache[i]
            db = grad.sum(axis=0)
            grads[i] = (dw, db)
            grad = grad @ self.weights[i]
        return grads, grad

    # ------------------------------------------------------- parameters
    def param_list(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.param_list())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.param_list()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params(),):
            raise ValueError(f"expected {self.n_params()} values, got {flat.shape}")
        i = 0
        for p in self.param_list():
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "MLP":
        clone = MLP.zeros(self.sizes)
        clone.set_flat(self.get_flat())
        return clone


def flatten_grads(grads) -> np.ndarray:
    parts = []
    for dw, db in grads:
        parts.append(dw.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


class Adam:
    """Plain Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count mismatch")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place to a global norm cap; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total
