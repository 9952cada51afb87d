"""One-hidden-layer ReLU regressor trained by plain SGD, the comparison model.

Maps a normalized position to a normalized quality vector.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class MlpModel:
    w1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (l, hidden)
    b2: np.ndarray  # (l,)

    @classmethod
    def init(cls, d: int, l: int, hidden: int = 100, seed: int = 0) -> "MlpModel":
        """Uniform ``+-1/sqrt(fan_in)`` weights and biases, seeded."""
        if d < 1 or l < 1 or hidden < 1:
            raise ValueError("layer sizes must be positive")
        rng = np.random.default_rng(seed)
        a1, a2 = 1.0 / np.sqrt(d), 1.0 / np.sqrt(hidden)
        return cls(rng.uniform(-a1, a1, (hidden, d)), rng.uniform(-a1, a1, hidden),
                   rng.uniform(-a2, a2, (l, hidden)), rng.uniform(-a2, a2, l))

    @classmethod
    def zeros(cls, d: int, l: int, hidden: int = 100) -> "MlpModel":
        return cls(np.zeros((hidden, d)), np.zeros(hidden), np.zeros((l, hidden)), np.zeros(l))

    @property
    def hidden(self) -> int:
        return len(self.b1)

    def params(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("w1", "b1", "w2", "b2")}

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        return cls(*(np.asarray(data[k], dtype=float) for k in ("w1", "b1", "w2", "b2")))


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """``w2 relu(w1 x + b1) + b2``; ``x`` may be one input or a batch of rows."""
    x = np.asarray(x, dtype=float)
    h = np.maximum(x @ model.w1.T + model.b1, 0.0)
    return h @ model.w2.T + model.b2


def squared_error(model: MlpModel, x, target) -> float:
    r = mlp_forward(model, x) - np.asarray(target, dtype=float)
    return float(np.sum(r * r))


def gradients(model: MlpModel, x, target):
    """Loss ``||forward(x) - target||^2`` and its gradients for one sample."""
    x = np.asarray(x, dtype=float)
    pre = model.w1 @ x + model.b1
    h = np.maximum(pre, 0.0)
    r = model.w2 @ h + model.b2 - np.asarray(target, dtype=float)
    g_out = 2.0 * r
    g_w2 = np.outer(g_out, h)
    g_h = (model.w2.T @ g_out) * (pre > 0)
    return float(r @ r), [np.outer(g_h, x), g_h, g_w2, g_out]


def mlp_sgd_step(model: MlpModel, x, target, lr: float = 0.01) -> float:
    """One SGD step in place; returns the loss before the step."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    loss, grads = gradients(model, x, target)
    if not (np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads)):
        warnings.warn("non-finite gradient, SGD step skipped", RuntimeWarning, stacklevel=2)
        return loss
    for p, g in zip(model.params(), grads):
        p -= lr * g
    return loss
