"""Monotone neural risk models trained online from admission feedback.

The network is ``sigmoid(|w2| . tanh(|w1| * x + b1) + b2)`` with ``x = d / input_scale``.
Taking absolute values of the raw weights keeps every effective weight
nonnegative, so the output cannot decrease as the requested delay grows.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .env import FeedbackSample

HIDDEN = 16
N_PARAMS = 3 * HIDDEN + 1

# slices into the flat parameter vector
W1 = slice(0, HIDDEN)
B1 = slice(HIDDEN, 2 * HIDDEN)
W2 = slice(2 * HIDDEN, 3 * HIDDEN)
B2 = slice(3 * HIDDEN, 3 * HIDDEN + 1)


@dataclass
class TrainConfig:
    iterations: int = 10
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class RiskModel:
    params: np.ndarray  # raw parameters, layout given by W1/B1/W2/B2
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0
    input_scale: float = 100.0

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got {self.params.shape}")
        if self.m is None:
            self.m = np.zeros(N_PARAMS)
        if self.v is None:
            self.v = np.zeros(N_PARAMS)

    @property
    def layer1_raw_weights(self):
        return self.params[W1]

    @property
    def layer1_bias(self):
        return self.params[B1]

    @property
    def layer2_raw_weights(self):
        return self.params[W2]

    @property
    def layer2_bias(self):
        return float(self.params[B2][0])

    def copy(self) -> "RiskModel":
        return RiskModel(self.params.copy(), self.m.copy(), self.v.copy(), self.step, self.input_scale)

    def to_dict(self) -> dict:
        return {
            "params": self.params.tolist(),
            "m": self.m.tolist(),
            "v": self.v.tolist(),
            "step": self.step,
            "input_scale": self.input_scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RiskModel":
        return cls(
            np.array(data["params"], dtype=float),
            np.array(data["m"], dtype=float),
            np.array(data["v"], dtype=float),
            int(data["step"]),
            float(data["input_scale"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RiskModel":
        return cls.from_dict(json.loads(text))


def init_model(rng: np.random.Generator, input_scale: float = 100.0) -> RiskModel:
    params = np.zeros(N_PARAMS)
    params[W1] = rng.uniform(-0.5, 0.5, HIDDEN)
    params[W2] = rng.uniform(-0.5, 0.5, HIDDEN)
    return RiskModel(params, input_scale=input_scale)


def _sigmoid(z):
    # tanh form is overflow-free for any z
    return 0.5 + 0.5 * np.tanh(0.5 * z)


def _logits(params: np.ndarray, x: np.ndarray):
    h = np.tanh(np.outer(x, np.abs(params[W1])) + params[B1])
    return h @ np.abs(params[W2]) + params[B2][0], h


def predict(m: RiskModel, d):
    """Predicted acceptance probability for delay(s) ``d`` in ms."""
    x = np.atleast_1d(np.asarray(d, dtype=float)) / m.input_scale
    z, _ = _logits(m.params, x)
    p = _sigmoid(z)
    return float(p[0]) if np.ndim(d) == 0 else p


class ModelEvaluator:
    """Read-only snapshot of a model for use as a domain evaluator."""

    __slots__ = ("_w1", "_b1", "_w2", "_b2", "_scale")

    def __init__(self, m: RiskModel):
        self._w1 = np.abs(m.params[W1]) / m.input_scale
        self._b1 = m.params[B1].copy()
        self._w2 = np.abs(m.params[W2])
        self._b2 = float(m.params[B2][0])
        self._scale = m.input_scale

    def __call__(self, d):
        if isinstance(d, float):
            z = float(np.tanh(self._w1 * d + self._b1) @ self._w2) + self._b2
            return 0.5 + 0.5 * math.tanh(0.5 * z)
        d = np.asarray(d, dtype=float)
        h = np.tanh(np.multiply.outer(d, self._w1) + self._b1)
        return 0.5 + 0.5 * np.tanh(0.5 * (h @ self._w2 + self._b2))


class StackedModelEvaluator:
    """Several model snapshots evaluated together: column ``i`` of the input goes to model ``i``."""

    __slots__ = ("_w1", "_b1", "_w2", "_b2")

    def __init__(self, evals):
        self._w1 = np.stack([e._w1 for e in evals])
        self._b1 = np.stack([e._b1 for e in evals])
        self._w2 = np.stack([e._w2 for e in evals])
        self._b2 = np.array([e._b2 for e in evals])

    def __call__(self, D):
        h = np.tanh(D[..., None] * self._w1 + self._b1)
        z = np.einsum("...k,...k->...", h, self._w2) + self._b2
        return 0.5 + 0.5 * np.tanh(0.5 * z)


ModelEvaluator.stacked = StackedModelEvaluator


def loss_and_grad(params: np.ndarray, x: np.ndarray, a: np.ndarray):
    """Mean binary cross-entropy and its gradient w.r.t. the raw parameters.

    ``x`` is the normalized delay ``d / input_scale``.
    """
    z, h = _logits(params, x)
    n = len(x)
    # BCE on logits: softplus(z) - a*z
    loss = float(np.mean(np.logaddexp(0.0, z) - a * z))
    gz = (_sigmoid(z) - a) / n
    w1, w2 = params[W1], params[W2]
    grad = np.empty_like(params)
    grad[W2] = (h.T @ gz) * np.sign(w2)
    grad[B2] = gz.sum()
    gpre = np.outer(gz, np.abs(w2)) * (1.0 - h * h)
    grad[W1] = (x @ gpre) * np.sign(w1)
    grad[B1] = gpre.sum(axis=0)
    return loss, grad


class FeedbackBuffer:
    """Fixed-capacity FIFO of feedback samples; oldest samples are evicted first."""

    def __init__(self, capacity: int = 300):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._delays: deque = deque(maxlen=capacity)
        self._accepted: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self._delays)

    @property
    def samples(self) -> list[FeedbackSample]:
        return [FeedbackSample(d, a) for d, a in zip(self._delays, self._accepted)]

    def push(self, batch: Iterable[FeedbackSample]) -> "FeedbackBuffer":
        for s in batch:
            self._delays.append(float(s.delay))
            self._accepted.append(int(s.accepted))
        return self

    def push_arrays(self, delays, accepted) -> "FeedbackBuffer":
        self._delays.extend(float(d) for d in delays)
        self._accepted.extend(int(a) for a in accepted)
        return self

    def arrays(self):
        return np.fromiter(self._delays, float, len(self)), np.fromiter(self._accepted, float, len(self))


def push_feedback(b: FeedbackBuffer, batch: Iterable[FeedbackSample]) -> FeedbackBuffer:
    return b.push(batch)


def update(m: RiskModel, b: FeedbackBuffer, cfg: TrainConfig | None = None) -> tuple[RiskModel, float | None]:
    """Run full-buffer AdamW iterations in place.

    Returns the model and the loss after the final iteration, or ``None`` for the
    loss when the buffer is empty (the model is left untouched).
    """
    cfg = cfg or TrainConfig()
    if len(b) == 0:
        return m, None
    d, a = b.arrays()
    x = d / m.input_scale
    p = m.params
    for _ in range(cfg.iterations):
        _, g = loss_and_grad(p, x, a)
        m.step += 1
        p *= 1.0 - cfg.lr * cfg.weight_decay
        m.m = cfg.beta1 * m.m + (1.0 - cfg.beta1) * g
        m.v = cfg.beta2 * m.v + (1.0 - cfg.beta2) * g * g
        m_hat = m.m / (1.0 - cfg.beta1 ** m.step)
        v_hat = m.v / (1.0 - cfg.beta2 ** m.step)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    loss, _ = loss_and_grad(p, x, a)
    return m, loss


def buffer_loss(m: RiskModel, b: FeedbackBuffer) -> float:
    d, a = b.arrays()
    return loss_and_grad(m.params, d / m.input_scale, a)[0]


def gradient_check(m: RiskModel, b: FeedbackBuffer, h: float = 1e-5, atol: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    Components where both gradients are below ``atol`` count as exact.
    """
    if len(b) == 0:
        raise ValueError("gradient check needs a non-empty buffer")
    d, a = b.arrays()
    x = d / m.input_scale
    _, analytic = loss_and_grad(m.params, x, a)
    numeric = np.empty(N_PARAMS)
    for i in range(N_PARAMS):
        up = m.params.copy()
        dn = m.params.copy()
        up[i] += h
        dn[i] -= h
        numeric[i] = (loss_and_grad(up, x, a)[0] - loss_and_grad(dn, x, a)[0]) / (2 * h)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel = np.where(scale < atol, 0.0, diff / np.maximum(scale, atol))
    return float(rel.max())
