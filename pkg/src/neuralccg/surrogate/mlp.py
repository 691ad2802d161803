"""Fully connected ReLU network with hand-written backpropagation and Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DESK_HIDDEN = (128, 64, 32, 16)
LARGE_HIDDEN = (1024, 512, 256, 128)


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class MLP:
    """Weights are stored (fan_in, fan_out) so a batch forward is ``x @ W + b``."""

    weights: list
    biases: list

    @classmethod
    def init(cls, dims, seed=None) -> "MLP":
        dims = list(dims)
        if len(dims) < 2 or dims[-1] != 1:
            raise ValueError(f"layer dims {dims} must end in a single output")
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, float)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = relu(h)
        return h[..., 0]

    def forward_cached(self, x):
        """Forward pass keeping layer inputs and pre-activations for backprop."""
        acts, pres = [np.asarray(x, float)], []
        last = len(self.weights) - 1
        h = acts[0]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            pres.append(a)
            h = relu(a) if i < last else a
            acts.append(h)
        return h[:, 0], (acts, pres)

    def backward(self, cache, dout) -> list[np.ndarray]:
        """Gradients in :meth:`params` order given dL/d(output) per sample."""
        acts, pres = cache
        grad = np.asarray(dout, float)[:, None]
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                grad = grad * (pres[i] > 0)
            gw[i] = acts[i].T @ grad
            gb[i] = grad.sum(axis=0)
            if i:
                grad = grad @ self.weights[i].T
        return [g for pair in zip(gw, gb) for g in pair]

    def loss_and_grads(self, x, y):
        """Half mean squared error and its parameter gradients."""
        pred, cache = self.forward_cached(x)
        err = pred - y
        n = len(y)
        return 0.5 * float(err @ err) / n, self.backward(cache, err / n)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def gradient_check(mlp: MLP, x, y, delta: float = 1e-5, abs_floor: float = 1e-7) -> float:
    """Max relative error between backprop and central differences over all parameters.

    Samples with a hidden pre-activation within reach of the ReLU kink under a
    ``delta`` perturbation are dropped; the derivative is undefined there.
    """
    if not 1e-7 <= delta <= 1e-3:
        raise ValueError("delta must lie in [1e-7, 1e-3]")
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    _, (acts, pres) = mlp.forward_cached(x)
    reach = 1e3 * delta * (1.0 + np.abs(x).max())
    smooth = np.ones(len(x), bool)
    for a in pres[:-1]:
        smooth &= np.all(np.abs(a) > reach, axis=1)
    x, y = x[smooth], y[smooth]
    if len(x) == 0:
        return 0.0
    _, analytic = mlp.loss_and_grads(x, y)
    worst = 0.0
    for p, g in zip(mlp.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + delta
            lp, _ = _loss(mlp, x, y)
            flat[j] = orig - delta
            lm, _ = _loss(mlp, x, y)
            flat[j] = orig
            num = (lp - lm) / (2 * delta)
            denom = max(abs(num), abs(gflat[j]), abs_floor)
            worst = max(worst, abs(num - gflat[j]) / denom)
    return worst


def _loss(mlp, x, y):
    err = mlp.forward(x) - y
    return 0.5 * float(err @ err) / len(y), None
