from __future__ import annotations

import numpy as np


class Adam:
    """Elementwise Adam over a single parameter array; ``mask`` freezes entries."""

    def __init__(self, shape, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, mask=None):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.mask = None if mask is None else np.broadcast_to(mask, shape)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        upd = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if self.mask is not None:
            upd = np.where(self.mask, upd, 0.0)
        return params - upd


class SGD:
    def __init__(self, shape, lr: float, mask=None):
        self.lr = lr
        self.mask = None if mask is None else np.broadcast_to(mask, shape)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        upd = self.lr * grad
        if self.mask is not None:
            upd = np.where(self.mask, upd, 0.0)
        return params - upd


def make_optimizer(name: str, shape, lr: float, mask=None):
    name = name.lower()
    if name == "adam":
        return Adam(shape, lr, mask=mask)
    if name == "sgd":
        return SGD(shape, lr, mask=mask)
    raise ValueError(f"unknown optimizer {name!r}")
