"""Risk-aware Boltzmann policies over a critic's distortion risk measure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import Distortion, Neutral

__all__ = ["RiskPolicy", "softmax_rows", "policy_from_critic", "policy_from_values", "entropy", "act"]


def softmax_rows(values: np.ndarray, beta: float) -> np.ndarray:
    z = np.asarray(values, dtype=float) / beta
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class RiskPolicy:
    probs: np.ndarray
    distortion: Distortion = Neutral()
    beta: float = 0.1

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("policy probabilities must be an (S, A) table")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("policy rows must be probability vectors")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, distortion: Distortion = Neutral(), beta: float = 0.1):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions), distortion, beta)

    def entropy(self, s=None):
        p = self.probs if s is None else self.probs[s]
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=-1)
        return float(h) if np.ndim(h) == 0 else h


def policy_from_values(values: np.ndarray, d: Distortion, beta: float) -> RiskPolicy:
    if not beta > 0:
        raise ValueError("beta must be positive")
    return RiskPolicy(softmax_rows(values, beta), d, beta)


def policy_from_critic(critic, d: Distortion, beta: float) -> RiskPolicy:
    """Boltzmann policy ``pi(a|s) ~ exp(M_d(Z(s, a)) / beta)``."""
    return policy_from_values(critic.drm_table(d), d, beta)


def entropy(policy: RiskPolicy, s: int) -> float:
    return policy.entropy(s)


def act(policy: RiskPolicy, s: int, rng: np.random.Generator) -> int:
    row = policy.probs[s]
    cum = np.cumsum(row)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), row.size - 1))
