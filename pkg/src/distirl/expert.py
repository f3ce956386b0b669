"""Risk-averse tabular experts and demonstration generation.

The expert is online quantile-regression Q-learning whose behaviour and
bootstrap action both maximise the critic's distortion risk measure.
Episodes run ``n_envs`` at a time in lock step; each (s, a) touched in a
step moves by the mean of its per-transition gradients. The Huber
gradient is divided by kappa, so with a small kappa the update is close to
the pinball-loss step and ``step_size`` bounds how far an atom moves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .critic import QuantileCritic, qr_gradient
from .dist import Distortion, distortion_to_str, parse_distortion
from .errors import ConfigurationError
from .mdp import DemoSet, TabularMdp, TrueRewardSpec, _categorical, episode_rng, rollout
from .policy import RiskPolicy, policy_from_critic

__all__ = ["ExpertConfig", "train_expert", "generate_demos", "epsilon_schedule", "optimistic_value"]


@dataclass
class ExpertConfig:
    distortion: str = "cvar:0.05"
    episodes: int = 20000
    step_size: float = 0.5
    step_size_end: float = 0.01
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_fraction: float = 0.5
    horizon: int = 40
    n_quantiles: int = 50
    kappa: float = 0.01
    beta: float = 0.01
    n_envs: int = 32
    init_value: Optional[float] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        for name in ("epsilon_start", "epsilon_end", "anneal_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if not self.step_size > 0 or not self.step_size_end > 0 or not self.beta > 0 or not self.kappa > 0:
            raise ConfigurationError("step_size, beta and kappa must be positive")
        if self.horizon < 1 or self.n_quantiles < 1 or self.n_envs < 1:
            raise ConfigurationError("horizon, n_quantiles and n_envs must be >= 1")
        try:
            self.distortion = distortion_to_str(parse_distortion(self.distortion))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> "ExpertConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown expert config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def risk(self) -> Distortion:
        return parse_distortion(self.distortion)


def epsilon_schedule(episode: int, config: ExpertConfig) -> float:
    """Linear decay from start to end over the first ``anneal_fraction`` of episodes."""
    span = config.anneal_fraction * config.episodes
    if span <= 0:
        return config.epsilon_end
    frac = min(episode / span, 1.0)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def optimistic_value(spec: TrueRewardSpec, gamma: float) -> float:
    """Upper bound on plausible returns: best mean plus three standard deviations, every step."""
    top = float(np.max(spec.mean_table() + 3.0 * np.sqrt(spec.var_table())))
    return max(top, 0.0) / (1.0 - gamma)


def _argmax_rows(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise argmax with uniform tie-breaking."""
    noise = rng.random(values.shape) * 1e-12
    best = values.max(axis=-1, keepdims=True)
    return np.argmax(np.where(values >= best - 1e-12, 1.0 + noise, 0.0), axis=-1)


def train_expert(
    mdp: TabularMdp, spec: TrueRewardSpec, config: ExpertConfig
) -> tuple[QuantileCritic, RiskPolicy]:
    if spec.shape != mdp.shape:
        raise ConfigurationError("reward spec and MDP disagree on (n_states, n_actions)")
    rng = np.random.default_rng(config.seed)
    risk = config.risk
    n_states, n_actions = mdp.shape
    init = config.init_value
    if init is None:
        init = optimistic_value(spec, mdp.gamma)
    critic = QuantileCritic.constant(n_states, n_actions, config.n_quantiles, init)
    done = 0
    while done < config.episodes:
        n = min(config.n_envs, config.episodes - done)
        eps = np.array([epsilon_schedule(done + i, config) for i in range(n)])
        frac = done / config.episodes
        lr = config.step_size + frac * (config.step_size_end - config.step_size)
        s = _categorical(np.broadcast_to(mdp.init_dist, (n, n_states)), rng)
        for _ in range(config.horizon):
            values = critic.drm_table(risk)
            greedy = _argmax_rows(values[s], rng)
            explore = rng.random(n) < eps
            a = np.where(explore, rng.integers(0, n_actions, size=n), greedy)
            r = spec.sample(s, a, rng)
            s2 = _categorical(mdp.transition[s, a], rng)
            a2 = _argmax_rows(values[s2], rng)
            y = r[:, None] + mdp.gamma * critic.theta[s2, a2]
            g = qr_gradient(critic.theta[s, a], y, config.kappa)
            step = np.zeros_like(critic.theta)
            count = np.zeros((n_states, n_actions))
            np.add.at(step, (s, a), g)
            np.add.at(count, (s, a), 1.0)
            hit = count > 0
            step[hit] /= count[hit][:, None]
            critic.theta += lr * step / (config.n_quantiles * config.kappa)
            critic.theta.sort(axis=-1)
            s = s2
        done += n
    return critic, policy_from_critic(critic, risk, config.beta)


def generate_demos(
    mdp: TabularMdp,
    spec: TrueRewardSpec,
    policy: RiskPolicy,
    n_traj: int,
    horizon: int,
    rng_or_seed,
    metadata: Optional[dict] = None,
) -> DemoSet:
    """Roll out ``n_traj`` episodes; true rewards land in ``signals`` only.

    An integer seed gives each trajectory its own stream keyed by
    (seed, index); a Generator is used sequentially.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    trajectories = []
    for i in range(n_traj):
        rng = episode_rng(rng_or_seed, i) if isinstance(rng_or_seed, (int, np.integer)) else rng_or_seed
        trajectories.append(rollout(mdp, policy.probs, spec, horizon, rng))
    return DemoSet(trajectories, mdp.n_states, mdp.n_actions, dict(metadata or {}))
