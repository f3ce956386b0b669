"""Tabular MDPs, ground-truth stochastic rewards, gridworlds and rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "TabularMdp",
    "Deterministic",
    "Gaussian",
    "SkewNormal",
    "BernoulliPenalty",
    "TrueRewardSpec",
    "Trajectory",
    "DemoSet",
    "ACTIONS",
    "build_gridworld",
    "cell_index",
    "index_cell",
    "sample_true_reward",
    "occupancy_measure",
    "rollout",
    "rollout_batch",
    "returns_from",
    "sample_transitions",
    "discounted_returns",
    "policy_evaluation",
    "check_policy",
    "episode_rng",
]

# up, down, left, right as (d_row, d_col); row 0 is the top edge
ACTIONS = ((-1, 0), (1, 0), (0, -1), (0, 1))

_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    gamma: float
    init_dist: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.transition, dtype=float)
        mu0 = np.array(self.init_dist, dtype=float).ravel()
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise ConfigurationError(f"transition must have shape (S, A, S), got {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > _ATOL):
            raise ConfigurationError("transition rows must be probability vectors")
        if mu0.shape != (p.shape[0],) or np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > _ATOL:
            raise ConfigurationError("init_dist must be a probability vector over states")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        p.setflags(write=False)
        mu0.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "init_dist", mu0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_states, self.n_actions


# -- ground-truth reward laws -------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    c: float

    @property
    def mean(self) -> float:
        return float(self.c)

    @property
    def var(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigurationError("Gaussian sigma must be positive")

    @property
    def mean(self) -> float:
        return float(self.mu)

    @property
    def var(self) -> float:
        return float(self.sigma) ** 2


@dataclass(frozen=True)
class SkewNormal:
    loc: float
    scale: float
    alpha: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ConfigurationError("SkewNormal scale must be positive")

    @property
    def delta(self) -> float:
        return self.alpha / math.sqrt(1.0 + self.alpha * self.alpha)

    @property
    def mean(self) -> float:
        return self.loc + self.scale * self.delta * math.sqrt(2.0 / math.pi)

    @property
    def var(self) -> float:
        return self.scale**2 * (1.0 - 2.0 * self.delta**2 / math.pi)


@dataclass(frozen=True)
class BernoulliPenalty:
    """``base`` minus ``penalty`` with probability ``p``."""

    base: float
    p: float
    penalty: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError("BernoulliPenalty p must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return self.base - self.p * self.penalty

    @property
    def var(self) -> float:
        return self.p * (1.0 - self.p) * self.penalty**2


RewardLaw = Union[Deterministic, Gaussian, SkewNormal, BernoulliPenalty]

_KIND = {Deterministic: 0, Gaussian: 1, SkewNormal: 2, BernoulliPenalty: 3}


def _law_params(law: RewardLaw) -> tuple[int, float, float, float]:
    if isinstance(law, Deterministic):
        return 0, law.c, 0.0, 0.0
    if isinstance(law, Gaussian):
        return 1, law.mu, law.sigma, 0.0
    if isinstance(law, SkewNormal):
        return 2, law.loc, law.scale, law.delta
    if isinstance(law, BernoulliPenalty):
        return 3, law.base, law.p, law.penalty
    raise TypeError(f"not a reward law: {law!r}")


class TrueRewardSpec:
    """Per-(s, a) ground-truth reward laws with vectorised sampling."""

    def __init__(self, laws: Sequence[Sequence[RewardLaw]]):
        table = [list(row) for row in laws]
        if not table or not table[0]:
            raise ConfigurationError("reward spec table is empty")
        n_actions = len(table[0])
        if any(len(row) != n_actions for row in table):
            raise ConfigurationError("reward spec rows must all have n_actions entries")
        self._laws = tuple(tuple(row) for row in table)
        params = np.array([[_law_params(l) for l in row] for row in table], dtype=float)
        self._kind = params[..., 0].astype(np.int8)
        self._p1, self._p2, self._p3 = params[..., 1], params[..., 2], params[..., 3]
        for arr in (self._kind, self._p1, self._p2, self._p3):
            arr.setflags(write=False)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, law: RewardLaw) -> "TrueRewardSpec":
        return cls([[law] * n_actions for _ in range(n_states)])

    @property
    def shape(self) -> tuple[int, int]:
        return self._kind.shape

    def law(self, s: int, a: int) -> RewardLaw:
        return self._laws[s][a]

    def replace(self, s: int, a: int, law: RewardLaw) -> "TrueRewardSpec":
        table = [list(row) for row in self._laws]
        table[s][a] = law
        return TrueRewardSpec(table)

    def mean_table(self) -> np.ndarray:
        return np.array([[l.mean for l in row] for row in self._laws])

    def var_table(self) -> np.ndarray:
        return np.array([[l.var for l in row] for row in self._laws])

    def is_deterministic(self) -> bool:
        return bool(np.all(self.var_table() == 0.0))

    def sample(self, s, a, rng: np.random.Generator) -> np.ndarray:
        """Draw one reward per (s, a) element; three base variates per element."""
        s = np.asarray(s, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        shape = np.broadcast(s, a).shape
        z0 = rng.standard_normal(shape)
        z1 = rng.standard_normal(shape)
        u = rng.random(shape)
        kind = self._kind[s, a]
        p1, p2, p3 = self._p1[s, a], self._p2[s, a], self._p3[s, a]
        out = np.where(kind == 1, p1 + p2 * z1, p1)
        # p3 only holds delta for skew-normal entries; clip so others stay finite
        d = np.clip(p3, -1.0, 1.0)
        skew = p1 + p2 * (d * np.abs(z0) + np.sqrt(1.0 - d * d) * z1)
        out = np.where(kind == 2, skew, out)
        out = np.where(kind == 3, p1 - p3 * (u < p2), out)
        return out

    def to_records(self) -> list[dict]:
        out = []
        for s, row in enumerate(self._laws):
            for a, law in enumerate(row):
                rec = {"s": s, "a": a, "law": type(law).__name__}
                rec.update(law.__dict__)
                out.append(rec)
        return out

    @classmethod
    def from_records(cls, records: list[dict], n_states: int, n_actions: int) -> "TrueRewardSpec":
        table: list[list[Optional[RewardLaw]]] = [[None] * n_actions for _ in range(n_states)]
        for rec in records:
            rec = dict(rec)
            s, a, name = int(rec.pop("s")), int(rec.pop("a")), rec.pop("law")
            table[s][a] = law_from_dict(name, rec)
        if any(l is None for row in table for l in row):
            raise ConfigurationError("reward spec records do not cover every (s, a)")
        return cls(table)  # type: ignore[arg-type]


_LAWS = {c.__name__: c for c in _KIND}


def law_from_dict(name: str, params: dict) -> RewardLaw:
    try:
        cls = _LAWS[name]
    except KeyError:
        raise ConfigurationError(f"unknown reward law {name!r}") from None
    try:
        return cls(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None


def sample_true_reward(spec: TrueRewardSpec, s: int, a: int, rng: np.random.Generator) -> float:
    return float(spec.sample(s, a, rng))


# -- gridworld ----------------------------------------------------------------


def cell_index(cell: Sequence[int], width: int) -> int:
    return int(cell[0]) * width + int(cell[1])


def index_cell(s: int, width: int) -> tuple[int, int]:
    return divmod(int(s), width)


def build_gridworld(
    width: int,
    height: int,
    start: Sequence[int],
    goals: Sequence[tuple[Sequence[int], RewardLaw]],
    step_cost: float = 0.0,
    slip_prob: float = 0.0,
    gamma: float = 0.75,
    reemit_goal_reward: bool = True,
) -> tuple[TabularMdp, TrueRewardSpec]:
    """Four-action gridworld; cells are ``(row, col)`` with row 0 at the top.

    Goal cells are absorbing. With ``reemit_goal_reward`` the goal law pays
    out on every step spent there; otherwise the goal moves to an extra
    zero-reward sink state after paying once.
    """
    if width < 1 or height < 1:
        raise ConfigurationError("grid dimensions must be positive")
    if not 0.0 <= slip_prob < 1.0:
        raise ConfigurationError(f"slip_prob must lie in [0, 1), got {slip_prob}")

    def check(cell) -> tuple[int, int]:
        r, c = int(cell[0]), int(cell[1])
        if not (0 <= r < height and 0 <= c < width):
            raise ConfigurationError(f"cell {tuple(cell)} is outside the {height}x{width} grid")
        return r, c

    start = check(start)
    goal_cells = {}
    for cell, law in goals:
        goal_cells[check(cell)] = law

    n_cells = width * height
    n_states = n_cells if reemit_goal_reward else n_cells + 1
    sink = n_cells
    p = np.zeros((n_states, 4, n_states))
    laws: list[list[RewardLaw]] = []
    for s in range(n_states):
        if s == sink:
            p[s, :, s] = 1.0
            laws.append([Deterministic(0.0)] * 4)
            continue
        r, c = divmod(s, width)
        if (r, c) in goal_cells:
            p[s, :, s if reemit_goal_reward else sink] = 1.0
            laws.append([goal_cells[(r, c)]] * 4)
            continue
        for a in range(4):
            for b, (dr, dc) in enumerate(ACTIONS):
                prob = 1.0 - slip_prob if a == b else slip_prob / 3.0
                if prob == 0.0:
                    continue
                nr, nc = r + dr, c + dc
                nxt = nr * width + nc if (0 <= nr < height and 0 <= nc < width) else s
                p[s, a, nxt] += prob
        laws.append([Deterministic(step_cost)] * 4)
    init = np.zeros(n_states)
    init[cell_index(start, width)] = 1.0
    return TabularMdp(p, gamma, init), TrueRewardSpec(laws)


# -- policies, occupancy, evaluation -----------------------------------------


def check_policy(policy: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != shape:
        raise ValueError(f"policy must have shape {shape}, got {pi.shape}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-8):
        raise ValueError("policy rows must be probability vectors")
    return pi


def occupancy_measure(mdp: TabularMdp, policy: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Normalised discounted state-action visitation, by truncated geometric series."""
    pi = check_policy(policy, mdp.shape)
    g = mdp.gamma
    p_sa_next = mdp.transition
    dist = mdp.init_dist.copy()
    d = np.zeros(mdp.shape)
    weight = 1.0
    while True:
        step = dist[:, None] * pi
        d += (1.0 - g) * weight * step
        weight *= g
        if weight < tol:
            break
        dist = np.einsum("sa,sat->t", step, p_sa_next)
    return d


def policy_evaluation(mdp: TabularMdp, policy: np.ndarray, reward_mean: np.ndarray) -> np.ndarray:
    """Exact Q^pi for expected rewards via a linear solve."""
    pi = check_policy(policy, mdp.shape)
    s_n, a_n = mdp.shape
    p_pi = np.einsum("sat,tb->satb", mdp.transition, pi).reshape(s_n * a_n, s_n * a_n)
    q = np.linalg.solve(np.eye(s_n * a_n) - mdp.gamma * p_pi, np.asarray(reward_mean, float).ravel())
    return q.reshape(s_n, a_n)


# -- trajectories ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    signals: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        s = np.asarray(self.states, dtype=np.int64).ravel()
        a = np.asarray(self.actions, dtype=np.int64).ravel()
        if s.size == 0 or s.shape != a.shape:
            raise ValueError("trajectory needs equally many (>0) states and actions")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        if self.signals is not None:
            sig = np.asarray(self.signals, dtype=float).ravel()
            if sig.shape != s.shape:
                raise ValueError("signals must align with steps")
            object.__setattr__(self, "signals", sig)

    def __len__(self) -> int:
        return int(self.states.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        if (self.signals is None) != (other.signals is None):
            return False
        same = np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)
        return same and (self.signals is None or np.array_equal(self.signals, other.signals))


@dataclass(eq=False)
class DemoSet:
    trajectories: list[Trajectory]
    n_states: int
    n_actions: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for i, tr in enumerate(self.trajectories):
            if tr.states.max() >= self.n_states or tr.states.min() < 0:
                raise ValueError(f"trajectory {i} has a state outside [0, {self.n_states})")
            if tr.actions.max() >= self.n_actions or tr.actions.min() < 0:
                raise ValueError(f"trajectory {i} has an action outside [0, {self.n_actions})")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DemoSet):
            return NotImplemented
        return (
            self.n_states == other.n_states
            and self.n_actions == other.n_actions
            and self.metadata == other.metadata
            and len(self.trajectories) == len(other.trajectories)
            and all(x == y for x, y in zip(self.trajectories, other.trajectories))
        )

    @property
    def has_signals(self) -> bool:
        return bool(self.trajectories) and all(t.signals is not None for t in self.trajectories)

    def without_signals(self) -> "DemoSet":
        trs = [Trajectory(t.states, t.actions) for t in self.trajectories]
        return DemoSet(trs, self.n_states, self.n_actions, dict(self.metadata))

    def state_action_counts(self) -> np.ndarray:
        counts = np.zeros((self.n_states, self.n_actions), dtype=np.int64)
        for t in self.trajectories:
            np.add.at(counts, (t.states, t.actions), 1)
        return counts


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Independent stream keyed by (seed, episode index)."""
    return np.random.default_rng([int(seed), int(episode)])


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cum[..., -1]
    idx = (cum <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def rollout(
    mdp: TabularMdp,
    policy: np.ndarray,
    spec: TrueRewardSpec,
    horizon: int,
    rng: np.random.Generator,
) -> Trajectory:
    """One episode; true rewards are stored in ``signals``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pi = check_policy(policy, mdp.shape)
    states = np.empty(horizon, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    s = int(_categorical(mdp.init_dist, rng))
    for t in range(horizon):
        a = int(_categorical(pi[s], rng))
        states[t], actions[t] = s, a
        rewards[t] = spec.sample(s, a, rng)
        s = int(_categorical(mdp.transition[s, a], rng))
    return Trajectory(states, actions, rewards)


def rollout_batch(
    mdp: TabularMdp,
    policy: np.ndarray,
    spec: TrueRewardSpec,
    horizon: int,
    n_episodes: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised episodes; returns (states, actions, rewards), each (n, horizon)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pi = check_policy(policy, mdp.shape)
    states = np.empty((n_episodes, horizon), dtype=np.int64)
    actions = np.empty((n_episodes, horizon), dtype=np.int64)
    rewards = np.empty((n_episodes, horizon))
    s = _categorical(np.broadcast_to(mdp.init_dist, (n_episodes, mdp.n_states)), rng)
    for t in range(horizon):
        a = _categorical(pi[s], rng)
        states[:, t], actions[:, t] = s, a
        rewards[:, t] = spec.sample(s, a, rng)
        s = _categorical(mdp.transition[s, a], rng)
    return states, actions, rewards


def returns_from(
    mdp: TabularMdp,
    policy: np.ndarray,
    spec: TrueRewardSpec,
    s: int,
    a: int,
    n: int,
    horizon: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Discounted returns of ``n`` episodes that take ``a`` in ``s`` and then follow ``policy``."""
    pi = check_policy(policy, mdp.shape)
    st = np.full(n, s, dtype=np.int64)
    at = np.full(n, a, dtype=np.int64)
    out = np.zeros(n)
    disc = 1.0
    for _ in range(horizon):
        out += disc * spec.sample(st, at, rng)
        disc *= mdp.gamma
        st = _categorical(mdp.transition[st, at], rng)
        at = _categorical(pi[st], rng)
    return out


def sample_transitions(mdp: TabularMdp, policy: np.ndarray, spec: TrueRewardSpec, s, a, rng: np.random.Generator):
    """One (r, s', a') per element of ``s, a`` with ``a' ~ policy(s')``."""
    s = np.asarray(s, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    r = spec.sample(s, a, rng)
    s2 = _categorical(mdp.transition[s, a], rng)
    a2 = _categorical(np.asarray(policy)[s2], rng)
    return r, s2, a2


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    disc = gamma ** np.arange(rewards.shape[-1])
    return rewards @ disc
