"""Offline distributional IRL training loop and its loss functions.

Each iteration samples expert steps, evaluates the current policy offline
on the demonstrated states, takes critic steps, rebuilds the softmax
policy from the critic's risk measure, and moves the reward parameters
down the FSD (or mean-matching) loss plus a KL regulariser.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .critic import MeanCritic, QuantileCritic
from .dist import Distortion, distortion_to_str, drm, parse_distortion
from .errors import ConfigurationError, TrainingError
from .mdp import DemoSet, _categorical
from .optim import make_optimizer
from .policy import RiskPolicy, policy_from_critic
from .reward import RewardKind, RewardModel

log = logging.getLogger(__name__)

__all__ = [
    "IrlConfig",
    "TrainLog",
    "TrainResult",
    "DemoArrays",
    "ReturnSamples",
    "sample_returns_offline",
    "fsd_data_term",
    "mean_data_term",
    "reward_loss_fsd",
    "reward_loss_mean",
    "kl_term",
    "train",
    "ABLATIONS",
]

CRITIC_KINDS = ("quantile", "td")
REWARD_LOSSES = ("fsd", "mean")

# name -> (reward kind override, critic kind, reward loss); "Dis" keeps the base kind
ABLATIONS = {
    "Dis-Qt-FSD": (None, "quantile", "fsd"),
    "Dis-Qt-Mean": (None, "quantile", "mean"),
    "Det-Qt-Mean": ("deterministic", "quantile", "mean"),
    "Dis-TD-FSD": (None, "td", "fsd"),
    "Dis-TD-Mean": (None, "td", "mean"),
    "Det-TD-Mean": ("deterministic", "td", "mean"),
}


@dataclass
class IrlConfig:
    reward_kind: str = "skew_normal"
    critic_kind: str = "quantile"
    reward_loss: str = "fsd"
    distortion: str = "cvar:0.05"
    beta: float = 0.1
    critic_step_size: float = 3e-4
    policy_step_size: float = 3e-4
    reward_step_size: float = 3e-4
    kl_weight: float = 0.01
    batch_size: int = 512
    iterations: int = 5000
    return_sample_count: int = 200
    horizon: int = 40
    n_quantiles: int = 200
    kappa: float = 1.0
    gamma: float = 0.75
    seed: int = 0
    critic_steps_per_iter: int = 5
    target_period: int = 0
    reward_range: Sequence[float] = (-5.0, 5.0)
    init_loc: Optional[float] = None
    init_scale: float = 1.0
    critic_init: float = 0.0
    optimizer: str = "adam"
    kl_samples: int = 16
    common_noise: bool = False

    def __post_init__(self) -> None:
        self.reward_kind = RewardKind.parse(self.reward_kind).value
        self.critic_kind = str(self.critic_kind).lower()
        self.reward_loss = str(self.reward_loss).lower()
        if self.critic_kind in ("qt", "qr"):
            self.critic_kind = "quantile"
        if self.critic_kind not in CRITIC_KINDS:
            raise ConfigurationError(f"critic_kind must be one of {CRITIC_KINDS}")
        if self.reward_loss not in REWARD_LOSSES:
            raise ConfigurationError(f"reward_loss must be one of {REWARD_LOSSES}")
        try:
            parse_distortion(self.distortion)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        self.distortion = distortion_to_str(parse_distortion(self.distortion))
        for name in ("critic_step_size", "policy_step_size", "reward_step_size", "beta", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.return_sample_count < 2:
            raise ConfigurationError("return_sample_count must be >= 2")
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.batch_size < 1 or self.horizon < 1 or self.n_quantiles < 1:
            raise ConfigurationError("batch_size, horizon and n_quantiles must be >= 1")
        if self.kl_weight < 0:
            raise ConfigurationError("kl_weight must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.critic_steps_per_iter < 1 or self.kl_samples < 1 or self.target_period < 0:
            raise ConfigurationError("critic_steps_per_iter and kl_samples must be >= 1, target_period >= 0")
        self.reward_range = tuple(float(x) for x in self.reward_range)
        if len(self.reward_range) != 2 or not self.reward_range[0] < self.reward_range[1]:
            raise ConfigurationError("reward_range must be [r_min, r_max] with r_min < r_max")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError("optimizer must be 'adam' or 'sgd'")

    @classmethod
    def from_dict(cls, data: dict) -> "IrlConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown IRL config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["reward_range"] = list(self.reward_range)
        return out

    def replace(self, **changes) -> "IrlConfig":
        data = self.to_dict()
        data.update(changes)
        return IrlConfig.from_dict(data)

    @property
    def risk(self) -> Distortion:
        return parse_distortion(self.distortion)


# -- demonstrations as padded arrays -------------------------------------------


class DemoArrays:
    """Padded (trajectory, t) views of a DemoSet plus its one-step transitions."""

    def __init__(self, demos: DemoSet, horizon: Optional[int] = None):
        if len(demos) == 0:
            raise ValueError("demonstration set is empty")
        lengths = np.array([len(t) for t in demos.trajectories])
        width = int(lengths.max()) if horizon is None else int(min(horizon, lengths.max()))
        n = len(demos)
        self.states = np.zeros((n, width), dtype=np.int64)
        self.actions = np.zeros((n, width), dtype=np.int64)
        self.mask = np.zeros((n, width), dtype=bool)
        for i, tr in enumerate(demos.trajectories):
            k = min(len(tr), width)
            self.states[i, :k] = tr.states[:k]
            self.actions[i, :k] = tr.actions[:k]
            self.mask[i, :k] = True
        s, a, s2 = [], [], []
        for tr in demos.trajectories:
            s.append(tr.states[:-1])
            a.append(tr.actions[:-1])
            s2.append(tr.states[1:])
        self.tr_s = np.concatenate(s)
        self.tr_a = np.concatenate(a)
        self.tr_s_next = np.concatenate(s2)
        self.n_states = demos.n_states
        self.n_actions = demos.n_actions

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def n_transitions(self) -> int:
        return int(self.tr_s.size)


# -- offline return sampling ----------------------------------------------------


@dataclass
class ReturnSamples:
    """Paired expert/policy return samples with everything needed for pathwise gradients."""

    z_pi: np.ndarray
    z_e: np.ndarray
    states: np.ndarray
    a_e: np.ndarray
    a_pi: np.ndarray
    weight: np.ndarray  # gamma**t times the validity mask, (M, H)
    eps_e: np.ndarray  # (2, M, H)
    eps_pi: np.ndarray
    grad_e: object = None
    grad_pi: object = None

    def __post_init__(self) -> None:
        if np.shape(self.z_pi) != np.shape(self.z_e):
            raise ValueError(
                f"policy and expert return sample counts differ ({np.size(self.z_pi)} vs {np.size(self.z_e)})"
            )

    def __iter__(self):
        return iter((self.z_pi, self.z_e))

    def recompute(self, model: RewardModel) -> "ReturnSamples":
        """Same states, actions and noise, rewards from ``model``."""
        return _evaluate_paths(model, self.states, self.a_e, self.a_pi, self.weight, self.eps_e, self.eps_pi)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct (s, a) pairs touched by either side."""
        m = self.weight != 0
        s = np.concatenate([self.states[m], self.states[m]])
        a = np.concatenate([self.a_e[m], self.a_pi[m]])
        if s.size == 0:
            return s, a
        n_actions = int(max(self.a_e.max(), self.a_pi.max())) + 1
        uniq = np.unique(s * n_actions + a)
        return np.divmod(uniq, n_actions)


def _evaluate_paths(model, states, a_e, a_pi, weight, eps_e, eps_pi) -> ReturnSamples:
    r_e, g_e = model.sample(states, a_e, eps_e[0], eps_e[1])
    r_pi, g_pi = model.sample(states, a_pi, eps_pi[0], eps_pi[1])
    z_e = (r_e * weight).sum(axis=1)
    z_pi = (r_pi * weight).sum(axis=1)
    return ReturnSamples(z_pi, z_e, states, a_e, a_pi, weight, eps_e, eps_pi, g_e, g_pi)


def sample_returns_offline(
    demos: Union[DemoSet, DemoArrays],
    policy: RiskPolicy,
    reward_model: RewardModel,
    gamma: float,
    horizon: int,
    n_samples: int,
    rng: np.random.Generator,
    common_noise: bool = False,
) -> ReturnSamples:
    """M expert/policy return pairs over demonstrated state sequences.

    Each sample picks a trajectory uniformly with replacement and sums
    discounted rewards from t=0 up to ``horizon`` steps. The expert side
    uses the recorded actions; the policy side draws its own action at
    every recorded state.
    """
    arr = demos if isinstance(demos, DemoArrays) else DemoArrays(demos)
    if n_samples < 1:
        raise ValueError("need at least one return sample")
    width = min(horizon, arr.states.shape[1])
    pick = rng.integers(0, arr.n_trajectories, size=n_samples)
    states = arr.states[pick, :width]
    a_e = arr.actions[pick, :width]
    mask = arr.mask[pick, :width]
    a_pi = _categorical(policy.probs[states], rng)
    weight = (gamma ** np.arange(width))[None, :] * mask
    eps_e = rng.standard_normal((2, n_samples, width))
    eps_pi = eps_e.copy() if common_noise else rng.standard_normal((2, n_samples, width))
    return _evaluate_paths(reward_model, states, a_e, a_pi, weight, eps_e, eps_pi)


# -- reward losses -------------------------------------------------------------


def fsd_data_term(z_pi, z_e) -> tuple[float, np.ndarray, np.ndarray]:
    """``(1/M) sum_i [sort(z_pi)_i - sort(z_e)_i]_+`` and per-sample coefficients.

    The coefficient of a sample is the derivative of the term with respect
    to that sample's value (rank-by-rank, ties broken by a stable sort).
    """
    z_pi = np.asarray(z_pi, dtype=float)
    z_e = np.asarray(z_e, dtype=float)
    if z_pi.shape != z_e.shape or z_pi.ndim != 1:
        raise ValueError(f"need equal-length 1-d sample sets, got {z_pi.shape} and {z_e.shape}")
    m = z_pi.size
    op = np.argsort(z_pi, kind="stable")
    oe = np.argsort(z_e, kind="stable")
    gap = z_pi[op] - z_e[oe]
    viol = gap > 0
    c_pi = np.zeros(m)
    c_e = np.zeros(m)
    c_pi[op[viol]] = 1.0 / m
    c_e[oe[viol]] = -1.0 / m
    return float(np.sum(gap[viol]) / m), c_pi, c_e


def mean_data_term(z_pi, z_e) -> tuple[float, np.ndarray, np.ndarray]:
    z_pi = np.asarray(z_pi, dtype=float)
    z_e = np.asarray(z_e, dtype=float)
    if z_pi.shape != z_e.shape or z_pi.ndim != 1:
        raise ValueError(f"need equal-length 1-d sample sets, got {z_pi.shape} and {z_e.shape}")
    m = z_pi.size
    return float(z_pi.mean() - z_e.mean()), np.full(m, 1.0 / m), np.full(m, -1.0 / m)


def _scatter(model: RewardModel, samples: ReturnSamples, c_pi, c_e) -> np.ndarray:
    grad = np.zeros((3,) + model.shape)
    for coef, acts, g in ((c_pi, samples.a_pi, samples.grad_pi), (c_e, samples.a_e, samples.grad_e)):
        w = coef[:, None] * samples.weight
        idx = (samples.states, acts)
        np.add.at(grad[0], idx, w * g.d_raw_loc)
        np.add.at(grad[1], idx, w * g.d_raw_scale)
        np.add.at(grad[2], idx, w * g.d_raw_alpha)
    return grad


def kl_term(model: RewardModel, s, a, noise=None) -> tuple[float, np.ndarray]:
    """Mean KL to the standard-normal prior over the given pairs, and its gradient."""
    s = np.asarray(s, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    grad = np.zeros((3,) + model.shape)
    if s.size == 0:
        return 0.0, grad
    if model.kind == RewardKind.SKEW_NORMAL:
        if noise is None:
            raise ValueError("skew-normal KL needs Monte-Carlo noise")
        vals, g = model.kl(s, a, noise[0], noise[1])
    else:
        vals, g = model.kl(s, a)
    k = s.size
    np.add.at(grad[0], (s, a), g.d_raw_loc / k)
    np.add.at(grad[1], (s, a), g.d_raw_scale / k)
    np.add.at(grad[2], (s, a), g.d_raw_alpha / k)
    return float(vals.mean()), grad


def _kl_noise(model: RewardModel, n_pairs: int, n_mc: int, rng: Optional[np.random.Generator]):
    if model.kind != RewardKind.SKEW_NORMAL:
        return None
    if rng is None:
        raise ValueError("skew-normal KL needs an rng or explicit noise")
    return rng.standard_normal((2, n_pairs, n_mc))


def _reward_loss(data_fn, samples, model, kl_weight, kl_noise, rng, kl_samples):
    data, c_pi, c_e = data_fn(samples.z_pi, samples.z_e)
    grad = _scatter(model, samples, c_pi, c_e)
    s, a = samples.pairs()
    if kl_noise is None:
        kl_noise = _kl_noise(model, s.size, kl_samples, rng)
    kl, kl_grad = kl_term(model, s, a, kl_noise)
    grad += kl_weight * kl_grad
    grad *= model.trainable_mask()[:, None, None]
    return data + kl_weight * kl, grad, {"data": data, "kl": kl}


def reward_loss_fsd(samples: ReturnSamples, model: RewardModel, kl_weight: float, kl_noise=None, rng=None, kl_samples: int = 16):
    """FSD energy plus weighted KL; returns ``(loss, grad (3, S, A), parts)``."""
    return _reward_loss(fsd_data_term, samples, model, kl_weight, kl_noise, rng, kl_samples)


def reward_loss_mean(samples: ReturnSamples, model: RewardModel, kl_weight: float, kl_noise=None, rng=None, kl_samples: int = 16):
    """Mean-matching gap plus weighted KL; returns ``(loss, grad (3, S, A), parts)``."""
    return _reward_loss(mean_data_term, samples, model, kl_weight, kl_noise, rng, kl_samples)


# -- training ------------------------------------------------------------------

LOG_COLUMNS = (
    "iteration",
    "fsd_violation",
    "mean_gap",
    "kl_term",
    "reward_loss",
    "critic_loss",
    "policy_entropy",
    "policy_return_drm",
)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def append(self, **rec) -> None:
        self.records.append({k: rec[k] for k in LOG_COLUMNS})

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow([r["iteration"]] + [repr(float(r[k])) for k in LOG_COLUMNS[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != LOG_COLUMNS:
            raise ValueError(f"train log header must be {','.join(LOG_COLUMNS)}")
        out = cls()
        for row in rows[1:]:
            rec = {"iteration": int(row[0])}
            rec.update({k: float(v) for k, v in zip(LOG_COLUMNS[1:], row[1:])})
            out.records.append(rec)
        return out


@dataclass
class TrainResult:
    reward_model: RewardModel
    policy: RiskPolicy
    critic: Union[QuantileCritic, MeanCritic]
    log: TrainLog


def initial_models(mdp_shape, config: IrlConfig):
    n_states, n_actions = mdp_shape
    model = RewardModel.initial(
        config.reward_kind, n_states, n_actions, config.reward_range, config.init_loc, config.init_scale
    )
    if config.critic_kind == "quantile":
        critic = QuantileCritic.constant(n_states, n_actions, config.n_quantiles, config.critic_init)
    else:
        critic = MeanCritic.constant(n_states, n_actions, config.critic_init)
    policy = policy_from_critic(critic, config.risk, config.beta)
    return model, critic, policy


def _check_finite(value: float, iteration: int, term: str) -> None:
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {term} at iteration {iteration}")


def train(
    mdp_shape,
    demos: DemoSet,
    config: IrlConfig,
    callback: Optional[Callable[[int, TrainResult], None]] = None,
) -> TrainResult:
    """Run ``config.iterations`` rounds of critic, policy and reward updates."""
    n_states, n_actions = mdp_shape
    if (demos.n_states, demos.n_actions) != (n_states, n_actions):
        raise ValueError(
            f"demos are for ({demos.n_states}, {demos.n_actions}) but the MDP is ({n_states}, {n_actions})"
        )
    demos = demos.without_signals()
    arr = DemoArrays(demos, config.horizon)
    rng = np.random.default_rng(config.seed)
    risk = config.risk
    model, critic, policy = initial_models(mdp_shape, config)
    opt = make_optimizer(config.optimizer, (3, n_states, n_actions), config.reward_step_size)
    loss_fn = reward_loss_fsd if config.reward_loss == "fsd" else reward_loss_mean
    target = critic.copy() if config.target_period else None
    trainlog = TrainLog()
    critic_updates = 0

    for k in range(config.iterations):
        # (1) mini-batch of expert transitions
        if arr.n_transitions:
            idx = rng.integers(0, arr.n_transitions, size=config.batch_size)
            bs, ba, bs2 = arr.tr_s[idx], arr.tr_a[idx], arr.tr_s_next[idx]
        # (2) offline return samples under the current policy and reward
        samples = sample_returns_offline(
            arr, policy, model, config.gamma, config.horizon, config.return_sample_count, rng, config.common_noise
        )
        # (3) critic steps on (s, a, r ~ q, s', a' ~ pi)
        critic_loss = 0.0
        if arr.n_transitions:
            for _ in range(config.critic_steps_per_iter):
                eps = rng.standard_normal((2, bs.size))
                r, _ = model.sample(bs, ba, eps[0], eps[1], with_grad=False)
                a2 = _categorical(policy.probs[bs2], rng)
                critic_loss = critic.update(
                    bs, ba, r, bs2, a2, config.gamma, config.kappa, config.critic_step_size, target=target
                )
                critic_updates += 1
                if target is not None and critic_updates % config.target_period == 0:
                    target = critic.copy()
        _check_finite(critic_loss, k, "critic loss")
        # (4) policy: Boltzmann over the critic's risk measure
        policy = policy_from_critic(critic, risk, config.beta)
        # (5) reward step
        loss, grad, parts = loss_fn(samples, model, config.kl_weight, rng=rng, kl_samples=config.kl_samples)
        _check_finite(loss, k, "reward loss")
        _check_finite(parts["kl"], k, "KL term")
        model.set_params(opt.step(model.params(), grad))

        fsd = parts["data"] if config.reward_loss == "fsd" else fsd_data_term(samples.z_pi, samples.z_e)[0]
        gap = parts["data"] if config.reward_loss == "mean" else float(samples.z_pi.mean() - samples.z_e.mean())
        visited = np.unique(arr.states[arr.mask])
        trainlog.append(
            iteration=k,
            fsd_violation=fsd,
            mean_gap=gap,
            kl_term=parts["kl"],
            reward_loss=loss,
            critic_loss=critic_loss,
            policy_entropy=float(np.mean(policy.entropy()[visited])),
            policy_return_drm=drm(samples.z_pi, risk),
        )
        if callback is not None:
            callback(k, TrainResult(model, policy, critic, trainlog))
    return TrainResult(model, policy, critic, trainlog)
