"""Distributional inverse reinforcement learning for tabular MDPs.

Learns a per-(state, action) reward distribution from demonstrations by
penalising first-order stochastic dominance violations between the
expert's and the current policy's returns, with a quantile critic and a
risk-aware Boltzmann policy.
"""

__version__ = "0.1.0"

from .critic import MeanCritic, QuantileCritic, qr_td_update
from .demos import load_demos, save_demos
from .dist import (
    CVaR,
    Neutral,
    QuantileDistribution,
    Wang,
    drm,
    empirical_quantiles,
    fsd_violation_cdf,
    fsd_violation_quantile,
    parse_distortion,
    wasserstein1,
)
from .engine import IrlConfig, TrainLog, reward_loss_fsd, reward_loss_mean, sample_returns_offline, train
from .errors import ConfigurationError, DemoParseError, TrainingError
from .evaluate import evaluate, pearson
from .expert import ExpertConfig, generate_demos, train_expert
from .mdp import (
    BernoulliPenalty,
    DemoSet,
    Deterministic,
    Gaussian,
    SkewNormal,
    TabularMdp,
    Trajectory,
    TrueRewardSpec,
    build_gridworld,
    occupancy_measure,
    rollout,
)
from .policy import RiskPolicy, policy_from_critic
from .reward import RewardKind, RewardModel

__all__ = [
    "BernoulliPenalty",
    "CVaR",
    "ConfigurationError",
    "DemoParseError",
    "DemoSet",
    "Deterministic",
    "ExpertConfig",
    "Gaussian",
    "IrlConfig",
    "MeanCritic",
    "Neutral",
    "QuantileCritic",
    "QuantileDistribution",
    "RewardKind",
    "RewardModel",
    "RiskPolicy",
    "SkewNormal",
    "TabularMdp",
    "TrainLog",
    "TrainingError",
    "Trajectory",
    "TrueRewardSpec",
    "Wang",
    "build_gridworld",
    "drm",
    "empirical_quantiles",
    "evaluate",
    "fsd_violation_cdf",
    "fsd_violation_quantile",
    "generate_demos",
    "load_demos",
    "occupancy_measure",
    "parse_distortion",
    "pearson",
    "policy_from_critic",
    "qr_td_update",
    "reward_loss_fsd",
    "reward_loss_mean",
    "rollout",
    "sample_returns_offline",
    "save_demos",
    "train",
    "train_expert",
    "wasserstein1",
]
