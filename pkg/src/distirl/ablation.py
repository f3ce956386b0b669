"""The six-configuration ablation grid with min-max scaled true-return scores."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dist import drm, parse_distortion
from .engine import ABLATIONS, IrlConfig, train
from .evaluate import policy_returns
from .mdp import DemoSet, TabularMdp, TrueRewardSpec

__all__ = ["ABLATION_COLUMNS", "AblationRow", "ablation_config", "min_max_scale", "run_ablation", "rows_to_csv", "rows_from_csv"]

ABLATION_COLUMNS = ("config", "seed", "return_mean", "return_drm", "score", "scaled")


@dataclass
class AblationRow:
    config: str
    seed: int
    return_mean: float
    return_drm: float
    score: float
    scaled: float = float("nan")


def ablation_config(base: IrlConfig, name: str, seed: Optional[int] = None) -> IrlConfig:
    """``base`` with the reward kind, critic and loss of the named configuration."""
    try:
        kind, critic, loss = ABLATIONS[name]
    except KeyError:
        raise ValueError(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}") from None
    changes = dict(critic_kind=critic, reward_loss=loss)
    if kind is not None:
        changes["reward_kind"] = kind
    if seed is not None:
        changes["seed"] = seed
    return base.replace(**changes)


def min_max_scale(values: Sequence[float]) -> np.ndarray:
    """Map to [0, 1] with the best at 1; all-equal inputs map to 1."""
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.ones_like(v)
    return (v - lo) / (hi - lo)


def run_ablation(
    mdp: TabularMdp,
    spec: TrueRewardSpec,
    demos: Union[DemoSet, Callable[[int], DemoSet]],
    base: IrlConfig,
    seeds: Sequence[int],
    configs: Sequence[str] = tuple(ABLATIONS),
    score: str = "mean",
    eval_rollouts: int = 10_000,
    eval_horizon: Optional[int] = None,
    progress: Optional[Callable[[str, int], None]] = None,
) -> list[AblationRow]:
    """Train every configuration on every seed and score its policy on the true reward.

    ``demos`` is either one fixed set or a function from seed to demos.
    ``score`` picks the scaled quantity: ``"mean"`` or ``"drm"`` (the base
    config's distortion). Scaling is min-max across configurations within
    each seed.
    """
    if score not in ("mean", "drm"):
        raise ValueError("score must be 'mean' or 'drm'")
    risk = parse_distortion(base.distortion)
    horizon = eval_horizon or base.horizon
    rows: list[AblationRow] = []
    for seed in seeds:
        data = demos(seed) if callable(demos) else demos
        batch = []
        for name in configs:
            if progress is not None:
                progress(name, seed)
            cfg = ablation_config(base, name, seed)
            result = train(mdp.shape, data, cfg)
            rng = np.random.default_rng([int(seed), 7919])
            z = np.sort(policy_returns(mdp, result.policy, spec, horizon, eval_rollouts, rng))
            mean, risk_value = float(z.mean()), drm(z, risk)
            batch.append(AblationRow(name, int(seed), mean, risk_value, mean if score == "mean" else risk_value))
        for row, scaled in zip(batch, min_max_scale([r.score for r in batch])):
            row.scaled = float(scaled)
        rows.extend(batch)
    return rows


def rows_to_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_COLUMNS)
    for r in rows:
        w.writerow([r.config, r.seed, repr(r.return_mean), repr(r.return_drm), repr(r.score), repr(r.scaled)])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[AblationRow]:
    data = list(csv.reader(io.StringIO(text)))
    if not data or tuple(data[0]) != ABLATION_COLUMNS:
        raise ValueError(f"ablation table must start with header {','.join(ABLATION_COLUMNS)}")
    return [AblationRow(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])) for r in data[1:]]
