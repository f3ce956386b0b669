"""Compare a learned reward model and policy with the ground truth."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import CVaR, Distortion, drm, empirical_quantiles, fsd_violation_quantile, wasserstein1
from .engine import sample_returns_offline
from .mdp import DemoSet, TabularMdp, TrueRewardSpec, discounted_returns, rollout_batch
from .policy import RiskPolicy
from .reward import RewardModel

log = logging.getLogger(__name__)

__all__ = ["pearson", "EvalReport", "PAIR_COLUMNS", "evaluate", "policy_returns", "demo_returns"]

PAIR_COLUMNS = ("s", "a", "learned_mean", "learned_var", "true_mean", "true_var", "w1", "demo_count")


def pearson(x, y) -> float:
    """Sample Pearson correlation; NaN when either vector is constant."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom == 0:
        return float("nan")
    return float(np.clip(np.dot(dx, dy) / denom, -1.0, 1.0))


@dataclass
class EvalReport:
    pairs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for row in self.pairs:
            w.writerow([row["s"], row["a"]] + [repr(float(row[k])) for k in PAIR_COLUMNS[2:7]] + [row["demo_count"]])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("metric", "value"))
        for k, v in self.summary.items():
            w.writerow((k, repr(float(v)) if isinstance(v, (float, np.floating)) else v))
        return buf.getvalue()


def policy_returns(mdp, policy, spec, horizon, n_rollouts, rng) -> np.ndarray:
    probs = policy.probs if isinstance(policy, RiskPolicy) else np.asarray(policy)
    _, _, rewards = rollout_batch(mdp, probs, spec, horizon, n_rollouts, rng)
    return discounted_returns(rewards, mdp.gamma)


def demo_returns(demos: DemoSet, gamma: float, horizon: int) -> Optional[np.ndarray]:
    """Discounted sums of the recorded signals, or None if any trajectory lacks them."""
    if not demos.has_signals:
        return None
    out = []
    for tr in demos.trajectories:
        sig = tr.signals[:horizon]
        out.append(float(sig @ gamma ** np.arange(sig.size)))
    return np.array(out)


def _signal_moments(demos: DemoSet, shape) -> tuple[dict, dict]:
    samples: dict = {}
    for tr in demos.trajectories:
        for s, a, x in zip(tr.states, tr.actions, tr.signals):
            samples.setdefault((int(s), int(a)), []).append(float(x))
    return samples, {k: (np.mean(v), np.var(v)) for k, v in samples.items()}


def evaluate(
    reward_model: RewardModel,
    policy: RiskPolicy,
    mdp: TabularMdp,
    true_spec: Optional[TrueRewardSpec],
    demos: Optional[DemoSet] = None,
    *,
    distortion: Distortion = CVaR(0.05),
    horizon: int = 40,
    n_rollouts: int = 10_000,
    n_atoms: int = 200,
    n_reward_samples: int = 4000,
    seed: int = 0,
) -> EvalReport:
    """Per-(s, a) reward comparison plus return-level metrics.

    Pairs are compared with the true laws, or with the recorded demo signals
    when the demos carry them (then only demonstrated pairs are reported).
    When demos are given, the correlation and distances cover the
    demonstrated pairs only; with no overlap a warning is logged and all
    pairs are used.
    """
    if reward_model.shape != mdp.shape or policy.shape != mdp.shape:
        raise ValueError("reward model, policy and MDP disagree on (n_states, n_actions)")
    if true_spec is None and (demos is None or not demos.has_signals):
        raise ValueError("need a true reward spec or demos with recorded signals")
    rng = np.random.default_rng(seed)
    n_s, n_a = mdp.shape
    counts = demos.state_action_counts() if demos is not None else np.zeros(mdp.shape, dtype=np.int64)
    use_signals = demos is not None and demos.has_signals
    if use_signals:
        signal_samples, signal_moments = _signal_moments(demos, mdp.shape)
    mu, var = reward_model.moments()

    if demos is not None and counts.sum() > 0:
        report_pairs = [(s, a) for s in range(n_s) for a in range(n_a) if counts[s, a] > 0]
    else:
        if demos is not None:
            log.warning("demonstrations cover no (s, a) pair; reporting every pair")
        report_pairs = [(s, a) for s in range(n_s) for a in range(n_a)]

    rows = []
    for s, a in report_pairs:
        eps = rng.standard_normal((2, n_reward_samples))
        learned, _ = reward_model.sample(
            np.full(n_reward_samples, s), np.full(n_reward_samples, a), eps[0], eps[1], with_grad=False
        )
        if use_signals:
            ref = np.asarray(signal_samples[(s, a)])
            t_mean, t_var = signal_moments[(s, a)]
        else:
            ref = true_spec.sample(np.full(n_reward_samples, s), np.full(n_reward_samples, a), rng)
            t_mean, t_var = true_spec.mean_table()[s, a], true_spec.var_table()[s, a]
        w1 = wasserstein1(empirical_quantiles(learned, n_atoms), empirical_quantiles(ref, n_atoms))
        rows.append(
            dict(s=s, a=a, learned_mean=mu[s, a], learned_var=var[s, a], true_mean=t_mean, true_var=t_var,
                 w1=w1, demo_count=int(counts[s, a]))
        )

    summary: dict = {"n_pairs": len(rows)}
    lm = np.array([r["learned_mean"] for r in rows])
    tm = np.array([r["true_mean"] for r in rows])
    summary["pearson_mean"] = pearson(lm, tm) if len(rows) >= 2 else float("nan")
    summary["mean_w1"] = float(np.mean([r["w1"] for r in rows]))

    if true_spec is not None:
        z_pi = policy_returns(mdp, policy, true_spec, horizon, n_rollouts, rng)
        summary["policy_return_mean"] = float(z_pi.mean())
        summary["policy_return_drm"] = drm(np.sort(z_pi), distortion)
    else:
        z_pi = None
    if demos is not None:
        z_e = demo_returns(demos, mdp.gamma, horizon)
        if z_e is not None and z_pi is not None:
            # true returns on both sides, resampled to a common atom count
            summary["fsd_violation"] = fsd_violation_quantile(
                empirical_quantiles(z_pi, n_atoms), empirical_quantiles(z_e, n_atoms)
            )
        else:
            smp = sample_returns_offline(demos, policy, reward_model, mdp.gamma, horizon, n_rollouts, rng)
            summary["fsd_violation"] = fsd_violation_quantile(
                empirical_quantiles(smp.z_pi, n_atoms), empirical_quantiles(smp.z_e, n_atoms)
            )
        summary["demo_return_source"] = "signals" if z_e is not None else "learned_reward"
    return EvalReport(rows, summary)
