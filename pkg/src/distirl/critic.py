"""Tabular return critics: a quantile table trained by quantile-regression TD,
and a scalar SARSA-style table for the TD ablations."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dist import Distortion, QuantileDistribution, drm, drm_weights, quantile_huber
from .mdp import check_policy, sample_transitions

__all__ = [
    "QuantileCritic",
    "MeanCritic",
    "fit_policy_critic",
    "midpoint_taus",
    "qr_gradient",
    "qr_gradient_pooled",
    "qr_gradient_naive",
    "qr_td_update",
    "mean_td_update",
    "critic_drm",
]


def midpoint_taus(n: int) -> np.ndarray:
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def _pooled_sums(theta, values, groups, n_groups, kappa):
    """Counts and prefix sums of each row's pooled targets around theta and theta +/- kappa.

    Targets are sorted once, keyed by group, by shifting each group into its
    own disjoint band; the shift only enters comparisons, never the sums.
    """
    lo = min(theta.min(), values.min()) - kappa
    hi = max(theta.max(), values.max()) + kappa
    width = (hi - lo) + 1.0
    keyed = (values - lo) + groups * width
    order = np.argsort(keyed)
    keyed = keyed[order]
    sorted_vals = values[order]
    start = np.searchsorted(groups[order], np.arange(n_groups + 1), side="left")
    csum = np.zeros(values.size + 1)
    np.cumsum(sorted_vals, out=csum[1:])
    qsum = np.zeros(values.size + 1)
    np.cumsum(sorted_vals * sorted_vals, out=qsum[1:])
    off = (theta - lo) + (np.arange(n_groups) * width)[:, None]
    idx = [
        np.searchsorted(keyed, off - kappa, side="left"),
        np.searchsorted(keyed, off, side="left"),
        np.searchsorted(keyed, off + kappa, side="right"),
    ]
    first = start[:-1, None]
    last = start[1:, None]
    idx = [np.clip(i, first, last) for i in idx]
    idx[1] = np.maximum(idx[1], idx[0])
    idx[2] = np.maximum(idx[2], idx[1])
    counts = [i - first for i in idx]
    sums = [csum[i] - csum[first] for i in idx]
    squares = [qsum[i] - qsum[first] for i in idx]
    m = (last - first).astype(float)
    total = csum[last] - csum[first]
    return counts, sums, squares, m, total


def qr_gradient_pooled(theta, values, groups, kappa: float, with_loss: bool = False):
    """Summed quantile-Huber ascent direction for rows regressed on pooled targets.

    Row ``g`` of ``theta`` (shape (G, N)) is compared with every target whose
    ``groups`` entry equals ``g``; the result equals the sum of per-target
    gradients, computed with one sort and prefix sums. Also returns each
    row's summed loss ``(1/N) sum_ij rho(delta_ij)`` if asked.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    groups = np.asarray(groups, dtype=np.int64).ravel()
    n_groups, n = theta.shape
    tau = midpoint_taus(n)[None, :]
    (n1, n2, n3), (s1, s2, s3), (q1, q2, q3), m, total = _pooled_sums(theta, values, groups, n_groups, kappa)
    below = -kappa * n1 + (s2 - s1) - theta * (n2 - n1)
    above = (s3 - s2) - theta * (n3 - n2) + kappa * (m - n3)
    g = (1.0 - tau) * below + tau * above
    if not with_loss:
        return g
    half_k2 = 0.5 * kappa * kappa
    la = kappa * (n1 * theta - s1) - n1 * half_k2
    lb = 0.5 * ((q2 - q1) - 2.0 * theta * (s2 - s1) + (n2 - n1) * theta * theta)
    lc = 0.5 * ((q3 - q2) - 2.0 * theta * (s3 - s2) + (n3 - n2) * theta * theta)
    ld = kappa * ((total - s3) - (m - n3) * theta) - (m - n3) * half_k2
    loss = ((1.0 - tau) * (la + lb) + tau * (lc + ld)).sum(axis=1) / n
    return g, loss


def qr_gradient(theta: np.ndarray, targets: np.ndarray, kappa: float, with_loss: bool = False):
    """Ascent direction ``g`` with ``dL/dtheta_i = -g_i / N`` for each row.

    ``theta`` has shape (B, N) and ``targets`` (B, N'); row b is regressed
    on targets row b. O(B N log N') via prefix sums over sorted targets.
    Also returns the per-row loss ``(1/N) sum_ij rho(delta_ij)`` if asked.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    b, m = targets.shape
    groups = np.repeat(np.arange(b), m)
    return qr_gradient_pooled(theta, targets.ravel(), groups, kappa, with_loss)


def qr_gradient_naive(theta: np.ndarray, targets: np.ndarray, kappa: float):
    """Reference O(N^2) version of :func:`qr_gradient` built from the pairwise matrix."""
    theta = np.atleast_2d(theta)
    targets = np.atleast_2d(targets)
    n = theta.shape[1]
    tau = midpoint_taus(n)[None, :, None]
    delta = targets[:, None, :] - theta[:, :, None]
    w = np.abs(tau - (delta < 0))
    g = (w * np.clip(delta, -kappa, kappa)).sum(axis=2)
    loss = quantile_huber(delta, tau, kappa).sum(axis=(1, 2)) / n
    return g, loss


class QuantileCritic:
    """``theta[s, a]`` holds N sorted atoms of the return distribution Z(s, a)."""

    def __init__(self, theta: np.ndarray):
        theta = np.array(theta, dtype=float)
        if theta.ndim != 3:
            raise ValueError("theta must have shape (S, A, N)")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        self.theta = np.sort(theta, axis=-1)

    @classmethod
    def constant(cls, n_states: int, n_actions: int, n_quantiles: int = 200, value: float = 0.0):
        return cls(np.full((n_states, n_actions, n_quantiles), float(value)))

    @property
    def n_quantiles(self) -> int:
        return self.theta.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta.shape[:2]

    def copy(self) -> "QuantileCritic":
        return QuantileCritic(self.theta)

    def distribution(self, s: int, a: int) -> QuantileDistribution:
        return QuantileDistribution(self.theta[s, a])

    def drm_table(self, d: Distortion) -> np.ndarray:
        return self.theta @ drm_weights(d, self.n_quantiles)

    def mean_table(self) -> np.ndarray:
        return self.theta.mean(axis=-1)

    def update(
        self,
        s,
        a,
        r,
        s_next,
        a_next,
        gamma: float,
        kappa: float,
        step_size: float,
        target: Optional["QuantileCritic"] = None,
        done=None,
    ) -> float:
        """One summed-gradient step over a batch of transitions; returns the mean loss.

        Targets ``r + gamma * theta[s', a']`` come from ``target`` (default:
        this table) and are held fixed. ``done`` marks transitions without
        a successor, whose target is the reward alone.
        """
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        src = self if target is None else target
        boot = gamma * src.theta[np.atleast_1d(s_next), np.atleast_1d(a_next)]
        if done is not None:
            boot = np.where(np.atleast_1d(done)[:, None], 0.0, boot)
        y = r[:, None] + boot
        flat = s * self.theta.shape[1] + a
        pairs, inverse = np.unique(flat, return_inverse=True)
        ps, pa = np.divmod(pairs, self.theta.shape[1])
        groups = np.repeat(inverse, y.shape[1])
        g, loss = qr_gradient_pooled(self.theta[ps, pa], y.ravel(), groups, kappa, with_loss=True)
        self.theta[ps, pa] += step_size * g / self.n_quantiles
        self.theta.sort(axis=-1)
        return float(loss.sum() / s.size)


class MeanCritic:
    """Scalar action values; its distortion risk measure is the value itself."""

    def __init__(self, q: np.ndarray):
        q = np.array(q, dtype=float)
        if q.ndim != 2 or not np.all(np.isfinite(q)):
            raise ValueError("q must be a finite (S, A) table")
        self.q = q

    @classmethod
    def constant(cls, n_states: int, n_actions: int, value: float = 0.0):
        return cls(np.full((n_states, n_actions), float(value)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.q.shape

    def copy(self) -> "MeanCritic":
        return MeanCritic(self.q)

    def drm_table(self, d: Distortion) -> np.ndarray:
        return self.q.copy()

    def mean_table(self) -> np.ndarray:
        return self.q.copy()

    def update(self, s, a, r, s_next, a_next, gamma, kappa=None, step_size=1.0, target=None, done=None) -> float:
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        a = np.atleast_1d(np.asarray(a, dtype=np.int64))
        src = self if target is None else target
        boot = gamma * src.q[np.atleast_1d(s_next), np.atleast_1d(a_next)]
        if done is not None:
            boot = np.where(np.atleast_1d(done), 0.0, boot)
        err = np.atleast_1d(r) + boot - self.q[s, a]
        step = np.zeros_like(self.q)
        np.add.at(step, (s, a), err)
        self.q += step_size * step
        return float(0.5 * np.mean(err * err))


def qr_td_update(critic: QuantileCritic, transition, gamma: float, kappa: float, step_size: float) -> QuantileCritic:
    """Copy of ``critic`` after one quantile-regression step on ``(s, a, r, s', a')``."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    s, a, r, s2, a2 = transition
    out = critic.copy()
    out.update(s, a, r, s2, a2, gamma, kappa, step_size)
    return out


def mean_td_update(critic: MeanCritic, transition, gamma: float, step_size: float) -> MeanCritic:
    s, a, r, s2, a2 = transition
    out = critic.copy()
    if step_size:
        out.update(s, a, r, s2, a2, gamma, step_size=step_size)
    return out


def fit_policy_critic(
    mdp,
    policy: np.ndarray,
    spec,
    rng: np.random.Generator,
    n_quantiles: int = 200,
    sweeps: int = 2000,
    samples: int = 32,
    kappa: float = 0.01,
    step_size: float = 0.5,
    step_size_end: float = 0.005,
    init: float = 0.0,
) -> QuantileCritic:
    """Quantile TD on simulated transitions from every (s, a) under a fixed policy.

    Each sweep draws ``samples`` transitions per pair and takes one pooled
    step; the step is normalised by ``samples * kappa`` so ``step_size``
    bounds how far an atom moves. The step decays geometrically to
    ``step_size_end``.
    """
    pi = check_policy(policy, mdp.shape)
    n_s, n_a = mdp.shape
    critic = QuantileCritic.constant(n_s, n_a, n_quantiles, init)
    s = np.repeat(np.arange(n_s), n_a * samples)
    a = np.tile(np.repeat(np.arange(n_a), samples), n_s)
    for k in range(sweeps):
        lr = step_size * (step_size_end / step_size) ** (k / max(sweeps - 1, 1))
        r, s2, a2 = sample_transitions(mdp, pi, spec, s, a, rng)
        critic.update(s, a, r, s2, a2, mdp.gamma, kappa, lr / (samples * kappa))
    return critic


def critic_drm(critic, s: int, a: int, d: Distortion) -> float:
    if isinstance(critic, MeanCritic):
        return float(critic.q[s, a])
    return drm(critic.theta[s, a], d)
