"""Learnable per-(s, a) reward distributions with pathwise gradients.

Each (s, a) owns three unconstrained numbers. The location is squashed
into ``(r_min, r_max)`` by a scaled tanh, the scale goes through a
softplus with a small floor, and the skew is used as is. Samples are
reparameterised::

    r = mu + sigma * (delta * |eps0| + sqrt(1 - delta**2) * eps1),
    delta = alpha / sqrt(1 + alpha**2)

which is Azzalini's skew-normal. Gaussian models drop the first term and
deterministic models drop both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import expit, log_ndtr

from .errors import ConfigurationError

__all__ = [
    "RewardKind",
    "RewardModel",
    "RewardGrad",
    "squash_location",
    "unsquash_location",
    "softplus",
    "inverse_softplus",
    "sample_reward",
    "analytic_moments",
    "kl_to_prior",
    "SCALE_FLOOR",
]

SCALE_FLOOR = 1e-4
_LOG2 = math.log(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class RewardKind(str, Enum):
    DETERMINISTIC = "deterministic"
    GAUSSIAN = "gaussian"
    SKEW_NORMAL = "skew_normal"

    @classmethod
    def parse(cls, value) -> "RewardKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "_")
        aliases = {"det": "deterministic", "skewnormal": "skew_normal", "sn": "skew_normal"}
        try:
            return cls(aliases.get(text, text))
        except ValueError:
            raise ConfigurationError(f"unknown reward kind {value!r}") from None


def _check_range(reward_range) -> tuple[float, float]:
    lo, hi = float(reward_range[0]), float(reward_range[1])
    if not lo < hi:
        raise ConfigurationError(f"reward range needs r_min < r_max, got ({lo}, {hi})")
    return lo, hi


def squash_location(raw_loc, reward_range):
    """Map an unconstrained location into the open interval ``reward_range``."""
    lo, hi = _check_range(reward_range)
    out = lo + (hi - lo) * (np.tanh(raw_loc) + 1.0) / 2.0
    return float(out) if np.ndim(out) == 0 else out


def unsquash_location(mu, reward_range):
    lo, hi = _check_range(reward_range)
    x = 2.0 * (np.asarray(mu, dtype=float) - lo) / (hi - lo) - 1.0
    if np.any(np.abs(x) >= 1.0):
        raise ValueError("location must lie strictly inside the reward range")
    out = np.arctanh(x)
    return float(out) if np.ndim(out) == 0 else out


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


@dataclass(frozen=True)
class RewardGrad:
    """Derivatives of sampled rewards with respect to the raw parameters."""

    d_raw_loc: np.ndarray
    d_raw_scale: np.ndarray
    d_raw_alpha: np.ndarray


class RewardModel:
    """Tables of raw parameters, shape (n_states, n_actions) each."""

    def __init__(
        self,
        kind,
        raw_loc: np.ndarray,
        raw_scale: np.ndarray,
        raw_alpha: Optional[np.ndarray] = None,
        reward_range=(-5.0, 5.0),
    ):
        self.kind = RewardKind.parse(kind)
        self.range = _check_range(reward_range)
        self.raw_loc = np.array(raw_loc, dtype=float)
        self.raw_scale = np.array(raw_scale, dtype=float)
        self.raw_alpha = (
            np.zeros_like(self.raw_loc) if raw_alpha is None else np.array(raw_alpha, dtype=float)
        )
        if self.raw_loc.ndim != 2 or not (
            self.raw_loc.shape == self.raw_scale.shape == self.raw_alpha.shape
        ):
            raise ConfigurationError("reward parameter tables must share one 2-d shape")

    @classmethod
    def initial(
        cls,
        kind,
        n_states: int,
        n_actions: int,
        reward_range=(-5.0, 5.0),
        loc: Optional[float] = None,
        scale: float = 1.0,
        alpha: float = 0.0,
    ) -> "RewardModel":
        """Constant tables; ``loc`` defaults to the middle of the range."""
        shape = (n_states, n_actions)
        raw_loc = 0.0 if loc is None else unsquash_location(loc, reward_range)
        raw_scale = float(inverse_softplus(scale - SCALE_FLOOR))
        return cls(
            kind,
            np.full(shape, raw_loc),
            np.full(shape, raw_scale),
            np.full(shape, float(alpha)),
            reward_range,
        )

    def copy(self) -> "RewardModel":
        return RewardModel(self.kind, self.raw_loc, self.raw_scale, self.raw_alpha, self.range)

    @property
    def shape(self) -> tuple[int, int]:
        return self.raw_loc.shape

    def params(self) -> np.ndarray:
        """Stacked raw tables, shape (3, S, A)."""
        return np.stack([self.raw_loc, self.raw_scale, self.raw_alpha])

    def set_params(self, stacked: np.ndarray) -> None:
        self.raw_loc, self.raw_scale, self.raw_alpha = (np.array(x, dtype=float) for x in stacked)

    def trainable_mask(self) -> np.ndarray:
        """Which of the three stacked tables the kind actually uses."""
        return np.array([True, self.kind != RewardKind.DETERMINISTIC, self.kind == RewardKind.SKEW_NORMAL])

    # effective parameters

    def loc(self) -> np.ndarray:
        return squash_location(self.raw_loc, self.range)

    def dloc(self) -> np.ndarray:
        lo, hi = self.range
        return (hi - lo) / 2.0 * (1.0 - np.tanh(self.raw_loc) ** 2)

    def scale(self) -> np.ndarray:
        if self.kind == RewardKind.DETERMINISTIC:
            return np.zeros(self.shape)
        return SCALE_FLOOR + softplus(self.raw_scale)

    def alpha(self) -> np.ndarray:
        if self.kind == RewardKind.SKEW_NORMAL:
            return self.raw_alpha.copy()
        return np.zeros(self.shape)

    def delta(self) -> np.ndarray:
        al = self.alpha()
        return al / np.sqrt(1.0 + al * al)

    # sampling

    def sample(self, s, a, eps0, eps1, with_grad: bool = True):
        """Reparameterised rewards at index arrays ``s, a`` given standard-normal noise.

        Returns ``(rewards, RewardGrad | None)`` with arrays broadcast to a common shape.
        """
        s = np.asarray(s, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        eps0 = np.asarray(eps0, dtype=float)
        eps1 = np.asarray(eps1, dtype=float)
        raw = self.raw_loc[s, a]
        lo, hi = self.range
        th = np.tanh(raw)
        mu = lo + (hi - lo) * (th + 1.0) / 2.0
        shape = np.broadcast(mu, eps0, eps1).shape
        if self.kind == RewardKind.DETERMINISTIC:
            r = np.broadcast_to(mu, shape).copy()
            if not with_grad:
                return r, None
            zeros = np.zeros(shape)
            dloc = np.broadcast_to((hi - lo) / 2.0 * (1.0 - th * th), shape).copy()
            return r, RewardGrad(dloc, zeros, zeros.copy())
        rs = self.raw_scale[s, a]
        sigma = SCALE_FLOOR + softplus(rs)
        if self.kind == RewardKind.GAUSSIAN:
            v = np.broadcast_to(eps1, shape)
            dv_dalpha = np.zeros(shape)
        else:
            al = self.raw_alpha[s, a]
            q = 1.0 + al * al
            d = al / np.sqrt(q)
            v = d * np.abs(eps0) + eps1 / np.sqrt(q)
            dv_dalpha = (np.abs(eps0) - al * eps1) / q**1.5
        r = mu + sigma * v
        if not with_grad:
            return np.broadcast_to(r, shape).copy(), None
        dloc = np.broadcast_to((hi - lo) / 2.0 * (1.0 - th * th), shape).copy()
        dscale = np.broadcast_to(expit(rs) * v, shape).copy()
        dalpha = np.broadcast_to(sigma * dv_dalpha, shape).copy()
        return np.broadcast_to(r, shape).copy(), RewardGrad(dloc, dscale, dalpha)

    # moments

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance tables."""
        mu, sigma, d = self.loc(), self.scale(), self.delta()
        mean = mu + sigma * d * _SQRT_2_OVER_PI
        var = sigma**2 * (1.0 - 2.0 * d * d / math.pi)
        return mean, var

    # regulariser

    def kl(self, s, a, eps0=None, eps1=None, with_grad: bool = True):
        """KL(q(r|s,a) || N(0,1)) per element plus gradients w.r.t. raw params.

        Gaussian models use the closed form, deterministic ones ``mu**2 / 2``;
        skew-normal models need noise of shape ``(len(s), n_mc)`` and return
        the Monte-Carlo mean per element.
        """
        s = np.asarray(s, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        lo, hi = self.range
        raw = self.raw_loc[s, a]
        th = np.tanh(raw)
        mu = lo + (hi - lo) * (th + 1.0) / 2.0
        dmu = (hi - lo) / 2.0 * (1.0 - th * th)
        zeros = np.zeros_like(mu)
        if self.kind == RewardKind.DETERMINISTIC:
            val = 0.5 * mu * mu
            return val, (RewardGrad(mu * dmu, zeros, zeros.copy()) if with_grad else None)
        rs = self.raw_scale[s, a]
        sigma = SCALE_FLOOR + softplus(rs)
        dsig = expit(rs)
        if self.kind == RewardKind.GAUSSIAN:
            val = -np.log(sigma) + 0.5 * (sigma * sigma + mu * mu) - 0.5
            if not with_grad:
                return val, None
            return val, RewardGrad(mu * dmu, (sigma - 1.0 / sigma) * dsig, zeros.copy())
        if eps0 is None or eps1 is None:
            raise ValueError("skew-normal KL needs Monte-Carlo noise")
        e0 = np.asarray(eps0, dtype=float)
        e1 = np.asarray(eps1, dtype=float)
        al = self.raw_alpha[s, a][..., None]
        q = 1.0 + al * al
        v = al / np.sqrt(q) * np.abs(e0) + e1 / np.sqrt(q)
        r = mu[..., None] + sigma[..., None] * v
        x = al * v
        lphi = log_ndtr(x)
        f = _LOG2 - np.log(sigma)[..., None] + lphi + 0.5 * (r * r - v * v)
        val = f.mean(axis=-1)
        if not with_grad:
            return val, None
        mills = np.exp(-0.5 * x * x - 0.5 * math.log(2.0 * math.pi) - lphi)
        dv_da = (np.abs(e0) - al * e1) / q**1.5
        df_dmu = r
        df_dsig = -1.0 / sigma[..., None] + r * v
        df_dal = mills * (v + al * dv_da) + (r * sigma[..., None] - v) * dv_da
        return val, RewardGrad(
            df_dmu.mean(axis=-1) * dmu,
            df_dsig.mean(axis=-1) * dsig,
            df_dal.mean(axis=-1),
        )


def sample_reward(model: RewardModel, s: int, a: int, noise: tuple[float, float]):
    """Single reparameterised draw and its pathwise gradient record."""
    r, g = model.sample(s, a, noise[0], noise[1])
    return float(r), RewardGrad(float(g.d_raw_loc), float(g.d_raw_scale), float(g.d_raw_alpha))


def analytic_moments(model: RewardModel, s: int, a: int) -> tuple[float, float]:
    mean, var = model.moments()
    return float(mean[s, a]), float(var[s, a])


def kl_to_prior(model: RewardModel, s: int, a: int, n_mc: int, rng: np.random.Generator) -> float:
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if model.kind == RewardKind.SKEW_NORMAL:
        e0 = rng.standard_normal((1, n_mc))
        e1 = rng.standard_normal((1, n_mc))
        val, _ = model.kl([s], [a], e0, e1, with_grad=False)
    else:
        val, _ = model.kl([s], [a], with_grad=False)
    return float(val[0])
