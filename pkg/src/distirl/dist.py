"""Quantile distributions and the numerics built on them.

A distribution is a set of N equally weighted atoms stored in ascending
order; atom ``i`` (1-based) stands for the quantile at the midpoint
fraction ``(2i - 1) / (2N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "QuantileDistribution",
    "CVaR",
    "Wang",
    "Neutral",
    "Distortion",
    "empirical_quantiles",
    "fsd_violation_cdf",
    "fsd_violation_quantile",
    "drm",
    "drm_weights",
    "wasserstein1",
    "quantile_huber",
    "mean",
    "variance",
    "cdf_points",
    "parse_distortion",
]


@dataclass(frozen=True)
class QuantileDistribution:
    """N sorted atoms of mass 1/N each. Input values are sorted on construction."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("a quantile distribution needs at least one atom")
        if not np.all(np.isfinite(v)):
            raise ValueError("atoms must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def shifted(self, c: float) -> "QuantileDistribution":
        return QuantileDistribution(self.values + c)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class CVaR:
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"CVaR alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Wang:
    lam: float


@dataclass(frozen=True)
class Neutral:
    pass


Distortion = Union[CVaR, Wang, Neutral]


def parse_distortion(spec: Union[str, dict, Distortion]) -> Distortion:
    """Build a distortion from ``"cvar:0.05"``, ``"wang:0.5"``, ``"neutral"`` or a dict."""
    if isinstance(spec, (CVaR, Wang, Neutral)):
        return spec
    if isinstance(spec, dict):
        kind = str(spec.get("kind", "")).lower()
        if kind == "cvar":
            return CVaR(float(spec["alpha"]))
        if kind == "wang":
            return Wang(float(spec["lam"]))
        if kind == "neutral":
            return Neutral()
        raise ValueError(f"unknown distortion kind {kind!r}")
    text = str(spec).strip().lower()
    name, _, arg = text.partition(":")
    if name == "cvar":
        return CVaR(float(arg))
    if name == "wang":
        return Wang(float(arg))
    if name == "neutral" and not arg:
        return Neutral()
    raise ValueError(f"cannot parse distortion {spec!r}")


def distortion_to_str(d: Distortion) -> str:
    if isinstance(d, CVaR):
        return f"cvar:{d.alpha!r}"
    if isinstance(d, Wang):
        return f"wang:{d.lam!r}"
    return "neutral"


def _as_dist(x) -> QuantileDistribution:
    return x if isinstance(x, QuantileDistribution) else QuantileDistribution(x)


def empirical_quantiles(samples: Iterable[float], n: int) -> QuantileDistribution:
    """Nearest-rank order statistics at the midpoint fractions (2i-1)/(2n)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empirical_quantiles needs at least one sample")
    if n < 1:
        raise ValueError(f"atom count must be >= 1, got {n}")
    m = x.size
    i = np.arange(1, n + 1, dtype=np.int64)
    # ceil((2i-1) m / 2n) in exact integer arithmetic
    rank = ((2 * i - 1) * m + 2 * n - 1) // (2 * n)
    idx = np.clip(rank - 1, 0, m - 1)
    return QuantileDistribution(x[idx])


def _common(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = _as_dist(x), _as_dist(y)
    if x.n == y.n:
        return x.values, y.values
    n = max(x.n, y.n)
    return empirical_quantiles(x.values, n).values, empirical_quantiles(y.values, n).values


def fsd_violation_cdf(x, y) -> float:
    """Area of ``[F_x(z) - F_y(z)]_+`` integrated exactly over the step CDFs.

    Zero exactly when ``x`` first-order dominates ``y``. Atom counts may differ.
    """
    x, y = _as_dist(x), _as_dist(y)
    grid = np.union1d(x.values, y.values)
    if grid.size < 2:
        return 0.0
    left = grid[:-1]
    fx = np.searchsorted(x.values, left, side="right") / x.n
    fy = np.searchsorted(y.values, left, side="right") / y.n
    return float(np.sum(np.diff(grid) * np.maximum(fx - fy, 0.0)))


def fsd_violation_quantile(x, y) -> float:
    """Quantile-coordinate area ``(1/N) sum_i [x_i - y_i]_+``.

    By the change of variables this equals ``fsd_violation_cdf(y, x)``.
    """
    xv, yv = _common(x, y)
    return float(np.mean(np.maximum(xv - yv, 0.0)))


def drm_weights(d: Distortion, n: int) -> np.ndarray:
    """Mass the dual distortion puts on each atom's fraction interval."""
    edges = np.arange(n + 1, dtype=float) / n
    if isinstance(d, Neutral):
        return np.full(n, 1.0 / n)
    if isinstance(d, CVaR):
        capped = np.minimum(edges, d.alpha)
        w = np.diff(capped) / d.alpha
    elif isinstance(d, Wang):
        g = ndtr(ndtri(edges) + d.lam)
        g[0], g[-1] = 0.0, 1.0
        w = np.diff(g)
    else:
        raise TypeError(f"not a distortion: {d!r}")
    return np.maximum(w, 0.0)


def drm(x, d: Distortion) -> float:
    """Distortion risk measure; CVaR averages the lowest alpha-fraction of atoms."""
    x = _as_dist(x)
    return float(np.dot(drm_weights(d, x.n), x.values))


def wasserstein1(x, y) -> float:
    xv, yv = _common(x, y)
    return float(np.mean(np.abs(xv - yv)))


def quantile_huber(delta, tau, kappa: float = 1.0):
    """Pinball-weighted Huber penalty; vectorised over ``delta`` and ``tau``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    delta = np.asarray(delta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    a = np.abs(delta)
    huber = np.where(a <= kappa, 0.5 * delta * delta, kappa * a - 0.5 * kappa * kappa)
    out = np.abs(tau - (delta < 0)) * huber
    return float(out) if out.ndim == 0 else out


def mean(x) -> float:
    return float(np.mean(_as_dist(x).values))


def variance(x) -> float:
    x = _as_dist(x)
    if x.n < 2:
        return 0.0
    return float(np.var(x.values))


def cdf_points(x) -> tuple[np.ndarray, np.ndarray]:
    """Distinct support points and the right-continuous CDF at each."""
    x = _as_dist(x)
    z, counts = np.unique(x.values, return_counts=True)
    return z, np.cumsum(counts) / x.n
