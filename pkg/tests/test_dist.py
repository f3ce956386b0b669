import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from distirl.dist import (
    CVaR,
    Neutral,
    QuantileDistribution,
    Wang,
    cdf_points,
    distortion_to_str,
    drm,
    drm_weights,
    empirical_quantiles,
    fsd_violation_cdf,
    fsd_violation_quantile,
    mean,
    parse_distortion,
    quantile_huber,
    variance,
    wasserstein1,
)

GRID = [CVaR(a) for a in (0.05, 0.1, 0.25, 0.5, 1.0)] + [Wang(l) for l in (-1.0, 0.0, 0.5, 1.0)] + [Neutral()]

atoms = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=40)


def cdf_area_oracle(x, y):
    """Brute-force integral of [F_x - F_y]_+ on a fine grid of midpoints."""
    x, y = np.sort(x), np.sort(y)
    pts = np.union1d(x, y)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        z = 0.5 * (lo + hi)
        fx = np.searchsorted(x, z, side="right") / x.size
        fy = np.searchsorted(y, z, side="right") / y.size
        total += max(fx - fy, 0.0) * (hi - lo)
    return total


class TestQuantileDistribution:
    def test_sorts_and_freezes(self):
        q = QuantileDistribution([3.0, 1.0, 2.0])
        assert q.values.tolist() == [1.0, 2.0, 3.0]
        assert q.n == 3
        with pytest.raises(ValueError):
            q.values[0] = 5.0

    def test_rejects_empty_and_nan(self):
        with pytest.raises(ValueError):
            QuantileDistribution([])
        with pytest.raises(ValueError):
            QuantileDistribution([0.0, float("nan")])


class TestEmpiricalQuantiles:
    def test_sorts_when_sizes_match(self):
        assert empirical_quantiles([3, 1, 2], 3).values.tolist() == [1, 2, 3]

    def test_normal_median(self):
        x = np.random.default_rng(0).standard_normal(100_000)
        q = empirical_quantiles(x, 200).values
        # atoms 100 and 101 straddle fraction 0.5
        assert abs(0.5 * (q[99] + q[100])) < 0.02

    @given(st.floats(-1e3, 1e3), st.integers(1, 20), st.integers(1, 30))
    def test_constant(self, c, k, n):
        assert np.all(empirical_quantiles([c] * k, n).values == c)

    def test_empty(self):
        with pytest.raises(ValueError):
            empirical_quantiles([], 3)

    def test_nearest_rank_matches_ceil_rule(self):
        x = np.arange(10.0)
        q = empirical_quantiles(x, 4).values
        fracs = (2 * np.arange(1, 5) - 1) / 8
        expect = x[np.ceil(fracs * 10).astype(int) - 1]
        assert q.tolist() == expect.tolist()


class TestFsdViolation:
    def test_identical(self):
        x = [0.0, 1.0, 5.0]
        assert fsd_violation_cdf(x, x) == 0.0
        assert fsd_violation_quantile(x, x) == 0.0

    def test_shift(self):
        y = np.array([0.0, 1.5, 2.0, 7.0])
        c = 0.75
        assert fsd_violation_cdf(y + c, y) == 0.0
        assert fsd_violation_cdf(y, y + c) == pytest.approx(c, abs=1e-12)
        assert fsd_violation_quantile(y + c, y) == pytest.approx(c, abs=1e-12)

    def test_hand_cdf_example(self):
        # F_x - F_y is 1/2 on [0,1), 0 on [1,2), 1/2 on [2,3): area 1
        assert fsd_violation_cdf([0, 2], [1, 3]) == pytest.approx(1.0)
        assert cdf_area_oracle([0, 2], [1, 3]) == pytest.approx(1.0)

    def test_hand_quantile_example(self):
        assert fsd_violation_quantile([1, 3], [0, 2]) == pytest.approx(1.0)

    def test_random_pairs_match_across_coordinates(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x, y = rng.uniform(-5, 5, 64), rng.uniform(-5, 5, 64)
            assert abs(fsd_violation_quantile(x, y) - fsd_violation_cdf(y, x)) <= 1e-9

    @settings(max_examples=60)
    @given(atoms, atoms)
    def test_cdf_form_matches_bruteforce(self, x, y):
        assert fsd_violation_cdf(x, y) == pytest.approx(cdf_area_oracle(x, y), rel=1e-9, abs=1e-9)

    @settings(max_examples=60)
    @given(st.integers(1, 30).flatmap(lambda n: st.tuples(
        st.lists(st.floats(-20, 20), min_size=n, max_size=n),
        st.lists(st.floats(-20, 20), min_size=n, max_size=n))), st.floats(-10, 10))
    def test_translation_covariant(self, pair, c):
        x, y = map(np.array, pair)
        assert fsd_violation_quantile(x + c, y + c) == pytest.approx(fsd_violation_quantile(x, y), abs=1e-9)
        assert fsd_violation_cdf(x + c, y + c) == pytest.approx(fsd_violation_cdf(x, y), abs=1e-9)

    def test_zero_iff_dominance(self):
        x = np.array([1.0, 2.0, 4.0])
        y = np.array([0.5, 2.0, 3.0])
        assert fsd_violation_cdf(x, y) == 0.0
        assert fsd_violation_cdf(y, x) > 0.0

    def test_different_atom_counts_resampled(self):
        x = [0.0, 1.0]
        y = [0.0, 0.0, 1.0, 1.0]
        assert fsd_violation_quantile(x, y) == 0.0
        assert fsd_violation_cdf(x, y) == 0.0


class TestDrm:
    def test_cvar_one_and_wang_zero_are_mean(self):
        x = np.random.default_rng(2).normal(size=37)
        assert drm(x, CVaR(1.0)) == pytest.approx(x.mean(), abs=1e-12)
        assert drm(x, Wang(0.0)) == pytest.approx(x.mean(), abs=1e-12)
        assert drm(x, Neutral()) == pytest.approx(x.mean(), abs=1e-12)

    def test_cvar_half(self):
        assert drm([0, 1, 2, 3], CVaR(0.5)) == pytest.approx(0.5)

    def test_cvar_fractional_boundary(self):
        # alpha = 0.3 over 4 atoms: full weight on atom 1, 0.05/0.3 on atom 2
        assert drm([0, 1, 2, 3], CVaR(0.3)) == pytest.approx((0.25 * 0 + 0.05 * 1) / 0.3)

    @pytest.mark.parametrize("d", GRID, ids=distortion_to_str)
    @pytest.mark.parametrize("n", [1, 2, 7, 200])
    def test_weights_are_a_distribution(self, d, n):
        w = drm_weights(d, n)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-9

    def test_wang_weights_match_scipy(self):
        lam, n = 0.5, 10
        edges = np.arange(n + 1) / n
        g = stats.norm.cdf(stats.norm.ppf(edges) + lam)
        assert np.allclose(drm_weights(Wang(lam), n), np.diff(g), atol=1e-12)

    def test_wang_positive_lambda_is_pessimistic(self):
        # g(v) >= v for lambda > 0, so the low atoms gain weight
        x = np.arange(10.0)
        assert drm(x, Wang(0.5)) < x.mean() < drm(x, Wang(-0.5))

    @settings(max_examples=40)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.lists(st.floats(0, 5), min_size=30, max_size=30))
    def test_dominance_implies_drm_order(self, y, bump):
        y = np.sort(np.array(y))
        x = y + np.array(bump[: y.size])
        for d in GRID:
            assert drm(np.sort(x), d) >= drm(y, d) - 1e-9
        assert mean(np.sort(x)) >= mean(y) - 1e-9

    def test_parse_round_trip(self):
        for d in GRID:
            assert parse_distortion(distortion_to_str(d)) == d
        assert parse_distortion({"kind": "cvar", "alpha": 0.1}) == CVaR(0.1)
        for bad in ("cvar:0", "cvar:1.5", "nope", "wang:x"):
            with pytest.raises(ValueError):
                parse_distortion(bad)


class TestOtherNumerics:
    def test_wasserstein(self):
        assert wasserstein1([1, 2], [1, 2]) == 0.0
        assert wasserstein1(np.array([1.0, 4.0]) + 2.5, [1.0, 4.0]) == pytest.approx(2.5)
        assert wasserstein1([0, 2], [1, 1]) == pytest.approx(1.0)

    def test_quantile_huber_examples(self):
        assert quantile_huber(0.0, 0.3, 1.0) == 0.0
        assert quantile_huber(0.5, 0.5, 1.0) == pytest.approx(0.0625)
        # positive delta takes weight tau; beyond kappa the penalty is linear
        assert quantile_huber(2.0, 0.25, 1.0) == pytest.approx(0.375)
        assert quantile_huber(-2.0, 0.25, 1.0) == pytest.approx(1.125)

    @pytest.mark.parametrize("kappa", [0.1, 1.0, 3.0])
    def test_quantile_huber_continuous_at_kappa(self, kappa):
        for tau in (0.1, 0.5, 0.9):
            for sign in (1, -1):
                lo = quantile_huber(sign * np.nextafter(kappa, 0.0), tau, kappa)
                hi = quantile_huber(sign * np.nextafter(kappa, np.inf), tau, kappa)
                assert abs(lo - hi) < 1e-12

    @given(st.floats(-1e3, 1e3), st.floats(0.001, 0.999), st.floats(0.01, 10))
    def test_quantile_huber_nonnegative(self, d, tau, kappa):
        assert quantile_huber(d, tau, kappa) >= 0

    def test_mean_and_variance(self):
        assert mean([3.0] * 4) == 3.0
        assert variance([3.0] * 4) == 0.0
        assert mean([0, 2]) == 1.0
        assert variance([0, 2]) == 1.0
        assert variance([5.0]) == 0.0
        assert mean(np.array([0.0, 2.0]) + 3) == mean([0.0, 2.0]) + 3

    def test_cdf_points(self):
        z, p = cdf_points([1.0, 1.0, 2.0, 5.0])
        assert z.tolist() == [1.0, 2.0, 5.0]
        assert p.tolist() == [0.5, 0.75, 1.0]

    def test_cvar_validation(self):
        with pytest.raises(ValueError):
            CVaR(0.0)
        with pytest.raises(ValueError):
            CVaR(1.5)
        assert math.isfinite(drm([1.0], CVaR(1e-6)))
