import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distirl.critic import QuantileCritic
from distirl.dist import CVaR, Neutral, Wang
from distirl.policy import RiskPolicy, act, entropy, policy_from_critic, policy_from_values, softmax_rows


def critic_from_rows(*rows):
    return QuantileCritic(np.array([rows], dtype=float))


class TestPolicyFromCritic:
    def test_equal_values_uniform(self):
        c = QuantileCritic.constant(2, 3, 5, 1.0)
        assert np.allclose(policy_from_critic(c, CVaR(0.1), 0.1).probs, 1 / 3)

    def test_closed_form_two_actions(self):
        beta = 0.1
        c = critic_from_rows([0.0, 0.0], [beta * math.log(3)] * 2)
        assert np.allclose(policy_from_critic(c, Neutral(), beta).probs, [[0.25, 0.75]], atol=1e-12)

    def test_small_beta_is_argmax(self):
        c = critic_from_rows([0.0], [1.0], [0.5])
        p = policy_from_critic(c, Neutral(), 1e-4).probs
        assert p[0].tolist() == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)

    def test_overflow_safe(self):
        p = policy_from_values(np.array([[1e6, 1e6 + 1.0]]), Neutral(), 1e-3)
        assert np.all(np.isfinite(p.probs))

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=6), st.floats(-1e3, 1e3))
    def test_shift_invariant(self, values, c):
        v = np.array([values])
        assert np.allclose(softmax_rows(v, 0.5), softmax_rows(v + c, 0.5), atol=1e-12)

    def test_risk_aversion_ordering(self):
        safe = [0.0, 0.0, 0.0, 0.0]
        risky = [-3.0, -1.0, 1.0, 3.0]
        c = critic_from_rows(safe, risky)
        p_cvar = policy_from_critic(c, CVaR(0.5), 0.1).probs[0]
        assert p_cvar[0] > p_cvar[1]
        assert policy_from_critic(c, Wang(0.75), 0.1).probs[0, 0] > 0.5
        assert np.allclose(policy_from_critic(c, Neutral(), 0.1).probs[0], 0.5)

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            policy_from_critic(QuantileCritic.constant(1, 2, 3), Neutral(), 0.0)


class TestRiskPolicy:
    def test_rows_validated(self):
        with pytest.raises(ValueError):
            RiskPolicy(np.array([[0.5, 0.6]]))
        with pytest.raises(ValueError):
            RiskPolicy(np.array([[1.5, -0.5]]))
        with pytest.raises(ValueError):
            RiskPolicy(np.array([[1.0]]), beta=-1.0)

    def test_frozen(self):
        p = RiskPolicy.uniform(2, 2)
        with pytest.raises(ValueError):
            p.probs[0, 0] = 1.0

    def test_entropy(self):
        assert entropy(RiskPolicy(np.array([[0.0, 1.0]])), 0) == 0.0
        assert entropy(RiskPolicy.uniform(1, 4), 0) == pytest.approx(math.log(4))
        assert entropy(RiskPolicy(np.array([[0.25, 0.75]])), 0) == pytest.approx(0.5623, abs=1e-4)


class TestAct:
    def test_one_hot(self):
        rng = np.random.default_rng(0)
        p = RiskPolicy(np.array([[0.0, 0.0, 1.0]]))
        assert {act(p, 0, rng) for _ in range(200)} == {2}

    @pytest.mark.parametrize("row", [[0.25, 0.25, 0.25, 0.25], [0.25, 0.75]])
    def test_frequencies_within_3se(self, row):
        rng = np.random.default_rng(1)
        p = RiskPolicy(np.array([row]))
        n = 100_000
        counts = np.bincount([act(p, 0, rng) for _ in range(n)], minlength=len(row))
        row = np.array(row)
        se = np.sqrt(row * (1 - row) / n)
        assert np.all(np.abs(counts / n - row) <= 3 * se)

    def test_reproducible(self):
        p = RiskPolicy.uniform(1, 5)
        a = [act(p, 0, np.random.default_rng(7)) for _ in range(3)]
        assert len(set(a)) == 1
