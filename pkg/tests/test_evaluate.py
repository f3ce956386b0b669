import numpy as np
import pytest

from distirl.expert import generate_demos
from distirl.evaluate import PAIR_COLUMNS, demo_returns, evaluate, pearson, policy_returns
from distirl.mdp import DemoSet, Deterministic, Gaussian, SkewNormal, TrueRewardSpec, Trajectory, build_gridworld
from distirl.policy import RiskPolicy
from distirl.reward import RewardModel, inverse_softplus, unsquash_location


def model_matching(spec, shape, reward_range=(-5, 5)):
    """Skew-normal model whose laws equal a spec of Gaussian or SkewNormal laws."""
    loc, scale, alpha = (np.zeros(shape) for _ in range(3))
    for s in range(shape[0]):
        for a in range(shape[1]):
            law = spec.law(s, a)
            loc[s, a] = unsquash_location(law.mu if isinstance(law, Gaussian) else law.loc, reward_range)
            scale[s, a] = inverse_softplus((law.sigma if isinstance(law, Gaussian) else law.scale) - 1e-4)
            alpha[s, a] = 0.0 if isinstance(law, Gaussian) else law.alpha
    return RewardModel("skew_normal", loc, scale, alpha, reward_range)


class TestPearson:
    def test_examples(self):
        assert pearson([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)
        x = np.arange(7.0)
        assert pearson(x, 2 * x + 3) == pytest.approx(1.0)
        assert pearson(x, -x) == pytest.approx(-1.0)

    def test_degenerate(self):
        assert np.isnan(pearson([1, 1, 1], [1, 2, 3]))
        with pytest.raises(ValueError):
            pearson([1], [1])
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])


class TestEvaluate:
    def setup_method(self):
        self.mdp, _ = build_gridworld(2, 2, (0, 0), [], gamma=0.75)
        rng = np.random.default_rng(0)
        self.spec = TrueRewardSpec(
            [[Gaussian(rng.uniform(-1, 1), rng.uniform(0.5, 1.5)) if (s + a) % 2 else
              SkewNormal(rng.uniform(-1, 1), rng.uniform(0.5, 1.5), 3.0) for a in range(4)] for s in range(4)]
        )
        self.policy = RiskPolicy.uniform(4, 4)

    def test_self_comparison(self):
        model = model_matching(self.spec, (4, 4))
        rep = evaluate(model, self.policy, self.mdp, self.spec, n_rollouts=500, n_reward_samples=20_000)
        assert rep.summary["pearson_mean"] == pytest.approx(1.0, abs=1e-9)
        assert rep.summary["mean_w1"] < 0.05
        assert rep.summary["n_pairs"] == 16
        for row in rep.pairs:
            assert row["learned_mean"] == pytest.approx(row["true_mean"], abs=1e-6)
            assert row["learned_var"] == pytest.approx(row["true_var"], rel=1e-6)

    def test_demo_restriction_and_signals(self):
        model = model_matching(self.spec, (4, 4))
        demos = DemoSet([Trajectory([0, 1, 1], [3, 1, 1], [0.5, 1.0, 2.0])], 4, 4)
        rep = evaluate(model, self.policy, self.mdp, self.spec, demos, n_rollouts=200, n_reward_samples=100)
        assert {(r["s"], r["a"]) for r in rep.pairs} == {(0, 3), (1, 1)}
        row = next(r for r in rep.pairs if r["s"] == 1)
        assert row["true_mean"] == pytest.approx(1.5)
        assert row["true_var"] == pytest.approx(0.25)
        assert row["demo_count"] == 2
        assert rep.summary["demo_return_source"] == "signals"

    def test_without_signals_uses_learned_reward(self):
        model = model_matching(self.spec, (4, 4))
        demos = DemoSet([Trajectory([0, 1], [3, 1])], 4, 4)
        rep = evaluate(model, self.policy, self.mdp, self.spec, demos, n_rollouts=200, n_reward_samples=100)
        assert rep.summary["demo_return_source"] == "learned_reward"
        assert rep.summary["fsd_violation"] >= 0.0

    def test_identical_policy_small_fsd(self):
        spec = TrueRewardSpec.uniform(4, 4, Deterministic(1.0))
        demos = generate_demos(self.mdp, spec, self.policy, 200, 10, 3)
        model = RewardModel.initial("deterministic", 4, 4, (0, 2), loc=1.0)
        rep = evaluate(model, self.policy, self.mdp, spec, demos, horizon=10, n_rollouts=2000)
        assert rep.summary["fsd_violation"] == pytest.approx(0.0, abs=1e-9)
        assert rep.summary["policy_return_mean"] == pytest.approx((1 - 0.75**10) / 0.25)

    def test_csv_outputs(self):
        model = model_matching(self.spec, (4, 4))
        rep = evaluate(model, self.policy, self.mdp, self.spec, n_rollouts=100, n_reward_samples=50)
        lines = rep.pairs_csv().splitlines()
        assert lines[0] == ",".join(PAIR_COLUMNS)
        assert len(lines) == 17
        assert rep.summary_csv().startswith("metric,value\n")

    def test_needs_reference(self):
        model = model_matching(self.spec, (4, 4))
        with pytest.raises(ValueError):
            evaluate(model, self.policy, self.mdp, None, DemoSet([Trajectory([0], [0])], 4, 4))
        with pytest.raises(ValueError):
            evaluate(RewardModel.initial("gaussian", 3, 4), self.policy, self.mdp, self.spec)


def test_return_helpers():
    mdp, _ = build_gridworld(2, 2, (0, 0), [], gamma=0.5)
    spec = TrueRewardSpec.uniform(4, 4, Deterministic(1.0))
    z = policy_returns(mdp, RiskPolicy.uniform(4, 4), spec, 3, 5, np.random.default_rng(0))
    assert np.allclose(z, 1.75)
    demos = DemoSet([Trajectory([0, 1, 1], [0, 0, 0], [1.0, 1.0, 1.0])], 4, 4)
    assert demo_returns(demos, 0.5, 2).tolist() == [1.5]
    assert demo_returns(demos.without_signals(), 0.5, 2) is None
