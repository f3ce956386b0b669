import numpy as np
import pytest

from distirl.engine import (
    ABLATIONS,
    DemoArrays,
    IrlConfig,
    TrainLog,
    fsd_data_term,
    initial_models,
    mean_data_term,
    reward_loss_fsd,
    reward_loss_mean,
    sample_returns_offline,
    train,
)
from distirl.errors import ConfigurationError, TrainingError
from distirl.mdp import DemoSet, Trajectory
from distirl.policy import RiskPolicy
from distirl.reward import RewardModel, analytic_moments


def chain_demos(n=6):
    """Trajectories on a 4-state chain, always action 1, with a few action-0 steps."""
    trs = []
    for i in range(n):
        s = [0, 1, 2, 3, 3]
        a = [1, 1, 1, 0 if i % 2 else 1, 1]
        trs.append(Trajectory(s, a))
    return DemoSet(trs, 4, 2)


def expert_policy(n_states=4):
    p = np.zeros((n_states, 2))
    p[:, 1] = 1.0
    return RiskPolicy(p)


def random_model(kind, rng, shape=(4, 2)):
    return RewardModel(kind, rng.normal(0, 0.5, shape), rng.normal(0, 0.5, shape), rng.normal(0, 1.0, shape), (-3, 3))


class TestSampling:
    def test_policy_equal_expert_gives_equal_sets(self):
        demos = DemoSet([Trajectory([0, 1, 2], [1, 1, 1])] * 3, 4, 2)
        model = RewardModel.initial("deterministic", 4, 2, (0, 2), loc=1.3)
        z_pi, z_e = sample_returns_offline(demos, expert_policy(), model, 0.9, 10, 50, np.random.default_rng(0))
        assert np.array_equal(z_pi, z_e)

    def test_geometric_sum(self):
        demos = DemoSet([Trajectory([0, 1, 2], [0, 0, 0])], 4, 2)
        model = RewardModel.initial("deterministic", 4, 2, (0, 2), loc=1.0)
        _, z_e = sample_returns_offline(demos, RiskPolicy.uniform(4, 2), model, 0.5, 10, 20, np.random.default_rng(0))
        assert np.allclose(z_e, 1.75)

    def test_single_step_moments(self):
        demos = DemoSet([Trajectory([0], [1])], 4, 2)
        model = random_model("skew_normal", np.random.default_rng(1))
        n = 100_000
        _, z_e = sample_returns_offline(demos, expert_policy(), model, 0.0, 1, n, np.random.default_rng(2))
        mean, var = analytic_moments(model, 0, 1)
        assert abs(z_e.mean() - mean) <= 3 * np.sqrt(var / n)

    def test_horizon_truncates(self):
        arr = DemoArrays(chain_demos(), horizon=2)
        assert arr.states.shape == (6, 2)
        assert arr.n_transitions == 6 * 4

    def test_empty_demos(self):
        with pytest.raises(ValueError):
            DemoArrays(DemoSet([], 4, 2))

    def test_common_noise(self):
        model = random_model("gaussian", np.random.default_rng(0))
        demos = DemoSet([Trajectory([0, 1, 2], [1, 1, 1])], 4, 2)
        smp = sample_returns_offline(demos, expert_policy(), model, 0.9, 5, 8, np.random.default_rng(0), True)
        assert np.array_equal(smp.eps_e, smp.eps_pi)
        assert np.array_equal(smp.z_e, smp.z_pi)
        smp = sample_returns_offline(demos, expert_policy(), model, 0.9, 5, 8, np.random.default_rng(0), False)
        assert not np.array_equal(smp.z_e, smp.z_pi)


class TestDataTerms:
    def test_identical_and_shift(self):
        z = np.random.default_rng(0).normal(size=50)
        assert fsd_data_term(z, z)[0] == 0.0
        assert mean_data_term(z, z)[0] == 0.0
        assert fsd_data_term(z + 0.4, z)[0] == pytest.approx(0.4)
        assert mean_data_term(z + 0.4, z)[0] == pytest.approx(0.4)

    def test_mean_permutation_invariant(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=20), rng.normal(size=20)
        assert mean_data_term(x, y)[0] == pytest.approx(mean_data_term(rng.permutation(x), rng.permutation(y))[0])

    def test_zero_iff_sorted_dominance(self):
        y = np.array([0.0, 1.0, 2.0])
        assert fsd_data_term(np.array([0.0, 0.5, 2.0]), y)[0] == 0.0
        assert fsd_data_term(np.array([0.0, 1.5, 2.0]), y)[0] > 0.0

    def test_mean_blind_to_variance(self):
        rng = np.random.default_rng(2)
        z_e = rng.normal(0, 0.1, 1000)
        z_pi = rng.normal(0, 2.0, 1000)
        z_pi += z_e.mean() - z_pi.mean()
        assert abs(mean_data_term(z_pi, z_e)[0]) < 1e-12
        assert fsd_data_term(z_pi, z_e)[0] > 0.1

    def test_mismatched_counts(self):
        with pytest.raises(ValueError):
            fsd_data_term(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            mean_data_term(np.zeros(3), np.zeros(4))


def loss_fd_check(loss_fn, kind, seed, h=1e-5):
    rng = np.random.default_rng(seed)
    model = random_model(kind, rng)
    pol = RiskPolicy(rng.dirichlet(np.ones(2), size=4))
    smp = sample_returns_offline(chain_demos(), pol, model, 0.8, 5, 64, rng)
    pairs = smp.pairs()
    noise = rng.standard_normal((2, pairs[0].size, 8))
    _, grad, _ = loss_fn(smp, model, 0.1, kl_noise=noise)

    def value(params):
        m = model.copy()
        m.set_params(params)
        return loss_fn(smp.recompute(m), m, 0.1, kl_noise=noise)[0]

    p = model.params()
    mask = model.trainable_mask()
    for idx in np.ndindex(p.shape):
        if not mask[idx[0]]:
            continue
        up, dn = p.copy(), p.copy()
        up[idx] += h
        dn[idx] -= h
        fd = (value(up) - value(dn)) / (2 * h)
        assert abs(grad[idx] - fd) <= 1e-3 * max(abs(fd), 1e-3), (idx, grad[idx], fd)


class TestLossGradients:
    @pytest.mark.parametrize("kind", ["deterministic", "gaussian", "skew_normal"])
    @pytest.mark.parametrize("loss_fn", [reward_loss_fsd, reward_loss_mean], ids=["fsd", "mean"])
    def test_finite_differences(self, loss_fn, kind):
        loss_fd_check(loss_fn, kind, seed=3)

    def test_kl_adds_nonnegative(self):
        rng = np.random.default_rng(4)
        model = random_model("gaussian", rng)
        smp = sample_returns_offline(chain_demos(), expert_policy(), model, 0.8, 5, 32, rng)
        loss, _, parts = reward_loss_fsd(smp, model, 0.5)
        assert parts["kl"] >= 0
        assert loss >= parts["data"]

    def test_frozen_tables_have_zero_gradient(self):
        rng = np.random.default_rng(5)
        model = random_model("gaussian", rng)
        smp = sample_returns_offline(chain_demos(), RiskPolicy.uniform(4, 2), model, 0.8, 5, 32, rng)
        _, grad, _ = reward_loss_fsd(smp, model, 0.1)
        assert np.all(grad[2] == 0.0)

    def test_kl_only_on_batch_pairs(self):
        rng = np.random.default_rng(6)
        model = random_model("gaussian", rng)
        demos = DemoSet([Trajectory([0, 1], [1, 1])], 4, 2)
        smp = sample_returns_offline(demos, expert_policy(), model, 0.8, 5, 16, rng)
        _, grad, _ = reward_loss_fsd(smp, model, 1.0)
        assert np.all(grad[:, 2:] == 0.0)
        assert np.all(grad[:, :2, 0] == 0.0)


class TestConfig:
    def test_reference_defaults(self):
        c = IrlConfig()
        assert (c.critic_step_size, c.reward_step_size, c.batch_size, c.iterations) == (3e-4, 3e-4, 512, 5000)
        assert (c.kl_weight, c.n_quantiles, c.distortion, c.beta) == (0.01, 200, "cvar:0.05", 0.1)

    @pytest.mark.parametrize(
        "bad",
        [{"beta": 0}, {"reward_step_size": -1}, {"return_sample_count": 1}, {"critic_kind": "x"},
         {"reward_loss": "x"}, {"distortion": "cvar:2"}, {"reward_range": [1, 0]}, {"gamma": 1.0}],
    )
    def test_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            IrlConfig(**bad)

    def test_unknown_key_and_round_trip(self):
        with pytest.raises(ConfigurationError):
            IrlConfig.from_dict({"learning_rate": 1})
        c = IrlConfig(reward_kind="gaussian", reward_range=(0, 2))
        assert IrlConfig.from_dict(c.to_dict()) == c

    def test_ablation_names(self):
        assert set(ABLATIONS) == {"Dis-Qt-FSD", "Dis-Qt-Mean", "Det-Qt-Mean", "Dis-TD-FSD", "Dis-TD-Mean", "Det-TD-Mean"}


SMALL = dict(iterations=30, batch_size=32, return_sample_count=16, n_quantiles=8, horizon=5, reward_step_size=0.05)


class TestTrain:
    def test_zero_iterations_returns_initial_models(self):
        cfg = IrlConfig(iterations=0, reward_kind="gaussian")
        res = train((4, 2), chain_demos(), cfg)
        model, critic, policy = initial_models((4, 2), cfg)
        assert np.array_equal(res.reward_model.params(), model.params())
        assert np.array_equal(res.critic.theta, critic.theta)
        assert np.array_equal(res.policy.probs, policy.probs)
        assert len(res.log) == 0

    def test_deterministic_given_seed(self):
        cfg = IrlConfig(reward_kind="skew_normal", **SMALL)
        a = train((4, 2), chain_demos(), cfg)
        b = train((4, 2), chain_demos(), cfg)
        assert a.log.to_csv() == b.log.to_csv()
        assert np.array_equal(a.reward_model.params(), b.reward_model.params())
        c = train((4, 2), chain_demos(), cfg.replace(seed=1))
        assert c.log.to_csv() != a.log.to_csv()

    @pytest.mark.parametrize("name", sorted(ABLATIONS))
    def test_every_ablation_runs(self, name):
        kind, critic, loss = ABLATIONS[name]
        cfg = IrlConfig(reward_kind=kind or "gaussian", critic_kind=critic, reward_loss=loss, **SMALL)
        res = train((4, 2), chain_demos(), cfg)
        assert len(res.log) == 30
        assert np.all(np.isfinite(res.reward_model.params()))

    def test_one_log_record_per_iteration(self):
        res = train((4, 2), chain_demos(), IrlConfig(reward_kind="gaussian", **SMALL))
        back = TrainLog.from_csv(res.log.to_csv())
        assert back.column("iteration").tolist() == list(range(30))
        assert back.to_csv() == res.log.to_csv()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            train((5, 2), chain_demos(), IrlConfig(iterations=1))

    def test_nan_aborts_with_iteration(self):
        cfg = IrlConfig(reward_kind="gaussian", **SMALL)

        def poison(k, res):
            if k == 3:
                res.reward_model.raw_loc[:] = np.nan

        with pytest.raises(TrainingError, match="iteration 4"):
            train((4, 2), chain_demos(), cfg, callback=poison)

    def test_fsd_pushes_expert_rewards_up(self):
        # the policy picks action 0 at first; the expert always picks 1 on most steps
        cfg = IrlConfig(reward_kind="gaussian", reward_range=(0, 2), **{**SMALL, "iterations": 200})
        res = train((4, 2), chain_demos(), cfg)
        mean, _ = res.reward_model.moments()
        assert np.all(mean[:3, 1] > mean[:3, 0])
