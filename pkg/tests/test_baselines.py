import numpy as np
import pytest

from asre.agent import td_target
from asre.baselines import (
    BaselineConfig, EpsilonGreedyStrategy, SoftQStrategy, egreedy_q_train, prior_penalty_train,
    softq_train,
)
from asre.envs import build_budgeted_shooter, build_chain_with_trigger
from asre.learner import Batch, EvalProtocol, TabularQ, evaluate
from asre.mdp import ContractError, exact_policy_evaluation, greedy_policy, run_episode
from asre.soft_bellman import SparsityDistribution, standard_value_iteration

DESK = dict(learn_rate=0.1, batch_size=32, polyak=0.05)


def random_batch(rng, S, A, n=64):
    return Batch(rng.integers(0, S, n), rng.integers(0, A, n), rng.normal(size=n),
                 rng.integers(0, S, n), rng.random(n) < 0.2)


class TestEpsilonGreedy:
    def test_schedule_is_linear(self):
        mdp = build_chain_with_trigger(3, 1, 10)
        s = EpsilonGreedyStrategy(mdp, BaselineConfig(), total_steps=1000)
        assert s.decay_steps == 100
        assert s.epsilon(0) == 1.0
        assert s.epsilon(50) == pytest.approx(0.525)
        assert s.epsilon(100) == s.epsilon(10_000) == pytest.approx(0.05)

    def test_zero_epsilon_from_optimal_q(self):
        mdp = build_chain_with_trigger(4, 1, 20)
        q_star = standard_value_iteration(mdp)
        cfg = BaselineConfig(**DESK, epsilon_start=0.0, epsilon_end=0.0)
        q, rec = egreedy_q_train(mdp, cfg, 400, seed=0, protocol=EvalProtocol(200, 1),
                                 q=TabularQ(*q_star.shape, values=q_star))
        assert all(e.ret == 1.0 for e in rec.episodes)
        traj = run_episode(mdp, greedy_policy(q.table()), np.random.default_rng(0))
        v_star = mdp.initial_dist @ q_star.max(axis=1)
        assert traj.discounted_return == pytest.approx(v_star, abs=1e-12)

    def test_full_epsilon_is_uniform(self):
        mdp = build_budgeted_shooter(5, 5, 30)
        cfg = BaselineConfig(**DESK, epsilon_start=1.0, epsilon_end=1.0)
        n = 100_000
        _, rec = egreedy_q_train(mdp, cfg, n, seed=1, protocol=EvalProtocol(n, 1))
        counts = sum(e.requested for e in rec.episodes)
        total = counts.sum()
        se = np.sqrt(total * 0.25 * 0.75)
        assert np.all(np.abs(counts - total / 4) < 3 * se)

    @pytest.mark.parametrize("budget", [1, None])
    def test_chain_converges(self, budget):
        mdp = build_chain_with_trigger(4, budget, 20)
        v_star = mdp.initial_dist @ standard_value_iteration(mdp).max(axis=1)
        for seed in range(3):
            q, _ = egreedy_q_train(mdp, BaselineConfig(**DESK), 5000, seed, EvalProtocol(1000, 5))
            v = mdp.initial_dist @ exact_policy_evaluation(mdp, greedy_policy(q.table()))
            assert v >= 0.95 * v_star


class TestSoftQ:
    def test_matches_agent_target_with_uniform_prior(self, rng):
        mdp = build_chain_with_trigger(3, 1, 10)
        s = SoftQStrategy(mdp, BaselineConfig(entropy_coef=0.01))
        q = TabularQ(mdp.num_states, 2, rng.normal(size=(mdp.num_states, 2)))
        b = random_batch(rng, mdp.num_states, 2)
        expected = td_target(b, q, SparsityDistribution.uniform(2), 0.01, mdp.discount)
        np.testing.assert_array_equal(s.targets(b, q), expected)

    def test_vanishing_coefficient_gives_max_target(self, rng):
        mdp = build_chain_with_trigger(3, 1, 10)
        soft = SoftQStrategy(mdp, BaselineConfig(entropy_coef=1e-9))
        hard = EpsilonGreedyStrategy(mdp, BaselineConfig(), 100)
        for _ in range(5):
            q = TabularQ(mdp.num_states, 2, rng.normal(size=(mdp.num_states, 2)))
            b = random_batch(rng, mdp.num_states, 2)
            np.testing.assert_allclose(soft.targets(b, q), hard.targets(b, q), atol=1e-6)

    def test_policy_rows_normalized(self, rng):
        mdp = build_budgeted_shooter(5, 2, 10)
        s = SoftQStrategy(mdp, BaselineConfig())
        q = TabularQ(mdp.num_states, 4, rng.normal(scale=3, size=(mdp.num_states, 4)))
        np.testing.assert_allclose(s.eval_policy(q).sum(axis=1), 1.0, atol=1e-12)

    def test_greedy_sequences_agree_with_hard_max(self):
        mdp = build_chain_with_trigger(4, 1, 20)
        q = TabularQ(mdp.num_states, 2, standard_value_iteration(mdp))
        soft = SoftQStrategy(mdp, BaselineConfig(entropy_coef=1e-9)).eval_policy(q)
        hard = EpsilonGreedyStrategy(mdp, BaselineConfig(), 100).eval_policy(q)
        a = run_episode(mdp, soft, np.random.default_rng(0))
        b = run_episode(mdp, hard, np.random.default_rng(0))
        assert [t.action for t in a.transitions] == [t.action for t in b.transitions]

    def test_trains(self):
        mdp = build_chain_with_trigger(4, 1, 20)
        q, rec = softq_train(mdp, BaselineConfig(**DESK), 3000, 0, EvalProtocol(1000, 3))
        assert len(rec.checkpoints) == 3 and rec.agent == "softq"


class TestPriorPenalty:
    def test_zero_penalty_equals_egreedy(self):
        mdp = build_budgeted_shooter(5, 2, 10)
        cfg = BaselineConfig(**DESK, penalty=0.0)
        _, a = egreedy_q_train(mdp, cfg, 2000, 4, EvalProtocol(1000, 2))
        _, b = prior_penalty_train(mdp, cfg, (3,), 2000, 4, EvalProtocol(1000, 2))
        assert a.episode_rows() == b.episode_rows()

    def test_huge_penalty_suppresses_firing(self):
        mdp = build_budgeted_shooter(5, 5, 30)
        cfg = BaselineConfig(**DESK, penalty=1000.0)
        q, rec = prior_penalty_train(mdp, cfg, (3,), 20_000, 0, EvalProtocol(5000, 10))
        _, _, freq = evaluate(mdp, greedy_policy(q.table()), 50, np.random.default_rng(1))
        assert freq < 0.01
        # the penalty shapes learning only; logged returns are environment rewards
        assert min(e.ret for e in rec.episodes) >= 0.0

    def test_defaults_to_environment_sparse_actions(self):
        mdp = build_budgeted_shooter(5, 2, 10)
        _, rec = prior_penalty_train(mdp, BaselineConfig(**DESK), None, 200, 0, EvalProtocol(100, 1))
        assert rec.agent == "prior_penalty"

    def test_empty_sparse_set_rejected(self):
        mdp = build_budgeted_shooter(5, 2, 10)
        with pytest.raises(ContractError):
            prior_penalty_train(mdp, BaselineConfig(**DESK), (), 100, 0)


@pytest.mark.parametrize("changes", [{"epsilon_start": 1.5}, {"epsilon_end": -0.1},
                                     {"penalty": -1.0}, {"entropy_coef": 0.0}])
def test_config_validation(changes):
    with pytest.raises(ContractError):
        BaselineConfig(**changes).validate()
