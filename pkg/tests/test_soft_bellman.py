import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from asre.envs import build_chain_with_trigger
from asre.mdp import ContractError, SparseActionMdp, UNLIMITED, exact_policy_evaluation, greedy_policy
from asre.oracles import best_deterministic_values, naive_regularized_backup
from asre.soft_bellman import (
    NonConvergenceError, SparsityDistribution, extract_regularized_policy, iteration_bound,
    kl_divergence, regularized_bellman_apply, regularized_return, regularized_value_iteration,
    soft_value, standard_bellman_apply, standard_value_iteration, value_gap_bound,
)

from conftest import one_state_mdp, random_mdp

# log(0.5 e + 0.5), evaluated with mpmath at 30 digits
SOFT_VALUE_10 = 0.62011450695827752463


def random_prior(rng, n):
    return SparsityDistribution(rng.dirichlet(np.ones(n)) * 0.98 + 0.02 / n)


class TestSparsityDistribution:
    def test_rejects_zero_entries(self):
        with pytest.raises(ContractError):
            SparsityDistribution(np.array([1.0, 0.0]))

    def test_rejects_unnormalized(self):
        with pytest.raises(ContractError):
            SparsityDistribution(np.array([0.5, 0.6]))


class TestSoftValue:
    def test_zero_row_uniform(self):
        assert soft_value([0.0, 0.0], [0.5, 0.5], 1.0) == 0.0

    @pytest.mark.parametrize("lam", [1e-3, 0.01, 1.0, 50.0])
    def test_constant_row(self, rng, lam):
        prior = random_prior(rng, 4)
        assert soft_value(np.full(4, 3.25), prior, lam) == pytest.approx(3.25, abs=1e-12)

    def test_two_action_value(self):
        assert soft_value([1.0, 0.0], [0.5, 0.5], 1.0) == pytest.approx(SOFT_VALUE_10, abs=1e-12)

    def test_no_overflow_at_small_lambda(self):
        assert soft_value([1000.0, 0.0], [0.5, 0.5], 0.005) == pytest.approx(1000 + 0.005 * math.log(0.5))

    def test_rejects_non_finite(self):
        with pytest.raises(ContractError):
            soft_value([np.inf, 0.0], [0.5, 0.5], 1.0)

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ContractError):
            soft_value([0.0, 0.0], [0.5, 0.5], 0.0)

    @settings(max_examples=300, deadline=None)
    @given(arrays(float, st.integers(1, 6), elements=st.floats(-50, 50)),
           st.floats(1e-3, 10.0), st.integers(0, 2**32 - 1))
    def test_sandwich(self, q, lam, seed):
        prior = random_prior(np.random.default_rng(seed), len(q))
        v = soft_value(q, prior, lam)
        lower = q.max() - lam * math.log(1 / prior.probs.min())
        assert lower - 1e-12 <= v <= q.max() + 1e-12


class TestRegularizedBellman:
    def test_zero_discount_returns_reward(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.0)
        out = regularized_bellman_apply(mdp, rng.normal(size=(3, 2)), [0.5, 0.5], 0.1)
        np.testing.assert_array_equal(out, mdp.reward)

    def test_constant_q_deterministic(self, rng):
        P = np.zeros((3, 2, 3))
        for s in range(3):
            for a in range(2):
                P[s, a, rng.integers(3)] = 1.0
        mdp = SparseActionMdp(P, rng.normal(size=(3, 2)), 0.9, np.full(3, 1 / 3),
                              np.array([UNLIMITED, UNLIMITED]), 5)
        out = regularized_bellman_apply(mdp, np.full((3, 2), 2.5), [0.3, 0.7], 0.05)
        np.testing.assert_allclose(out, mdp.reward + 0.9 * 2.5, atol=1e-12)

    def test_matches_naive_enumeration(self):
        P = np.array([[[0.2, 0.8], [1.0, 0.0]], [[0.5, 0.5], [0.0, 1.0]]])
        r = np.array([[1.0, -0.5], [0.25, 2.0]])
        mdp = SparseActionMdp(P, r, 0.9, np.array([1.0, 0.0]), np.array([UNLIMITED, UNLIMITED]), 5)
        q = np.array([[0.3, -1.2], [2.0, 0.7]])
        prior = np.array([0.35, 0.65])
        for lam in (0.2, 0.5, 1.0):
            np.testing.assert_allclose(regularized_bellman_apply(mdp, q, prior, lam),
                                       naive_regularized_backup(mdp, q, prior, lam), atol=1e-12, rtol=0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ContractError):
            regularized_bellman_apply(random_mdp(rng, 3, 2, 0.5), np.zeros((2, 2)), [0.5, 0.5], 1.0)

    def test_monotone(self, rng):
        for _ in range(200):
            S, A = rng.integers(1, 6), rng.integers(1, 5)
            mdp = random_mdp(rng, S, A, rng.choice([0.5, 0.9, 0.99]))
            prior, lam = random_prior(rng, A), rng.choice([0.005, 0.01, 0.05, 0.2, 1.0])
            q2 = rng.normal(size=(S, A)) * 5
            q1 = q2 + rng.exponential(size=(S, A))
            t1 = regularized_bellman_apply(mdp, q1, prior, lam)
            t2 = regularized_bellman_apply(mdp, q2, prior, lam)
            assert np.all(t1 >= t2)

    def test_contraction(self, rng):
        for _ in range(200):
            S, A = rng.integers(1, 6), rng.integers(1, 5)
            gamma = rng.choice([0.5, 0.9, 0.99])
            mdp = random_mdp(rng, S, A, gamma)
            prior, lam = random_prior(rng, A), rng.choice([0.005, 0.01, 0.05, 0.2, 1.0])
            q1, q2 = rng.normal(size=(2, S, A)) * 5
            lhs = np.max(np.abs(regularized_bellman_apply(mdp, q1, prior, lam)
                                - regularized_bellman_apply(mdp, q2, prior, lam)))
            assert lhs <= gamma * np.max(np.abs(q1 - q2)) + 1e-12


class TestValueIteration:
    def test_single_state_single_action(self):
        q, _ = regularized_value_iteration(one_state_mdp(1.0, 0.5), [1.0], 0.01)
        assert q[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_zero_reward(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.9).with_updates(reward=np.zeros((3, 2)))
        q, it = regularized_value_iteration(mdp, [0.5, 0.5], 0.1)
        np.testing.assert_array_equal(q, 0.0)
        assert it == 1

    def test_fixed_point_and_iteration_bound(self, rng):
        mdp = random_mdp(rng, 3, 2, 0.9)
        prior = SparsityDistribution.uniform(2)
        q, it = regularized_value_iteration(mdp, prior, 0.01, tol=1e-10)
        residual = np.max(np.abs(regularized_bellman_apply(mdp, q, prior, 0.01) - q))
        assert residual <= 1e-10
        r0 = np.max(np.abs(regularized_bellman_apply(mdp, np.zeros((3, 2)), prior, 0.01)))
        assert it <= iteration_bound(0.9, 1e-10, r0)
        q_star = standard_value_iteration(mdp)
        v_soft = soft_value(q, prior, 0.01)
        v_star = q_star.max(axis=1)
        # lambda -> 0 sandwich between the regularized and unregularized optima
        assert np.all(v_soft <= v_star + 1e-9)
        assert np.all(v_soft >= v_star - value_gap_bound(prior, 0.01, 0.9) - 1e-9)

    def test_non_convergence_error(self, rng):
        with pytest.raises(NonConvergenceError) as err:
            regularized_value_iteration(random_mdp(rng, 3, 2, 0.99), [0.5, 0.5], 0.1, max_iters=3)
        assert err.value.residual > 0

    def test_standard_geometric(self):
        assert standard_value_iteration(one_state_mdp(1.0, 0.9))[0, 0] == pytest.approx(10.0, abs=1e-8)

    def test_standard_reward_shift(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.8)
        base = standard_value_iteration(mdp)
        shifted = standard_value_iteration(mdp.with_updates(reward=mdp.reward + 1.5))
        np.testing.assert_allclose(shifted, base + 1.5 / 0.2, atol=1e-8)

    def test_standard_matches_policy_enumeration(self):
        mdp = build_chain_with_trigger(4, 1)
        v = standard_value_iteration(mdp).max(axis=1)
        np.testing.assert_allclose(v, best_deterministic_values(mdp), atol=1e-8)
        assert v[0] == pytest.approx(0.729, abs=1e-9)

    def test_standard_operator_contraction(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.9)
        q1, q2 = rng.normal(size=(2, 4, 3))
        lhs = np.max(np.abs(standard_bellman_apply(mdp, q1) - standard_bellman_apply(mdp, q2)))
        assert lhs <= 0.9 * np.max(np.abs(q1 - q2)) + 1e-12


class TestPolicyExtraction:
    def test_constant_row_returns_prior(self, rng):
        prior = random_prior(rng, 4)
        pi = extract_regularized_policy(np.full((3, 4), -7.0), prior, 0.3)
        np.testing.assert_allclose(pi, np.tile(prior.probs, (3, 1)), atol=1e-15)

    def test_two_action_closed_form(self):
        lam = 0.05
        pi = extract_regularized_policy([[lam * math.log(2), 0.0]], [0.5, 0.5], lam)
        np.testing.assert_allclose(pi[0], [2 / 3, 1 / 3], atol=1e-12)

    def test_near_greedy(self, rng):
        q = rng.normal(size=(10, 4))
        pi = extract_regularized_policy(q, random_prior(rng, 4), 1e-6)
        np.testing.assert_array_equal(pi.argmax(axis=1), q.argmax(axis=1))

    def test_rows_normalized(self, rng):
        q = rng.normal(size=(50, 5)) * 100
        pi = extract_regularized_policy(q, random_prior(rng, 5), 0.005)
        assert np.all(np.abs(pi.sum(axis=1) - 1) <= 1e-12)


class TestKl:
    def test_identity(self):
        assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_point_mass(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)

    def test_zero_support_mismatch(self):
        with pytest.raises(ContractError):
            kl_divergence([0.5, 0.5], [1.0, 0.0])

    def test_gibbs_and_upper_bound(self, rng):
        for _ in range(500):
            n = rng.integers(2, 6)
            p = rng.dirichlet(np.ones(n) * 0.3)
            q = rng.dirichlet(np.ones(n)) + 1e-3
            q /= q.sum()
            d = kl_divergence(p, q)
            assert 0.0 <= d <= np.max(np.log(1 / q)) + 1e-12


class TestRegularizedReturn:
    def test_prior_policy_has_no_penalty(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.9)
        prior = random_prior(rng, 3)
        pi = np.tile(prior.probs, (4, 1))
        np.testing.assert_allclose(regularized_return(mdp, pi, prior, 0.5),
                                   exact_policy_evaluation(mdp, pi), atol=1e-12)

    def test_tiny_lambda(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.9)
        pi = greedy_policy(rng.normal(size=(4, 3)))
        np.testing.assert_allclose(regularized_return(mdp, pi, random_prior(rng, 3), 1e-12),
                                   exact_policy_evaluation(mdp, pi), atol=1e-9)

    def test_optimal_policy_self_consistency(self, rng):
        mdp = random_mdp(rng, 2, 3, 0.9)
        prior, lam = random_prior(rng, 3), 0.3
        q, _ = regularized_value_iteration(mdp, prior, lam)
        pi = extract_regularized_policy(q, prior, lam)
        np.testing.assert_allclose(regularized_return(mdp, pi, prior, lam),
                                   soft_value(q, prior, lam), atol=1e-8)

    def test_value_discrepancy_bound(self, rng):
        for _ in range(50):
            S, A = rng.integers(1, 5), rng.integers(2, 4)
            gamma = rng.choice([0.5, 0.9])
            mdp = random_mdp(rng, S, A, gamma)
            best = best_deterministic_values(mdp)
            for lam in (0.005, 0.01, 0.05, 0.2):
                prior = random_prior(rng, A)
                q, _ = regularized_value_iteration(mdp, prior, lam)
                v_reg = exact_policy_evaluation(mdp, extract_regularized_policy(q, prior, lam))
                assert np.all(v_reg >= best - value_gap_bound(prior, lam, gamma) - 1e-8)
