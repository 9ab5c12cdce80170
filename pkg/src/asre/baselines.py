"""Reference learners: epsilon-greedy Q-learning, uniform-prior soft Q, prior penalty."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .agent import td_target
from .learner import Batch, EvalProtocol, LearnerConfig, Strategy, run_learner
from .mdp import ContractError, SparseActionMdp, greedy_policy
from .soft_bellman import SparsityDistribution, extract_regularized_policy


@dataclass
class BaselineConfig(LearnerConfig):
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.1  # of total steps, used when decay_steps is None
    epsilon_decay_steps: int | None = None
    entropy_coef: float = 0.05
    penalty: float = 0.1

    def validate(self):
        super().validate()
        if not (0 <= self.epsilon_start <= 1 and 0 <= self.epsilon_end <= 1):
            raise ContractError("epsilon must lie in [0, 1]")
        if self.penalty < 0:
            raise ContractError("penalty must be >= 0")
        if not self.entropy_coef > 0:
            raise ContractError("entropy_coef must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


class EpsilonGreedyStrategy(Strategy):
    name = "egreedy"

    def __init__(self, mdp: SparseActionMdp, config: BaselineConfig, total_steps: int):
        super().__init__(mdp)
        self.config = config
        decay = config.epsilon_decay_steps
        self.decay_steps = max(1, int(round(config.epsilon_decay_fraction * total_steps))
                               if decay is None else decay)
        self._uniform = np.full(mdp.num_actions, 1.0 / mdp.num_actions)

    def epsilon(self, step_count: int) -> float:
        frac = min(step_count / self.decay_steps, 1.0)
        c = self.config
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def behavior(self, q_row, step_count):
        eps = self.epsilon(step_count)
        probs = eps * self._uniform
        probs[int(np.argmax(q_row))] += 1.0 - eps
        return probs

    def targets(self, batch: Batch, q_target):
        nxt = q_target.values(batch.next_states).max(axis=1)
        return batch.rewards + self.mdp.discount * np.where(batch.dones, 0.0, nxt)

    def eval_policy(self, q):
        return greedy_policy(q.table())


class PriorPenaltyStrategy(EpsilonGreedyStrategy):
    name = "prior_penalty"

    def __init__(self, mdp, config, total_steps, sparse_action_set):
        super().__init__(mdp, config, total_steps)
        if not sparse_action_set:
            raise ContractError("prior penalty needs a non-empty sparse action set")
        self.penalized = np.zeros(mdp.num_actions, bool)
        self.penalized[list(sparse_action_set)] = True

    def learning_reward(self, reward, executed):
        return reward - self.config.penalty if self.penalized[executed] else reward


class SoftQStrategy(Strategy):
    """Max-entropy learner: soft backup with a uniform prior, samples its own policy."""

    name = "softq"

    def __init__(self, mdp: SparseActionMdp, config: BaselineConfig):
        super().__init__(mdp)
        self.config = config
        self.prior = SparsityDistribution.uniform(mdp.num_actions)

    def behavior(self, q_row, step_count):
        return extract_regularized_policy(q_row[None, :], self.prior, self.config.entropy_coef)[0]

    def targets(self, batch, q_target):
        return td_target(batch, q_target, self.prior, self.config.entropy_coef, self.mdp.discount)

    def eval_policy(self, q):
        return extract_regularized_policy(q.table(), self.prior, self.config.entropy_coef)


def egreedy_q_train(mdp, config: BaselineConfig | None = None, total_steps: int = 50_000,
                    seed: int = 0, protocol: EvalProtocol | None = None, q=None,
                    record_walltime: bool = False):
    config = config or BaselineConfig()
    config.validate()
    strategy = EpsilonGreedyStrategy(mdp, config, total_steps)
    return run_learner(mdp, strategy, config, total_steps, seed, protocol, q=q,
                       record_walltime=record_walltime)


def softq_train(mdp, config: BaselineConfig | None = None, total_steps: int = 50_000,
                seed: int = 0, protocol: EvalProtocol | None = None, q=None,
                record_walltime: bool = False):
    config = config or BaselineConfig()
    config.validate()
    return run_learner(mdp, SoftQStrategy(mdp, config), config, total_steps, seed, protocol,
                       q=q, record_walltime=record_walltime)


def prior_penalty_train(mdp, config: BaselineConfig | None = None, sparse_action_set=None,
                        total_steps: int = 50_000, seed: int = 0,
                        protocol: EvalProtocol | None = None, q=None,
                        record_walltime: bool = False):
    config = config or BaselineConfig()
    config.validate()
    sparse = tuple(mdp.sparse_actions if sparse_action_set is None else sparse_action_set)
    strategy = PriorPenaltyStrategy(mdp, config, total_steps, sparse)
    return run_learner(mdp, strategy, config, total_steps, seed, protocol, q=q,
                       record_walltime=record_walltime)
