"""ASRE: bandit-driven sparsity evaluation plus KL-to-prior regularized Q-learning."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .bandit import DEFAULT_C, DEFAULT_GAMMA_TILDE, DUcbState
from .learner import (
    Batch, EvalProtocol, LearnerConfig, LinearQ, ReplayBuffer, Strategy, TabularQ, as_batch,
    polyak_update, q_update, run_learner,
)
from .mdp import ContractError, SparseActionMdp, greedy_policy
from .records import RunRecord
from .soft_bellman import DEFAULT_LAMBDA, SparsityDistribution, extract_regularized_policy, soft_value

__all__ = [
    "AgentConfig", "ConstraintPrior", "ReplayBuffer", "TabularQ", "LinearQ", "AsreStrategy",
    "behavior_policy", "sparsity_distribution", "td_target", "q_update", "polyak_update",
    "train", "extract_policy", "TrainResult",
]


@dataclass(frozen=True)
class ConstraintPrior:
    """Action prior giving ``delta`` to the constrained action and the rest evenly."""

    num_actions: int
    constrained_action: int
    delta: float

    def __post_init__(self):
        A = self.num_actions
        if A < 2:
            raise ContractError("constraint prior needs at least two actions")
        if not 0 <= self.constrained_action < A:
            raise ContractError("constrained action out of range")
        if not 0 < self.delta < 1 / A:
            raise ContractError(f"delta must lie in (0, 1/{A}), got {self.delta}")

    @property
    def probs(self) -> np.ndarray:
        d = np.full(self.num_actions, (1 - self.delta) / (self.num_actions - 1))
        d[self.constrained_action] = self.delta
        return d


def default_delta(num_actions: int) -> float:
    return 1.0 / (8 * num_actions)


def behavior_policy(q_row, prior, temperature: float = 1.0) -> np.ndarray:
    """Constrained Boltzmann policy: prior(a) * exp(Q(s, a) / temperature), normalized.

    ``q_row`` is the action-value vector of the current state.
    """
    q_row = np.asarray(q_row, dtype=float)
    d = prior.probs if hasattr(prior, "probs") else np.asarray(prior, dtype=float)
    w = d * np.exp((q_row - q_row.max()) / temperature)
    return w / w.sum()


def sparsity_distribution(mu) -> SparsityDistribution:
    """Softmax over the negated bandit means."""
    mu = np.asarray(mu, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ContractError("every arm must be pulled before building the sparsity distribution")
    logits = np.maximum(-(mu - mu.min()), -700.0)
    w = np.exp(logits)
    return SparsityDistribution(w / w.sum())


def td_target(batch, q_target, prior, lam: float, gamma: float) -> np.ndarray:
    """y = r + gamma * lam * log E_{a'~prior} exp(Q_target(s', a') / lam); no bootstrap when done."""
    b = as_batch(batch)
    if len(b.rewards) == 0:
        raise ContractError("empty batch")
    nxt = q_target.values(b.next_states)
    cont = soft_value(nxt, prior, lam)
    return b.rewards + gamma * np.where(b.dones, 0.0, cont)


def extract_policy(q, prior, lam: float) -> np.ndarray:
    table = q.table() if hasattr(q, "table") else np.asarray(q)
    return extract_regularized_policy(table, prior, lam)


@dataclass
class AgentConfig(LearnerConfig):
    lam: float = DEFAULT_LAMBDA
    eval_episodes: int = 30  # episodes per bandit round
    delta: float | None = None  # None: 1 / (8 |A|)
    c: float = DEFAULT_C
    gamma_tilde: float = DEFAULT_GAMMA_TILDE
    normalize_bandit_reward: bool = False
    behavior_temperature: str = "unit"  # "unit" as printed, or "lambda"
    bandit_reward: str = "undiscounted"  # or "discounted"
    regularize: bool = True  # False: max backup and greedy extraction (ablation)
    greedy_eval: bool = False
    frozen_prior: tuple[float, ...] | None = None  # fixes p~ and disables the bandit

    def validate(self):
        super().validate()
        if not self.lam > 0:
            raise ContractError("lam must be > 0")
        if self.eval_episodes < 1:
            raise ContractError("eval_episodes must be >= 1")
        if self.behavior_temperature not in ("unit", "lambda"):
            raise ContractError("behavior_temperature must be 'unit' or 'lambda'")
        if self.bandit_reward not in ("undiscounted", "discounted"):
            raise ContractError("bandit_reward must be 'undiscounted' or 'discounted'")

    def to_dict(self) -> dict:
        return asdict(self)


class AsreStrategy(Strategy):
    name = "asre"

    def __init__(self, mdp: SparseActionMdp, config: AgentConfig):
        super().__init__(mdp)
        A = mdp.num_actions
        if A < 2:
            raise ContractError("ASRE needs at least two actions")
        self.config = config
        self.delta = default_delta(A) if config.delta is None else config.delta
        self.bandit = DUcbState(A, config.c, config.gamma_tilde, config.normalize_bandit_reward)
        self.frozen = config.frozen_prior is not None
        prior = (SparsityDistribution(np.asarray(config.frozen_prior, float)) if self.frozen
                 else SparsityDistribution.uniform(A))
        self.prior = prior
        self.ptilde = prior.probs.copy()
        self.temperature = 1.0 if config.behavior_temperature == "unit" else config.lam
        self.arm: int | None = None
        self.constraint: np.ndarray | None = None
        self._round: list[float] = []
        self.arm_history: list[int] = []

    def start_episode(self, step_count):
        if self.frozen:
            if self.constraint is None:
                self.constraint = self.prior.probs
            return
        if not self._round:
            self.arm = self.bandit.select_arm()
            self.arm_history.append(self.arm)
            self.constraint = ConstraintPrior(self.mdp.num_actions, self.arm, self.delta).probs

    def behavior(self, q_row, step_count):
        w = self.constraint * np.exp((q_row - q_row.max()) / self.temperature)
        return w / w.sum()

    def targets(self, batch: Batch, q_target):
        if self.config.regularize:
            return td_target(batch, q_target, self.prior, self.config.lam, self.mdp.discount)
        nxt = q_target.values(batch.next_states).max(axis=1)
        return batch.rewards + self.mdp.discount * np.where(batch.dones, 0.0, nxt)

    def end_episode(self, undiscounted, discounted):
        if self.frozen:
            return
        self._round.append(undiscounted if self.config.bandit_reward == "undiscounted" else discounted)
        if len(self._round) == self.config.eval_episodes:
            self.bandit.update(self.arm, float(np.mean(self._round)))
            self._round = []
            self.mu = self.bandit.means
            if self.bandit.pulled.all():
                self.prior = sparsity_distribution(self.mu)
                self.ptilde = self.prior.probs.copy()

    def eval_policy(self, q):
        table = q.table()
        if not self.config.regularize or self.config.greedy_eval:
            return greedy_policy(table)
        return extract_regularized_policy(table, self.prior, self.config.lam)


@dataclass
class TrainResult:
    q: object
    prior: SparsityDistribution
    record: RunRecord
    strategy: Strategy

    def __iter__(self):
        return iter((self.q, self.prior, self.record))


def train(mdp: SparseActionMdp, config: AgentConfig | None = None, total_steps: int = 50_000,
          seed: int = 0, protocol: EvalProtocol | None = None,
          record_walltime: bool = False) -> TrainResult:
    config = config or AgentConfig()
    config.validate()
    strategy = AsreStrategy(mdp, config)
    q, record = run_learner(mdp, strategy, config, total_steps, seed, protocol,
                            record_walltime=record_walltime)
    return TrainResult(q, strategy.prior, record, strategy)
