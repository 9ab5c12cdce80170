"""Off-policy Q-learning machinery shared by ASRE and the baseline agents.

A learner is the common loop (replay, per-step gradient step, Polyak target,
periodic evaluation); a strategy supplies the behaviour policy, the TD target
and the evaluation policy.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mdp import BudgetTracker, ContractError, SparseActionMdp, run_episode, sample_action, step
from .records import CheckpointRow, EpisodeRow, RunRecord


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    @classmethod
    def from_transitions(cls, transitions) -> Batch:
        return cls(
            np.array([t.state for t in transitions], dtype=np.int64),
            np.array([t.action for t in transitions], dtype=np.int64),
            np.array([t.reward for t in transitions], dtype=float),
            np.array([t.next_state for t in transitions], dtype=np.int64),
            np.array([t.done for t in transitions], dtype=bool),
        )


def as_batch(batch) -> Batch:
    return batch if isinstance(batch, Batch) else Batch.from_transitions(batch)


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._s = np.zeros(capacity, np.int64)
        self._a = np.zeros(capacity, np.int64)
        self._r = np.zeros(capacity)
        self._s2 = np.zeros(capacity, np.int64)
        self._d = np.zeros(capacity, bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, s, a, r, s2, done):
        i = self._next
        self._s[i], self._a[i], self._r[i], self._s2[i], self._d[i] = s, a, r, s2, done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])


class TabularQ:
    """Q as an explicit (S, A) table; ``theta`` is the table itself."""

    def __init__(self, num_states: int, num_actions: int, values=None):
        self.theta = (np.zeros((num_states, num_actions)) if values is None
                      else np.array(values, dtype=float))

    @property
    def shape(self):
        return self.theta.shape

    def table(self) -> np.ndarray:
        return self.theta

    def row(self, s: int) -> np.ndarray:
        return self.theta[s]

    def values(self, states) -> np.ndarray:
        return self.theta[states]

    def copy(self) -> TabularQ:
        return TabularQ(*self.theta.shape, values=self.theta)

    def loss(self, batch: Batch, targets) -> float:
        err = self.theta[batch.states, batch.actions] - targets
        return 0.5 * float(np.mean(err ** 2))

    def gradient_step(self, batch: Batch, targets, lr: float):
        # step each visited entry toward the mean target of its occurrences
        S, A = self.theta.shape
        flat = batch.states * A + batch.actions
        err = self.theta.ravel()[flat] - targets
        counts = np.bincount(flat, minlength=S * A)
        sums = np.bincount(flat, weights=err, minlength=S * A)
        hit = counts > 0
        self.theta.ravel()[hit] -= lr * sums[hit] / counts[hit]


class LinearQ:
    """Q(s, a) = <theta[a], phi(s)> with a fixed feature matrix ``phi`` (S, F)."""

    def __init__(self, features, num_actions: int, theta=None):
        self.features = np.asarray(features, dtype=float)
        self.theta = (np.zeros((num_actions, self.features.shape[1])) if theta is None
                      else np.array(theta, dtype=float))

    @classmethod
    def one_hot(cls, num_states: int, num_actions: int) -> LinearQ:
        return cls(np.eye(num_states), num_actions)

    @property
    def shape(self):
        return self.features.shape[0], self.theta.shape[0]

    def table(self) -> np.ndarray:
        return self.features @ self.theta.T

    def row(self, s: int) -> np.ndarray:
        return self.theta @ self.features[s]

    def values(self, states) -> np.ndarray:
        return self.features[states] @ self.theta.T

    def copy(self) -> LinearQ:
        return LinearQ(self.features, self.theta.shape[0], theta=self.theta)

    def loss(self, batch: Batch, targets) -> float:
        phi = self.features[batch.states]
        q = np.einsum("ij,ij->i", phi, self.theta[batch.actions])
        return 0.5 * float(np.mean((q - targets) ** 2))

    def gradient(self, batch: Batch, targets) -> np.ndarray:
        phi = self.features[batch.states]
        err = np.einsum("ij,ij->i", phi, self.theta[batch.actions]) - targets
        grad = np.zeros_like(self.theta)
        np.add.at(grad, batch.actions, err[:, None] * phi)
        return grad / len(targets)

    def gradient_step(self, batch: Batch, targets, lr: float):
        self.theta -= lr * self.gradient(batch, targets)


def make_q(mdp: SparseActionMdp, representation: str = "tabular"):
    if representation == "tabular":
        return TabularQ(mdp.num_states, mdp.num_actions)
    if representation in ("linear", "linear-features"):
        return LinearQ.one_hot(mdp.num_states, mdp.num_actions)
    raise ContractError(f"unknown Q representation {representation!r}")


def q_update(q, batch, targets, lr: float):
    """One gradient step on J = 1/(2m) sum (Q(s_i, a_i) - y_i)^2; mutates and returns ``q``."""
    q.gradient_step(as_batch(batch), np.asarray(targets, dtype=float), lr)
    return q


def polyak_update(online, target, eta: float):
    """target <- eta * online + (1 - eta) * target, in place."""
    if not 0 < eta <= 1:
        raise ContractError("Polyak step must lie in (0, 1]")
    target.theta *= 1.0 - eta
    target.theta += eta * online.theta
    return target


@dataclass
class LearnerConfig:
    learn_rate: float = 0.001
    polyak: float = 0.005
    batch_size: int = 256
    buffer_size: int = 400_000
    q_representation: str = "tabular"
    bootstrap_on_truncation: bool = True

    def validate(self):
        if not (self.learn_rate > 0 and self.batch_size > 0 and self.buffer_size > 0):
            raise ContractError("learn_rate, batch_size and buffer_size must be positive")
        if not 0 < self.polyak <= 1:
            raise ContractError("polyak must lie in (0, 1]")
        if self.batch_size > self.buffer_size:
            raise ContractError("batch_size cannot exceed buffer_size")


@dataclass(frozen=True)
class EvalProtocol:
    """Checkpoint evaluation: ``episodes`` rollouts every ``interval`` training steps."""

    interval: int = 5000
    episodes: int = 20


class Strategy:
    """Defaults for a plain learner; subclasses override what differs."""

    name = "base"

    def __init__(self, mdp: SparseActionMdp):
        self.mdp = mdp
        A = mdp.num_actions
        self.ptilde = np.full(A, 1.0 / A)
        self.mu = np.full(A, np.nan)

    def start_episode(self, step_count: int):
        pass

    def behavior(self, q_row: np.ndarray, step_count: int) -> np.ndarray:
        raise NotImplementedError

    def learning_reward(self, reward: float, executed: int) -> float:
        return reward

    def targets(self, batch: Batch, q_target) -> np.ndarray:
        raise NotImplementedError

    def end_episode(self, undiscounted: float, discounted: float):
        pass

    def eval_policy(self, q) -> np.ndarray:
        raise NotImplementedError


def evaluate(mdp: SparseActionMdp, policy: np.ndarray, episodes: int,
             rng: np.random.Generator) -> tuple[float, float, float]:
    """Mean and std of undiscounted returns, plus sparse-action execution frequency."""
    returns, sparse, total = [], 0, 0
    for _ in range(episodes):
        traj = run_episode(mdp, policy, rng)
        returns.append(traj.undiscounted_return)
        counts = traj.executed_counts(mdp.num_actions)
        sparse += int(counts[list(mdp.sparse_actions)].sum()) if mdp.sparse_actions else 0
        total += len(traj)
    freq = sparse / total if total else 0.0
    return float(np.mean(returns)), float(np.std(returns)), freq


def run_learner(mdp: SparseActionMdp, strategy: Strategy, config: LearnerConfig,
                total_steps: int, seed: int, protocol: EvalProtocol | None = None,
                q=None, record_walltime: bool = False):
    """Train for ``total_steps`` environment steps. Returns (q, RunRecord)."""
    config.validate()
    if total_steps <= 0:
        raise ContractError("total_steps must be positive")
    if mdp.horizon < 1:
        raise ContractError("training needs a horizon of at least one step")
    protocol = protocol or EvalProtocol()
    env_ss, eval_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(env_ss)
    eval_rng = np.random.default_rng(eval_ss)

    q = make_q(mdp, config.q_representation) if q is None else q
    q_target = q.copy()
    buffer = ReplayBuffer(config.buffer_size)
    record = RunRecord(mdp.num_actions, mdp.sparse_actions, agent=strategy.name, seed=seed)
    A = mdp.num_actions
    gamma = mdp.discount
    tracker = BudgetTracker(mdp.budgets)
    start = time.perf_counter()
    steps = 0
    episode = 0
    while steps < total_steps:
        strategy.start_episode(steps)
        tracker.reset()
        s = sample_action(mdp.initial_dist, rng)
        requested = np.zeros(A, np.int64)
        executed = np.zeros(A, np.int64)
        ret = disc_ret = 0.0
        completed = False
        for t in range(mdp.horizon):
            a = sample_action(strategy.behavior(q.row(s), steps), rng)
            r, s2, ea = step(mdp, tracker, s, a, rng)
            done = bool(mdp.terminal[s2])
            last = t == mdp.horizon - 1
            stop = done or (last and not config.bootstrap_on_truncation)
            # the learner cannot see budgets, so it learns what requesting ``a`` led to
            buffer.add(s, a, strategy.learning_reward(r, ea), s2, stop)
            requested[a] += 1
            executed[ea] += 1
            ret += r
            disc_ret += gamma ** t * r
            steps += 1
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size, rng)
                y = strategy.targets(batch, q_target)
                q.gradient_step(batch, y, config.learn_rate)
                polyak_update(q, q_target, config.polyak)
            if steps % protocol.interval == 0:
                mean, std, freq = evaluate(mdp, strategy.eval_policy(q), protocol.episodes, eval_rng)
                record.checkpoints.append(
                    CheckpointRow(len(record.checkpoints), steps, mean, std, freq))
            s = s2
            if done or last:
                completed = True
                break
            if steps >= total_steps:
                break
        if completed:
            wall = (time.perf_counter() - start) * 1000 if record_walltime else 0.0
            record.episodes.append(EpisodeRow(
                episode, steps, ret, requested, executed,
                strategy.ptilde.copy(), strategy.mu.copy(), wall))
            episode += 1
            strategy.end_episode(ret, disc_ret)
    return q, record
