"""Sparse-action MDPs: tabular dynamics, per-episode budgets, episode rollouts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

UNLIMITED = -1
_ATOL = 1e-9


class ContractError(ValueError):
    """An operation was called with arguments that break its contract."""


@dataclass(frozen=True, eq=False)
class SparseActionMdp:
    """Tabular MDP plus per-episode execution caps on some actions.

    ``budgets[a] == UNLIMITED`` marks an action without a cap. When a capped
    action is requested with no budget left, ``noop_action`` runs in its place.
    ``inert[s, a]`` marks pairs where ``a`` has no effect at all; those are
    recorded as the no-op and consume no budget.
    """

    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    discount: float
    initial_dist: np.ndarray  # (S,)
    budgets: np.ndarray  # (A,) int, UNLIMITED for no cap
    horizon: int
    noop_action: int = 0
    terminal: np.ndarray | None = None  # (S,) bool, episode ends on entry
    inert: np.ndarray | None = None  # (S, A) bool
    action_names: tuple[str, ...] | None = None
    sparse_actions: tuple[int, ...] = ()
    name: str = "mdp"
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.ascontiguousarray(self.transition, dtype=float)
        r = np.ascontiguousarray(self.reward, dtype=float)
        d0 = np.ascontiguousarray(self.initial_dist, dtype=float)
        budgets = np.asarray(self.budgets, dtype=np.int64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ContractError(f"transition must be (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if r.shape != (S, A):
            raise ContractError(f"reward must be {(S, A)}, got {r.shape}")
        if d0.shape != (S,):
            raise ContractError(f"initial_dist must be ({S},), got {d0.shape}")
        if budgets.shape != (A,):
            raise ContractError(f"budgets must be ({A},), got {budgets.shape}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > _ATOL):
            raise ContractError("transition rows must be distributions")
        if np.any(d0 < 0) or abs(d0.sum() - 1.0) > _ATOL:
            raise ContractError("initial_dist must be a distribution")
        if not np.all(np.isfinite(r)):
            raise ContractError("reward must be finite")
        if not 0.0 <= self.discount < 1.0:
            raise ContractError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any((budgets < 0) & (budgets != UNLIMITED)):
            raise ContractError("budgets must be >= 0 or UNLIMITED")
        if self.horizon < 0:
            raise ContractError("horizon must be non-negative")
        if not 0 <= self.noop_action < A:
            raise ContractError("noop_action out of range")
        if budgets[self.noop_action] != UNLIMITED:
            raise ContractError("the no-op action cannot carry a budget")
        terminal = np.zeros(S, bool) if self.terminal is None else np.asarray(self.terminal, bool)
        inert = np.zeros((S, A), bool) if self.inert is None else np.asarray(self.inert, bool)
        if terminal.shape != (S,) or inert.shape != (S, A):
            raise ContractError("terminal/inert shape mismatch")
        for arr in (P, r, d0, budgets, terminal, inert):
            arr.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "transition", P)
        set_(self, "reward", r)
        set_(self, "initial_dist", d0)
        set_(self, "budgets", budgets)
        set_(self, "terminal", terminal)
        set_(self, "inert", inert)
        set_(self, "discount", float(self.discount))
        set_(self, "horizon", int(self.horizon))
        set_(self, "sparse_actions", tuple(int(a) for a in self.sparse_actions))
        if self.action_names is not None:
            set_(self, "action_names", tuple(self.action_names))
        cum = np.cumsum(P, axis=2)
        cum[..., -1] = 1.0
        cum.setflags(write=False)
        set_(self, "_cum", cum)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def is_sparse_action(self) -> bool:
        """True when at least one action carries a finite budget."""
        return bool(np.any(self.budgets != UNLIMITED))

    def with_updates(self, **changes) -> SparseActionMdp:
        fields = dict(
            transition=self.transition, reward=self.reward, discount=self.discount,
            initial_dist=self.initial_dist, budgets=self.budgets, horizon=self.horizon,
            noop_action=self.noop_action, terminal=self.terminal, inert=self.inert,
            action_names=self.action_names, sparse_actions=self.sparse_actions,
            name=self.name,
        )
        fields.update(changes)
        return SparseActionMdp(**fields)

    def without_budgets(self) -> SparseActionMdp:
        return self.with_updates(budgets=np.full(self.num_actions, UNLIMITED))

    def to_dict(self) -> dict:
        """Plain nested lists/scalars, suitable for TOML/JSON."""
        out = {
            "name": self.name,
            "discount": self.discount,
            "horizon": self.horizon,
            "noop_action": self.noop_action,
            "budgets": self.budgets.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "reward": self.reward.tolist(),
            "transition": self.transition.tolist(),
            "terminal": self.terminal.tolist(),
            "inert": self.inert.tolist(),
            "sparse_actions": list(self.sparse_actions),
        }
        if self.action_names is not None:
            out["action_names"] = list(self.action_names)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SparseActionMdp:
        return cls(
            transition=np.asarray(data["transition"], float),
            reward=np.asarray(data["reward"], float),
            discount=float(data["discount"]),
            initial_dist=np.asarray(data["initial_dist"], float),
            budgets=np.asarray(data["budgets"], np.int64),
            horizon=int(data["horizon"]),
            noop_action=int(data.get("noop_action", 0)),
            terminal=np.asarray(data["terminal"], bool) if "terminal" in data else None,
            inert=np.asarray(data["inert"], bool) if "inert" in data else None,
            action_names=tuple(data["action_names"]) if "action_names" in data else None,
            sparse_actions=tuple(data.get("sparse_actions", ())),
            name=data.get("name", "mdp"),
        )


class BudgetTracker:
    """Remaining executions per action for the current episode."""

    def __init__(self, budgets):
        self.budgets = np.asarray(budgets, dtype=np.int64)
        self.remaining = self.budgets.copy()

    def reset(self):
        self.remaining = self.budgets.copy()

    def available(self, a: int) -> bool:
        b = self.remaining[a]
        return b == UNLIMITED or b > 0

    def consume(self, a: int):
        if self.remaining[a] != UNLIMITED:
            if self.remaining[a] <= 0:
                raise ContractError(f"action {a} has no budget left")
            self.remaining[a] -= 1


@dataclass(frozen=True)
class Transition:
    state: int
    action: int  # executed action
    reward: float
    next_state: int
    done: bool  # entered a terminal state
    t: int
    requested: int = -1


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)
    discount: float = 1.0

    def __len__(self):
        return len(self.transitions)

    @property
    def undiscounted_return(self) -> float:
        return float(sum(tr.reward for tr in self.transitions))

    @property
    def discounted_return(self) -> float:
        return float(sum(self.discount ** tr.t * tr.reward for tr in self.transitions))

    def executed_counts(self, num_actions: int) -> np.ndarray:
        return np.bincount([tr.action for tr in self.transitions], minlength=num_actions)

    def requested_counts(self, num_actions: int) -> np.ndarray:
        return np.bincount([tr.requested for tr in self.transitions], minlength=num_actions)


def _check_index(value, n, what):
    if not (isinstance(value, (int, np.integer)) and 0 <= value < n):
        raise ContractError(f"invalid {what} {value!r} (expected 0..{n - 1})")


def resolve_action(mdp: SparseActionMdp, tracker: BudgetTracker, s: int, a: int) -> int:
    """Action that actually runs when ``a`` is requested in ``s``."""
    if mdp.inert[s, a] or not tracker.available(a):
        return mdp.noop_action
    return a


def step(mdp: SparseActionMdp, tracker: BudgetTracker, s: int, a: int,
         rng: np.random.Generator) -> tuple[float, int, int]:
    """Execute one decision; returns ``(reward, next_state, executed_action)``."""
    _check_index(s, mdp.num_states, "state")
    _check_index(a, mdp.num_actions, "action")
    executed = resolve_action(mdp, tracker, s, a)
    tracker.consume(executed)
    next_state = int(np.searchsorted(mdp._cum[s, executed], rng.random(), side="right"))
    return float(mdp.reward[s, executed]), next_state, executed


Policy = Union[np.ndarray, Callable[[int], np.ndarray]]


def _as_sampler(policy: Policy):
    if callable(policy):
        return policy
    table = np.asarray(policy, dtype=float)
    return lambda s: table[s]


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), len(probs) - 1))


def run_episode(mdp: SparseActionMdp, policy: Policy, rng: np.random.Generator) -> Trajectory:
    """Roll out one episode from ``s0 ~ d0`` until the horizon or a terminal state.

    ``policy`` is either an (S, A) matrix of action probabilities or a callable
    mapping a state to such a row.
    """
    sampler = _as_sampler(policy)
    tracker = BudgetTracker(mdp.budgets)
    traj = Trajectory(discount=mdp.discount)
    if mdp.horizon == 0:
        return traj
    s = sample_action(mdp.initial_dist, rng)
    for t in range(mdp.horizon):
        a = sample_action(sampler(s), rng)
        r, s2, executed = step(mdp, tracker, s, a, rng)
        done = bool(mdp.terminal[s2])
        traj.transitions.append(Transition(s, executed, r, s2, done, t, requested=a))
        s = s2
        if done:
            break
    return traj


def _check_policy(mdp: SparseActionMdp, policy) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.num_states, mdp.num_actions):
        raise ContractError(f"policy must be {(mdp.num_states, mdp.num_actions)}, got {pi.shape}")
    if np.any(pi < -1e-12) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-8):
        raise ContractError("policy rows must be distributions")
    return pi


def policy_dynamics(mdp: SparseActionMdp, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    return r_pi, P_pi


def exact_policy_evaluation(mdp: SparseActionMdp, policy) -> np.ndarray:
    """V^pi of the underlying (budget-free) discounted MDP by a direct linear solve."""
    pi = _check_policy(mdp, policy)
    r_pi, P_pi = policy_dynamics(mdp, pi)
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_pi)


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """One-hot argmax policy, ties to the lowest action index."""
    q = np.asarray(q)
    pi = np.zeros_like(q, dtype=float)
    pi[np.arange(q.shape[0]), np.argmax(q, axis=1)] = 1.0
    return pi
