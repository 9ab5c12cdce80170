"""Slow, independent reference computations used to check the fast solvers.

Nothing here imports the solvers it is meant to check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .mdp import BudgetTracker, SparseActionMdp, resolve_action


def naive_regularized_backup(mdp: SparseActionMdp, q, prior, lam: float) -> np.ndarray:
    """Regularized Bellman backup by explicit loops over (s, a, s', a'), no max shift."""
    S, A = mdp.num_states, mdp.num_actions
    out = np.zeros((S, A))
    for s in range(S):
        for a in range(A):
            cont = 0.0
            for s2 in range(S):
                inner = 0.0
                for a2 in range(A):
                    inner += prior[a2] * math.exp(q[s2][a2] / lam)
                cont += mdp.transition[s, a, s2] * lam * math.log(inner)
            out[s, a] = mdp.reward[s, a] + mdp.discount * cont
    return out


def _evaluate_deterministic(mdp: SparseActionMdp, actions) -> np.ndarray:
    S = mdp.num_states
    idx = np.arange(S)
    P = mdp.transition[idx, actions]
    r = mdp.reward[idx, actions]
    return np.linalg.solve(np.eye(S) - mdp.discount * P, r)


def best_deterministic_values(mdp: SparseActionMdp, max_policies: int = 1 << 20) -> np.ndarray:
    """Pointwise max of V^pi over every deterministic stationary policy."""
    S, A = mdp.num_states, mdp.num_actions
    if A ** S > max_policies:
        raise ValueError(f"{A}^{S} policies is too many to enumerate")
    best = np.full(S, -np.inf)
    for actions in itertools.product(range(A), repeat=S):
        best = np.maximum(best, _evaluate_deterministic(mdp, np.array(actions)))
    return best


def finite_horizon_values(mdp: SparseActionMdp, horizon: int) -> np.ndarray:
    """Optimal expected discounted return over exactly ``horizon`` steps (backward induction)."""
    v = np.zeros(mdp.num_states)
    for _ in range(horizon):
        v = np.max(mdp.reward + mdp.discount * mdp.transition @ v, axis=1)
        v = np.where(mdp.terminal, 0.0, v)
    return v


def best_action_sequence(mdp: SparseActionMdp, start: int, horizon: int):
    """Brute force over all open-loop action sequences in a deterministic MDP.

    Budgets are enforced through the same substitution rule as episode rollouts.
    Returns (best discounted return, best sequence).
    """
    if np.any((mdp.transition > 0) & (mdp.transition < 1)):
        raise ValueError("sequence enumeration needs deterministic transitions")
    best, best_seq = -np.inf, None
    for seq in itertools.product(range(mdp.num_actions), repeat=horizon):
        tracker = BudgetTracker(mdp.budgets)
        s, total = start, 0.0
        for t, a in enumerate(seq):
            ex = resolve_action(mdp, tracker, s, a)
            tracker.consume(ex)
            total += mdp.discount ** t * mdp.reward[s, ex]
            s = int(np.argmax(mdp.transition[s, ex]))
            if mdp.terminal[s]:
                break
        if total > best:
            best, best_seq = total, seq
    return best, best_seq
