"""KL-to-prior regularized Bellman operators and exact solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ContractError, SparseActionMdp, _check_policy, exact_policy_evaluation, policy_dynamics

DEFAULT_LAMBDA = 0.01
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
_LINEAR_SOLVE_LIMIT = 10_000


class NonConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SparsityDistribution:
    """Strictly positive prior over actions."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(~np.isfinite(p)) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ContractError(f"sparsity distribution must be strictly positive and sum to 1: {p}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, num_actions: int) -> SparsityDistribution:
        return cls(np.full(num_actions, 1.0 / num_actions))

    def __len__(self):
        return len(self.probs)


def _probs(prior) -> np.ndarray:
    return prior.probs if isinstance(prior, SparsityDistribution) else np.asarray(prior, dtype=float)


def _check_lambda(lam: float):
    if not lam > 0:
        raise ContractError(f"regularization coefficient must be > 0, got {lam}")


def soft_value(q, prior, lam: float) -> np.ndarray | float:
    """lam * log sum_a prior(a) exp(q[a] / lam) over the last axis, max-shifted."""
    _check_lambda(lam)
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ContractError("soft_value requires finite inputs")
    p = _probs(prior)
    m = q.max(axis=-1, keepdims=True)
    out = m[..., 0] + lam * np.log(np.sum(p * np.exp((q - m) / lam), axis=-1))
    return float(out) if out.ndim == 0 else out


def regularized_bellman_apply(mdp: SparseActionMdp, q, prior, lam: float) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.num_states, mdp.num_actions):
        raise ContractError(f"Q must be {(mdp.num_states, mdp.num_actions)}, got {q.shape}")
    v = soft_value(q, prior, lam)
    return mdp.reward + mdp.discount * (mdp.transition @ v)


def standard_bellman_apply(mdp: SparseActionMdp, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return mdp.reward + mdp.discount * (mdp.transition @ q.max(axis=1))


def _iterate(apply, shape, tol, max_iters):
    if not tol > 0:
        raise ContractError("tol must be > 0")
    q = np.zeros(shape)
    residual = np.inf
    for it in range(1, max_iters + 1):
        q_next = apply(q)
        residual = float(np.max(np.abs(q_next - q)))
        q = q_next
        if residual <= tol:
            # residual of the returned iterate is at most gamma * residual
            return q, it
    raise NonConvergenceError(residual, max_iters)


def regularized_value_iteration(mdp: SparseActionMdp, prior, lam: float = DEFAULT_LAMBDA,
                                tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    """Fixed point of the regularized operator from Q0 = 0. Returns (Q, iterations)."""
    return _iterate(lambda q: regularized_bellman_apply(mdp, q, prior, lam),
                    (mdp.num_states, mdp.num_actions), tol, max_iters)


def standard_value_iteration(mdp: SparseActionMdp, tol: float = DEFAULT_TOL,
                             max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    q, _ = _iterate(lambda q: standard_bellman_apply(mdp, q),
                    (mdp.num_states, mdp.num_actions), tol, max_iters)
    return q


def iteration_bound(gamma: float, tol: float, initial_residual: float) -> int:
    """Upper bound on value-iteration steps implied by gamma-contraction."""
    if initial_residual <= tol:
        return 1
    return int(np.ceil(np.log(tol * (1 - gamma) / initial_residual) / np.log(gamma))) + 1


def extract_regularized_policy(q, prior, lam: float) -> np.ndarray:
    """pi(a|s) proportional to prior(a) * exp(Q[s, a] / lam)."""
    _check_lambda(lam)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    logits = (q - q.max(axis=1, keepdims=True)) / lam
    w = _probs(prior) * np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    if np.any(q[support] <= 0):
        raise ContractError("q must be positive wherever p is")
    return float(max(np.sum(p[support] * np.log(p[support] / q[support])), 0.0))


def kl_rows(pi: np.ndarray, prior) -> np.ndarray:
    return np.array([kl_divergence(row, _probs(prior)) for row in pi])


def regularized_return(mdp: SparseActionMdp, policy, prior, lam: float) -> np.ndarray:
    """V^pi of the KL-penalized objective (per-step reward r - lam * KL(pi(.|s), prior))."""
    _check_lambda(lam)
    pi = _check_policy(mdp, policy)
    r_pi, P_pi = policy_dynamics(mdp, pi)
    r_reg = r_pi - lam * kl_rows(pi, prior)
    if mdp.num_states * mdp.num_actions <= _LINEAR_SOLVE_LIMIT:
        return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_reg)
    v = np.zeros(mdp.num_states)
    for _ in range(DEFAULT_MAX_ITERS):
        v_next = r_reg + mdp.discount * P_pi @ v
        if np.max(np.abs(v_next - v)) <= DEFAULT_TOL:
            return v_next
        v = v_next
    raise NonConvergenceError(float(np.max(np.abs(v_next - v))), DEFAULT_MAX_ITERS)


def value_gap_bound(prior, lam: float, gamma: float) -> float:
    """lam * max_a log(1 / prior(a)) / (1 - gamma)."""
    return lam * float(np.max(-np.log(_probs(prior)))) / (1 - gamma)


__all__ = [
    "DEFAULT_LAMBDA", "NonConvergenceError", "SparsityDistribution", "exact_policy_evaluation",
    "extract_regularized_policy", "iteration_bound", "kl_divergence", "regularized_bellman_apply",
    "regularized_return", "regularized_value_iteration", "soft_value", "standard_bellman_apply",
    "standard_value_iteration", "value_gap_bound",
]
