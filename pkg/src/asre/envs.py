"""Synthetic sparse-action environments, each built as a SparseActionMdp."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import UNLIMITED, ContractError, SparseActionMdp

MAX_STATES = 1_000_000


def _guard_size(num_states: int):
    if num_states > MAX_STATES:
        raise ContractError(f"{num_states} states exceeds the {MAX_STATES} limit")


def build_budgeted_shooter(width: int, budget: int | None = 5, horizon: int = 30, *,
                           move_prob: float = 0.7, hit_reward: float = 1.0,
                           discount: float = 0.9) -> SparseActionMdp:
    """Agent on a 1-D track shooting at a target that cycles rightward.

    Actions are (noop, left, right, fire). The target advances one cell (with
    wrap-around) with probability ``move_prob`` each step. Firing always spends
    a bullet and pays ``hit_reward`` only when agent and target share a cell.
    Bullets used are part of the state; ``budget=None`` drops the cap.
    """
    if width < 3:
        raise ContractError("width must be >= 3")
    if budget is not None and budget < 1:
        raise ContractError("budget must be >= 1")
    if not 0 <= move_prob <= 1:
        raise ContractError("move_prob must lie in [0, 1]")
    levels = 1 if budget is None else budget + 1
    S = width * width * levels
    _guard_size(S)
    A = 4
    NOOP, LEFT, RIGHT, FIRE = range(A)

    def index(p, q, u):
        return (p * width + q) * levels + u

    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    inert = np.zeros((S, A), bool)
    for p in range(width):
        for q in range(width):
            q_moves = [((q + 1) % width, move_prob), (q, 1.0 - move_prob)]
            for u in range(levels):
                s = index(p, q, u)
                for a in range(A):
                    p2, u2 = p, u
                    if a == LEFT:
                        p2 = max(p - 1, 0)
                    elif a == RIGHT:
                        p2 = min(p + 1, width - 1)
                    elif a == FIRE:
                        if budget is not None and u == budget:
                            inert[s, a] = True
                        else:
                            R[s, a] = hit_reward if p == q else 0.0
                            u2 = u + 1 if budget is not None else u
                    for q2, w in q_moves:
                        P[s, a, index(p2, q2, u2)] += w
    d0 = np.zeros(S)
    d0[index(0, width - 1, 0)] = 1.0
    budgets = np.array([UNLIMITED, UNLIMITED, UNLIMITED, UNLIMITED if budget is None else budget])
    return SparseActionMdp(
        transition=P, reward=R, discount=discount, initial_dist=d0, budgets=budgets,
        horizon=horizon, noop_action=NOOP, inert=inert,
        action_names=("noop", "left", "right", "fire"), sparse_actions=(FIRE,),
        name="budgeted_shooter",
    )


def shooter_state(width: int, budget: int | None, p: int, q: int, u: int = 0) -> int:
    levels = 1 if budget is None else budget + 1
    return (p * width + q) * levels + u


def market_price_chain(price_levels: int, seed: int = 0, *, reversion: float = 0.6,
                       stay: float = 0.2, jitter: float = 0.1) -> np.ndarray:
    """Mean-reverting random walk over price levels, perturbed from ``seed``."""
    rng = np.random.default_rng(seed)
    L = price_levels
    mid = (L - 1) / 2
    T = np.zeros((L, L))
    for i in range(L):
        up = 0.5 + reversion * (mid - i) / max(L - 1, 1) + rng.uniform(-jitter, jitter)
        up = float(np.clip(up, 0.05, 0.95))
        move = 1.0 - stay
        T[i, i] += stay
        T[i, min(i + 1, L - 1)] += move * up
        T[i, max(i - 1, 0)] += move * (1 - up)
    return T


def build_synthetic_market(price_levels: int, trade_budget: int | None = 30, fee: float = 0.2,
                           horizon: int = 400, *, seed: int = 0, tick: float = 1.0,
                           price_transition=None, discount: float = 0.9,
                           initial_level: int | None = None) -> SparseActionMdp:
    """Single-asset trading on a Markov price chain; actions (buy, sell, noop).

    State is (price level, entry level or flat). Selling realizes the price
    gap since the buy. Each executed trade costs ``fee``. Buying while holding
    and selling while flat are no-ops. Budgets are enforced at execution time
    only, the state does not count trades.
    """
    if price_levels < 2:
        raise ContractError("price_levels must be >= 2")
    if fee < 0:
        raise ContractError("fee must be >= 0")
    if trade_budget is not None and trade_budget < 0:
        raise ContractError("trade_budget must be >= 0")
    L = price_levels
    _guard_size(L * (L + 1))
    T = (market_price_chain(L, seed) if price_transition is None
         else np.asarray(price_transition, dtype=float))
    if T.shape != (L, L):
        raise ContractError("price_transition shape mismatch")
    S, A = L * (L + 1), 3
    BUY, SELL, NOOP = range(A)
    levels = np.arange(L)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    inert = np.zeros((S, A), bool)
    for lvl in range(L):
        for slot in range(L + 1):  # 0 = flat, k = holding bought at level k - 1
            s = market_state(L, lvl, slot - 1)
            for a in range(A):
                slot2 = slot
                if a == BUY:
                    if slot:
                        inert[s, a] = True
                    else:
                        slot2 = lvl + 1
                        R[s, a] = -fee
                elif a == SELL:
                    if not slot:
                        inert[s, a] = True
                    else:
                        slot2 = 0
                        R[s, a] = tick * (lvl - (slot - 1)) - fee
                P[s, a, levels * (L + 1) + slot2] = T[lvl]
    d0 = np.zeros(S)
    if initial_level is None:
        d0[levels * (L + 1)] = 1.0 / L
    else:
        d0[market_state(L, initial_level)] = 1.0
    cap = UNLIMITED if trade_budget is None else trade_budget
    return SparseActionMdp(
        transition=P, reward=R, discount=discount, initial_dist=d0,
        budgets=np.array([cap, cap, UNLIMITED]), horizon=horizon, noop_action=NOOP,
        inert=inert, action_names=("buy", "sell", "noop"), sparse_actions=(BUY, SELL),
        name="synthetic_market",
    )


def market_state(price_levels: int, level: int, entry: int | None = None) -> int:
    """State index for ``level``; ``entry`` is the buy level of an open position or None."""
    return level * (price_levels + 1) + (0 if entry is None or entry < 0 else entry + 1)


def build_chain_with_trigger(length: int, trigger_budget: int | None = 1, horizon: int = 20, *,
                             discount: float = 0.9, goal_reward: float = 1.0,
                             miss_penalty: float = 0.1) -> SparseActionMdp:
    """Chain of cells with actions (advance, trigger).

    Triggering in the last cell pays ``goal_reward`` and ends the episode;
    anywhere else it costs ``miss_penalty``. Triggers used are part of the
    state, and advance stands in for an exhausted trigger.
    """
    if length < 2:
        raise ContractError("length must be >= 2")
    if trigger_budget is not None and trigger_budget < 0:
        raise ContractError("trigger_budget must be >= 0")
    levels = 1 if trigger_budget is None else trigger_budget + 1
    S = length * levels + 1
    done = S - 1
    A = 2
    ADVANCE, TRIGGER = 0, 1
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    inert = np.zeros((S, A), bool)
    terminal = np.zeros(S, bool)
    terminal[done] = True
    P[done, :, done] = 1.0
    for cell in range(length):
        for u in range(levels):
            s = cell * levels + u
            P[s, ADVANCE, min(cell + 1, length - 1) * levels + u] = 1.0
            if trigger_budget is not None and u == trigger_budget:
                inert[s, TRIGGER] = True
                P[s, TRIGGER] = P[s, ADVANCE]
            elif cell == length - 1:
                R[s, TRIGGER] = goal_reward
                P[s, TRIGGER, done] = 1.0
            else:
                R[s, TRIGGER] = -miss_penalty
                u2 = u + 1 if trigger_budget is not None else u
                P[s, TRIGGER, cell * levels + u2] = 1.0
    d0 = np.zeros(S)
    d0[0] = 1.0
    cap = UNLIMITED if trigger_budget is None else trigger_budget
    return SparseActionMdp(
        transition=P, reward=R, discount=discount, initial_dist=d0,
        budgets=np.array([UNLIMITED, cap]), horizon=horizon, noop_action=ADVANCE,
        terminal=terminal, inert=inert, action_names=("advance", "trigger"),
        sparse_actions=(TRIGGER,), name="chain_with_trigger",
    )


BUILDERS = {
    "budgeted_shooter": build_budgeted_shooter,
    "synthetic_market": build_synthetic_market,
    "chain_with_trigger": build_chain_with_trigger,
}

UNLIMITED_TOKEN = "unlimited"

DEFAULT_PARAMS = {
    "budgeted_shooter": {"width": 7, "budget": 5, "horizon": 30},
    "synthetic_market": {"price_levels": 5, "trade_budget": 30, "fee": 0.2, "horizon": 400},
    "chain_with_trigger": {"length": 4, "trigger_budget": 1, "horizon": 20},
}


@dataclass(frozen=True)
class EnvSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in BUILDERS:
            raise ContractError(f"unknown environment {self.name!r}; choose from {sorted(BUILDERS)}")

    def build(self) -> SparseActionMdp:
        params = {**DEFAULT_PARAMS[self.name], **self.params}
        params = {k: None if v == UNLIMITED_TOKEN else v for k, v in params.items()}
        try:
            return BUILDERS[self.name](**params)
        except TypeError as exc:
            raise ContractError(f"bad parameters for {self.name}: {exc}") from None

    def to_dict(self) -> dict:
        # TOML has no null, so unlimited budgets travel as a string
        params = {k: UNLIMITED_TOKEN if v is None else v for k, v in self.params.items()}
        return {"name": self.name, **params}

    @classmethod
    def from_dict(cls, data: dict) -> EnvSpec:
        data = dict(data)
        return cls(data.pop("name"), data)
