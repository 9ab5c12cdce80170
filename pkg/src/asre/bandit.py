"""Discounted UCB over actions, used to pick which action to constrain next."""
from __future__ import annotations

import numpy as np

DEFAULT_C = 0.5
DEFAULT_GAMMA_TILDE = 0.99


class DUcbState:
    """Exponentially discounted counts and reward sums per arm.

    With ``normalize=True`` rewards are min-max scaled with running bounds
    before entering the sums; off by default.
    """

    def __init__(self, num_arms: int, c: float = DEFAULT_C,
                 gamma_tilde: float = DEFAULT_GAMMA_TILDE, normalize: bool = False):
        if num_arms < 1:
            raise ValueError("need at least one arm")
        if not c >= 0:
            raise ValueError("c must be non-negative")
        if not 0 < gamma_tilde <= 1:
            raise ValueError("gamma_tilde must lie in (0, 1]")
        self.c = float(c)
        self.gamma_tilde = float(gamma_tilde)
        self.normalize = normalize
        self.discounted_counts = np.zeros(num_arms)
        self.discounted_sums = np.zeros(num_arms)
        self._lo = np.inf
        self._hi = -np.inf

    @property
    def num_arms(self) -> int:
        return len(self.discounted_counts)

    @property
    def total(self) -> float:
        return float(self.discounted_counts.sum())

    @property
    def pulled(self) -> np.ndarray:
        return self.discounted_counts > 0

    @property
    def means(self) -> np.ndarray:
        """S/N per arm; NaN for arms never pulled."""
        n = self.discounted_counts
        out = np.full(self.num_arms, np.nan)
        np.divide(self.discounted_sums, n, out=out, where=n > 0)
        return out

    def indices(self) -> np.ndarray:
        n = self.discounted_counts
        idx = np.full(self.num_arms, np.inf)
        seen = n > 0
        if seen.any():
            # t = gamma * t_prev + 1 >= 1 after any pull, so log t >= 0
            bonus = self.c * np.sqrt(np.log(self.total) / n[seen])
            idx[seen] = self.discounted_sums[seen] / n[seen] + bonus
        return idx

    def select_arm(self) -> int:
        return int(np.argmax(self.indices()))

    def update(self, selected: int, reward: float) -> DUcbState:
        if not 0 <= selected < self.num_arms:
            raise IndexError(f"arm {selected} out of range")
        if self.normalize:
            self._lo = min(self._lo, reward)
            self._hi = max(self._hi, reward)
            span = self._hi - self._lo
            reward = 0.5 if span == 0 else (reward - self._lo) / span
        self.discounted_counts *= self.gamma_tilde
        self.discounted_sums *= self.gamma_tilde
        self.discounted_counts[selected] += 1.0
        self.discounted_sums[selected] += reward
        return self


def select_arm(state: DUcbState) -> int:
    return state.select_arm()


def update(state: DUcbState, selected: int, reward: float) -> DUcbState:
    return state.update(selected, reward)
