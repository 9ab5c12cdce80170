import numpy as np
import pytest

from asre.mdp import UNLIMITED, SparseActionMdp


def random_mdp(rng, num_states, num_actions, gamma, budgets=None, horizon=10, reward_scale=1.0):
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    r = reward_scale * rng.normal(size=(num_states, num_actions))
    d0 = rng.dirichlet(np.ones(num_states))
    if budgets is None:
        budgets = [UNLIMITED] * num_actions
    noop = next(a for a, b in enumerate(budgets) if b == UNLIMITED)
    return SparseActionMdp(P, r, gamma, d0, np.array(budgets), horizon, noop_action=noop)


def one_state_mdp(reward=1.0, gamma=0.5, budgets=(UNLIMITED,), horizon=5, num_actions=1):
    P = np.ones((1, num_actions, 1))
    r = np.full((1, num_actions), reward, dtype=float)
    return SparseActionMdp(P, r, gamma, np.ones(1), np.array(budgets), horizon)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = [v for key in ("passed", "failed") for rep in terminalreporter.stats.get(key, [])
             if rep.when == "call" for k, v in rep.user_properties if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
