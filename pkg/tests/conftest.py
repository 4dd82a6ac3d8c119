from __future__ import annotations

import numpy as np
import pytest

from depo.env import StochasticGame, generate_game


@pytest.fixture
def tiny_game() -> StochasticGame:
    return generate_game(seed=11, n_states=3, n_agents=2,
                         action_counts=[2, 2], gamma=0.9)


@pytest.fixture
def wide_game() -> StochasticGame:
    # uneven action counts exercise the mixed-radix paths
    return generate_game(seed=5, n_states=4, n_agents=3,
                         action_counts=[2, 3, 2], gamma=0.8)


@pytest.fixture
def chain_game() -> StochasticGame:
    """Two-state, one-agent, two-action game with hand-checkable values.

    Action 0 stays put (reward 0 in state 0, reward 1 in state 1);
    action 1 deterministically moves to the other state (reward 0).
    """
    transition = np.zeros((2, 2, 2))
    transition[0, 0, 0] = 1.0
    transition[0, 1, 1] = 1.0
    transition[1, 0, 1] = 1.0
    transition[1, 1, 0] = 1.0
    reward = np.array([[0.0, 0.0], [1.0, 0.0]])
    return StochasticGame(
        n_states=2, action_counts=(2,), gamma=0.5,
        transition=transition, reward=reward,
        initial_dist=np.array([1.0, 0.0]))
