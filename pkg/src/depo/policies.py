"""Per-agent tabular softmax policies and their products."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .env import StochasticGame
from .errors import ConfigurationError


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, numerically stable."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_kl(old_logits: np.ndarray, new_logits: np.ndarray) -> np.ndarray:
    """Per-row KL(softmax(old) || softmax(new)), shape (S,).

    Computed from log-probabilities, so it is exact for any logit gap and
    never sees a zero probability.
    """
    lp_old = log_softmax(old_logits)
    lp_new = log_softmax(new_logits)
    # rounding can push a true zero to -1e-17; KL is nonnegative
    return np.maximum((np.exp(lp_old) * (lp_old - lp_new)).sum(axis=-1), 0.0)


class ProductPolicy:
    """Joint policy factored as a product of per-agent softmax tables.

    logits[i] has shape (n_states, action_counts[i]). Probabilities are
    strictly positive by construction.
    """

    def __init__(self, logits: Sequence[np.ndarray]):
        if len(logits) == 0:
            raise ConfigurationError("ProductPolicy needs at least one agent")
        self.logits = [np.array(l, dtype=np.float64) for l in logits]
        shapes = {l.shape[0] for l in self.logits}
        if len(shapes) != 1 or any(l.ndim != 2 for l in self.logits):
            raise ConfigurationError(
                "logit tables must be 2-D with one row per state")
        self.n_states = self.logits[0].shape[0]
        self.action_counts = tuple(l.shape[1] for l in self.logits)
        self.n_agents = len(self.logits)

    @classmethod
    def uniform(cls, n_states: int, action_counts: Sequence[int]) -> "ProductPolicy":
        return cls([np.zeros((n_states, a)) for a in action_counts])

    @classmethod
    def random(cls, n_states: int, action_counts: Sequence[int],
               rng: np.random.Generator, scale: float = 1.0) -> "ProductPolicy":
        return cls([scale * rng.standard_normal((n_states, a))
                    for a in action_counts])

    def copy(self) -> "ProductPolicy":
        return ProductPolicy([l.copy() for l in self.logits])

    def with_agent(self, agent: int, logits: np.ndarray) -> "ProductPolicy":
        """Copy with one agent's logit table replaced."""
        new = [l.copy() for l in self.logits]
        logits = np.asarray(logits, dtype=np.float64)
        if logits.shape != new[agent].shape:
            raise ConfigurationError(
                f"replacement logits shape {logits.shape} != {new[agent].shape}")
        new[agent] = logits.copy()
        return ProductPolicy(new)

    def log_probs(self, agent: int) -> np.ndarray:
        return log_softmax(self.logits[agent])

    def probs(self, agent: int) -> np.ndarray:
        return softmax(self.logits[agent])

    def prob_tables(self) -> list[np.ndarray]:
        return [self.probs(i) for i in range(self.n_agents)]

    def joint_probs(self) -> np.ndarray:
        """Dense (S, JA) product table; JA indexed with agent 0 most significant."""
        w = np.ones((self.n_states, 1))
        for i in range(self.n_agents):
            p = self.probs(i)
            w = (w[:, :, None] * p[:, None, :]).reshape(self.n_states, -1)
        return w

    def matches_game(self, game: StochasticGame) -> bool:
        return (self.n_states == game.n_states
                and self.action_counts == game.action_counts)

    def require_match(self, game: StochasticGame) -> None:
        if not self.matches_game(game):
            raise ConfigurationError(
                f"policy dims (S={self.n_states}, A={self.action_counts}) do not "
                f"match game (S={game.n_states}, A={game.action_counts})")


def epsilon_greedy_tables(q_tables: Sequence[np.ndarray],
                          epsilon: float) -> list[np.ndarray]:
    """Explicit probability tables for epsilon-greedy over per-agent Q tables.

    Ties in argmax go to the lowest action index. The result can be passed
    to rollout() directly in place of a ProductPolicy.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError("epsilon must be in [0, 1]")
    out = []
    for q in q_tables:
        q = np.asarray(q, dtype=np.float64)
        n_actions = q.shape[1]
        table = np.full(q.shape, epsilon / n_actions)
        table[np.arange(q.shape[0]), q.argmax(axis=1)] += 1.0 - epsilon
        out.append(table)
    return out
