"""Tabular cooperative stochastic games: construction, sampling, serialization.

A game couples n_agents agents through a joint action. Transitions and the
shared reward are indexed by (state, joint_action_index) where the joint
index is the mixed-radix encoding of the per-agent action tuple with agent 0
most significant. All arrays are float64; games are immutable after
construction (the arrays are marked read-only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import _core
from .errors import ConfigurationError

_ROW_TOL = 1e-12


@dataclass(frozen=True)
class JointActionCodec:
    """Mixed-radix codec between per-agent action tuples and flat indices.

    index = sum_i a_i * prod_{j>i} A_j, so agent 0 is the most significant
    digit. This matches the axis order of reward/transition tables reshaped
    to (S, A_1, ..., A_N[, S]).
    """

    action_counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.action_counts) == 0:
            raise ConfigurationError("action_counts must be non-empty")
        if any(int(a) < 1 for a in self.action_counts):
            raise ConfigurationError("action_counts entries must be >= 1")
        object.__setattr__(self, "action_counts",
                           tuple(int(a) for a in self.action_counts))

    @property
    def n_agents(self) -> int:
        return len(self.action_counts)

    @property
    def n_joint_actions(self) -> int:
        out = 1
        for a in self.action_counts:
            out *= a
        return out

    def radix(self) -> np.ndarray:
        """Place value of each agent's digit: radix[i] = prod_{j>i} A_j."""
        out = np.empty(self.n_agents, dtype=np.int64)
        acc = 1
        for i in range(self.n_agents - 1, -1, -1):
            out[i] = acc
            acc *= self.action_counts[i]
        return out

    def encode(self, actions: Sequence[int]) -> int:
        if len(actions) != self.n_agents:
            raise IndexError(
                f"joint action has {len(actions)} components, expected {self.n_agents}")
        idx = 0
        for i, (a, count) in enumerate(zip(actions, self.action_counts)):
            a = int(a)
            if not 0 <= a < count:
                raise IndexError(
                    f"action {a} for agent {i} out of range [0, {count})")
            idx = idx * count + a
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        index = int(index)
        if not 0 <= index < self.n_joint_actions:
            raise IndexError(
                f"joint action index {index} out of range [0, {self.n_joint_actions})")
        out = [0] * self.n_agents
        for i in range(self.n_agents - 1, -1, -1):
            out[i] = index % self.action_counts[i]
            index //= self.action_counts[i]
        return tuple(out)

    def encode_many(self, actions: np.ndarray) -> np.ndarray:
        """Vectorized encode for an (T, N) int array of action tuples."""
        actions = np.asarray(actions)
        if actions.ndim != 2 or actions.shape[1] != self.n_agents:
            raise IndexError(
                f"expected (T, {self.n_agents}) action array, got {actions.shape}")
        return actions @ self.radix()


def _as_readonly(arr: Any, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass
class StochasticGame:
    """A finite cooperative stochastic game with one shared reward.

    transition: (S, JA, S) row-stochastic over the last axis
    reward:     (S, JA) finite
    initial_dist: (S,) probability vector
    """

    n_states: int
    action_counts: tuple[int, ...]
    gamma: float
    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    seed: int | None = None
    generator_params: dict | None = None
    codec: JointActionCodec = field(init=False)

    def __post_init__(self):
        self.n_states = int(self.n_states)
        if self.n_states < 1:
            raise ConfigurationError("n_states must be >= 1")
        self.codec = JointActionCodec(tuple(self.action_counts))
        self.action_counts = self.codec.action_counts
        self.gamma = float(self.gamma)
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must be in [0, 1)")
        s, ja = self.n_states, self.codec.n_joint_actions
        self.transition = _as_readonly(self.transition)
        self.reward = _as_readonly(self.reward)
        self.initial_dist = _as_readonly(self.initial_dist)
        if self.transition.shape != (s, ja, s):
            raise ConfigurationError(
                f"transition shape {self.transition.shape} != {(s, ja, s)}")
        if self.reward.shape != (s, ja):
            raise ConfigurationError(
                f"reward shape {self.reward.shape} != {(s, ja)}")
        if self.initial_dist.shape != (s,):
            raise ConfigurationError(
                f"initial_dist shape {self.initial_dist.shape} != {(s,)}")
        if not np.all(np.isfinite(self.reward)):
            raise ConfigurationError("reward contains non-finite entries")
        if np.any(self.transition < 0):
            raise ConfigurationError("transition contains negative entries")
        rows = self.transition.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > _ROW_TOL:
            raise ConfigurationError(
                "transition rows must sum to 1 within 1e-12")
        if np.any(self.initial_dist < 0):
            raise ConfigurationError("initial_dist contains negative entries")
        if abs(float(self.initial_dist.sum()) - 1.0) > _ROW_TOL:
            raise ConfigurationError("initial_dist must sum to 1 within 1e-12")

    @property
    def n_agents(self) -> int:
        return self.codec.n_agents

    @property
    def n_joint_actions(self) -> int:
        return self.codec.n_joint_actions

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_agents": self.n_agents,
            "action_counts": list(self.action_counts),
            "gamma": self.gamma,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "seed": self.seed,
            "generator_params": self.generator_params,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StochasticGame":
        required = {"n_states", "n_agents", "action_counts", "gamma",
                    "transition", "reward", "initial_dist"}
        missing = required - set(data)
        if missing:
            raise ConfigurationError(f"game file missing fields: {sorted(missing)}")
        if int(data["n_agents"]) != len(data["action_counts"]):
            raise ConfigurationError(
                "n_agents does not match len(action_counts)")
        return cls(
            n_states=data["n_states"],
            action_counts=tuple(data["action_counts"]),
            gamma=data["gamma"],
            transition=np.array(data["transition"], dtype=np.float64),
            reward=np.array(data["reward"], dtype=np.float64),
            initial_dist=np.array(data["initial_dist"], dtype=np.float64),
            seed=data.get("seed"),
            generator_params=data.get("generator_params"),
        )


def save_game(game: StochasticGame, path) -> None:
    with open(path, "w") as fh:
        json.dump(game.to_dict(), fh)


def load_game(path) -> StochasticGame:
    with open(path) as fh:
        data = json.load(fh)
    return StochasticGame.from_dict(data)


def generate_game(seed: int, n_states: int, n_agents: int,
                  action_counts: Sequence[int], gamma: float = 0.99,
                  transition_alpha: float = 0.2,
                  reward_low: float = 0.0,
                  reward_high: float = 1.0) -> StochasticGame:
    """Sample a random dense game.

    Rewards are iid uniform on [reward_low, reward_high]. Each transition
    row is Dirichlet(transition_alpha, ..., transition_alpha); small alpha
    concentrates mass on few successor states. Uniform initial distribution.
    """
    if n_states < 1:
        raise ConfigurationError("n_states must be >= 1")
    if n_agents < 1:
        raise ConfigurationError("n_agents must be >= 1")
    if len(action_counts) != n_agents:
        raise ConfigurationError(
            f"action_counts has {len(action_counts)} entries, expected {n_agents}")
    if any(int(a) < 1 for a in action_counts):
        raise ConfigurationError("action_counts entries must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ConfigurationError("gamma must be in [0, 1)")
    if transition_alpha <= 0.0:
        raise ConfigurationError("transition_alpha must be > 0")
    if reward_high < reward_low:
        raise ConfigurationError("reward_high must be >= reward_low")
    codec = JointActionCodec(tuple(int(a) for a in action_counts))
    ja = codec.n_joint_actions
    rng = np.random.default_rng(seed)
    reward = rng.uniform(reward_low, reward_high, size=(n_states, ja))
    # gamma draws normalized per row == Dirichlet; normalize in place to
    # avoid a second (S, JA, S) allocation
    transition = rng.standard_gamma(transition_alpha,
                                    size=(n_states, ja, n_states))
    row_sums = transition.sum(axis=2)
    dead = row_sums <= 0.0
    if np.any(dead):
        # all-zero draws are possible for tiny alpha; fall back to uniform
        transition[dead] = 1.0
        row_sums[dead] = float(n_states)
    transition /= row_sums[:, :, None]
    initial_dist = np.full(n_states, 1.0 / n_states)
    return StochasticGame(
        n_states=n_states, action_counts=tuple(action_counts), gamma=gamma,
        transition=transition, reward=reward, initial_dist=initial_dist,
        seed=int(seed),
        generator_params={
            "transition_alpha": float(transition_alpha),
            "reward_low": float(reward_low),
            "reward_high": float(reward_high),
        },
    )


def _sample_index(probs: np.ndarray, u: float) -> int:
    c = np.cumsum(probs)
    return min(int(np.searchsorted(c, u, side="right")), len(c) - 1)


def step(game: StochasticGame, state: int,
         joint_action: Sequence[int],
         rng: np.random.Generator) -> tuple[int, float]:
    """Sample one transition; returns (next_state, reward)."""
    state = int(state)
    if not 0 <= state < game.n_states:
        raise IndexError(f"state {state} out of range [0, {game.n_states})")
    ja = game.codec.encode(joint_action)
    s2 = _sample_index(game.transition[state, ja], rng.random())
    return s2, float(game.reward[state, ja])


@dataclass
class TransitionBatch:
    """Flat storage for n_episodes contiguous fixed-horizon episodes.

    terminal marks horizon truncation, not environment termination; there
    are no absorbing states.
    """

    states: np.ndarray        # (T,) int64
    actions: np.ndarray       # (T, N) int64
    rewards: np.ndarray       # (T,) float64
    next_states: np.ndarray   # (T,) int64
    terminal: np.ndarray      # (T,) bool
    n_episodes: int
    horizon: int

    def __post_init__(self):
        t = self.n_episodes * self.horizon
        if self.states.shape != (t,):
            raise ConfigurationError(
                f"states shape {self.states.shape} != ({t},)")
        if self.actions.ndim != 2 or self.actions.shape[0] != t:
            raise ConfigurationError("actions shape mismatch")

    @property
    def n_records(self) -> int:
        return self.n_episodes * self.horizon

    @property
    def n_agents(self) -> int:
        return self.actions.shape[1]

    def agent_view(self, agent: int) -> "AgentBatch":
        """Projection seen by one agent: (s, a_i, r, s', terminal)."""
        if not 0 <= agent < self.n_agents:
            raise IndexError(f"agent {agent} out of range [0, {self.n_agents})")
        return AgentBatch(self.states,
                          np.ascontiguousarray(self.actions[:, agent]),
                          self.rewards, self.next_states, self.terminal,
                          self.n_episodes, self.horizon)

    def episode_returns(self) -> np.ndarray:
        """Undiscounted per-episode reward sums, shape (n_episodes,)."""
        return self.rewards.reshape(self.n_episodes, self.horizon).sum(axis=1)

    def discounted_returns(self, gamma: float) -> np.ndarray:
        weights = gamma ** np.arange(self.horizon)
        return self.rewards.reshape(self.n_episodes, self.horizon) @ weights


@dataclass
class AgentBatch:
    """Single-agent projection of a TransitionBatch."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray
    n_episodes: int
    horizon: int

    @property
    def n_records(self) -> int:
        return self.n_episodes * self.horizon


def _prob_tables_of(policy, game: StochasticGame) -> list[np.ndarray]:
    """Accept a ProductPolicy or an explicit list of (S, A_i) prob tables."""
    if hasattr(policy, "prob_tables"):
        tables = policy.prob_tables()
    else:
        tables = [np.asarray(t, dtype=np.float64) for t in policy]
    if len(tables) != game.n_agents:
        raise ConfigurationError(
            f"policy has {len(tables)} agents, game has {game.n_agents}")
    for i, t in enumerate(tables):
        want = (game.n_states, game.action_counts[i])
        if t.shape != want:
            raise ConfigurationError(
                f"policy table for agent {i} has shape {t.shape}, expected {want}")
        if np.any(t < 0):
            raise ConfigurationError(f"policy table for agent {i} has negative entries")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-9:
            raise ConfigurationError(
                f"policy table for agent {i} rows must sum to 1")
    return tables


def _seed_sequence(rng) -> np.random.SeedSequence:
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, (int, np.integer)):
        return np.random.SeedSequence(int(rng))
    raise ConfigurationError(
        "rollout rng must be an int or numpy SeedSequence")


def rollout(game: StochasticGame, policy, horizon: int, n_episodes: int,
            rng) -> TransitionBatch:
    """Sample n_episodes fixed-horizon episodes under a stationary policy.

    Each episode gets its own child stream spawned from rng, so results do
    not depend on how episodes are scheduled, and each episode is
    reproducible in isolation.
    """
    horizon = int(horizon)
    n_episodes = int(n_episodes)
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if n_episodes < 1:
        raise ConfigurationError("n_episodes must be >= 1")
    tables = _prob_tables_of(policy, game)
    counts = np.asarray(game.action_counts, dtype=np.int64)
    a_max = int(counts.max())
    packed = np.zeros((game.n_agents, game.n_states, a_max), dtype=np.float64)
    for i, t in enumerate(tables):
        packed[i, :, :counts[i]] = t
    packed.flags.writeable = False
    radix = game.codec.radix()
    t_total = n_episodes * horizon
    states = np.empty(t_total, dtype=np.int64)
    actions = np.empty((t_total, game.n_agents), dtype=np.int64)
    rewards = np.empty(t_total, dtype=np.float64)
    next_states = np.empty(t_total, dtype=np.int64)
    children = _seed_sequence(rng).spawn(n_episodes)
    for e in range(n_episodes):
        lo, hi = e * horizon, (e + 1) * horizon
        _core.sample_episode(
            game.transition, game.reward, game.initial_dist, packed, counts,
            radix, np.random.PCG64(children[e]),
            states[lo:hi], actions[lo:hi], rewards[lo:hi], next_states[lo:hi])
    terminal = np.zeros(t_total, dtype=bool)
    terminal[horizon - 1::horizon] = True
    return TransitionBatch(states=states, actions=actions, rewards=rewards,
                           next_states=next_states, terminal=terminal,
                           n_episodes=n_episodes, horizon=horizon)
