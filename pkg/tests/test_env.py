from __future__ import annotations

import numpy as np
import pytest

from depo.env import (JointActionCodec, StochasticGame, TransitionBatch,
                      generate_game, load_game, rollout, save_game, step)
from depo.errors import ConfigurationError
from depo.policies import ProductPolicy


class TestCodec:
    def test_roundtrip_exhaustive(self):
        codec = JointActionCodec((2, 3, 2))
        assert codec.n_joint_actions == 12
        seen = set()
        for a0 in range(2):
            for a1 in range(3):
                for a2 in range(2):
                    idx = codec.encode((a0, a1, a2))
                    assert codec.decode(idx) == (a0, a1, a2)
                    seen.add(idx)
        assert seen == set(range(12))

    def test_agent_zero_most_significant(self):
        codec = JointActionCodec((2, 3, 2))
        # radix weights: agent 0 spans blocks of 3*2
        assert codec.encode((1, 0, 0)) == 6
        assert codec.encode((0, 1, 0)) == 2
        assert codec.encode((0, 0, 1)) == 1
        assert list(codec.radix()) == [6, 2, 1]

    def test_encode_bounds(self):
        codec = JointActionCodec((2, 2))
        with pytest.raises(IndexError):
            codec.encode((2, 0))
        with pytest.raises(IndexError):
            codec.encode((0, -1))

    def test_encode_many_matches_scalar(self):
        codec = JointActionCodec((3, 2))
        rng = np.random.default_rng(0)
        acts = np.stack([rng.integers(0, 3, 50), rng.integers(0, 2, 50)],
                        axis=1)
        many = codec.encode_many(acts)
        for k in range(50):
            assert many[k] == codec.encode(acts[k])


class TestGameValidation:
    def test_rejects_nonstochastic_row(self):
        t = np.ones((2, 2, 2)) * 0.5
        t[1, 0] = [0.7, 0.2]
        with pytest.raises(ConfigurationError):
            StochasticGame(n_states=2, action_counts=(2,), gamma=0.9,
                           transition=t, reward=np.zeros((2, 2)),
                           initial_dist=np.array([0.5, 0.5]))

    def test_rejects_negative_probability(self):
        t = np.zeros((2, 2, 2))
        t[:, :, 0] = -0.5
        t[:, :, 1] = 1.5
        with pytest.raises(ConfigurationError):
            StochasticGame(n_states=2, action_counts=(2,), gamma=0.9,
                           transition=t, reward=np.zeros((2, 2)),
                           initial_dist=np.array([0.5, 0.5]))

    def test_rejects_bad_gamma(self):
        t = np.full((1, 2, 1), 1.0)
        for gamma in (1.0, -0.1):
            with pytest.raises(ConfigurationError):
                StochasticGame(n_states=1, action_counts=(2,), gamma=gamma,
                               transition=t, reward=np.zeros((1, 2)),
                               initial_dist=np.array([1.0]))

    def test_rejects_wrong_shapes(self):
        with pytest.raises(ConfigurationError):
            StochasticGame(n_states=2, action_counts=(2,), gamma=0.9,
                           transition=np.full((2, 3, 2), 0.5),
                           reward=np.zeros((2, 2)),
                           initial_dist=np.array([0.5, 0.5]))

    def test_arrays_are_readonly(self, tiny_game):
        with pytest.raises(ValueError):
            tiny_game.transition[0, 0, 0] = 2.0
        with pytest.raises(ValueError):
            tiny_game.reward[0, 0] = 2.0


class TestGenerate:
    def test_rows_stochastic_and_rewards_bounded(self):
        game = generate_game(seed=2, n_states=5, n_agents=2,
                             action_counts=[3, 2], reward_low=-1.0,
                             reward_high=2.0)
        sums = game.transition.sum(axis=2)
        assert np.allclose(sums, 1.0, atol=1e-12)
        assert game.reward.min() >= -1.0
        assert game.reward.max() <= 2.0
        assert np.allclose(game.initial_dist, 1.0 / 5)

    def test_deterministic_in_seed(self):
        a = generate_game(seed=9, n_states=4, n_agents=2, action_counts=[2, 2])
        b = generate_game(seed=9, n_states=4, n_agents=2, action_counts=[2, 2])
        assert np.array_equal(a.transition, b.transition)
        assert np.array_equal(a.reward, b.reward)
        c = generate_game(seed=10, n_states=4, n_agents=2,
                          action_counts=[2, 2])
        assert not np.array_equal(a.reward, c.reward)

    def test_argument_validation(self):
        with pytest.raises(ConfigurationError):
            generate_game(seed=0, n_states=0, n_agents=1, action_counts=[2])
        with pytest.raises(ConfigurationError):
            generate_game(seed=0, n_states=2, n_agents=2, action_counts=[2])
        with pytest.raises(ConfigurationError):
            generate_game(seed=0, n_states=2, n_agents=1, action_counts=[2],
                          gamma=1.0)
        with pytest.raises(ConfigurationError):
            generate_game(seed=0, n_states=2, n_agents=1, action_counts=[2],
                          transition_alpha=0.0)


def test_save_load_roundtrip(tmp_path, wide_game):
    path = tmp_path / "g.json"
    save_game(wide_game, path)
    back = load_game(path)
    assert back.n_states == wide_game.n_states
    assert back.action_counts == wide_game.action_counts
    assert back.gamma == wide_game.gamma
    # JSON float serialization round-trips doubles exactly
    assert np.array_equal(back.transition, wide_game.transition)
    assert np.array_equal(back.reward, wide_game.reward)
    assert np.array_equal(back.initial_dist, wide_game.initial_dist)
    assert back.seed == wide_game.seed


def test_step_matches_transition_distribution(tiny_game):
    rng = np.random.default_rng(0)
    hits = np.zeros(tiny_game.n_states)
    n = 20000
    for _ in range(n):
        s2, r = step(tiny_game, 1, (1, 0), rng)
        hits[s2] += 1
    ja = tiny_game.codec.encode((1, 0))
    expect = tiny_game.transition[1, ja]
    assert r == tiny_game.reward[1, ja]
    assert np.max(np.abs(hits / n - expect)) < 0.02

    with pytest.raises(IndexError):
        step(tiny_game, 99, (0, 0), rng)


class TestRollout:
    def test_shapes_and_terminal_pattern(self, tiny_game):
        policy = ProductPolicy.uniform(tiny_game.n_states,
                                       tiny_game.action_counts)
        batch = rollout(tiny_game, policy, horizon=7, n_episodes=3, rng=42)
        assert batch.states.shape == (21,)
        assert batch.actions.shape == (21, 2)
        assert batch.states.dtype == np.int64
        assert batch.terminal.sum() == 3
        assert batch.terminal[6] and batch.terminal[13] and batch.terminal[20]
        # within an episode, successor chaining holds
        for e in range(3):
            lo = e * 7
            assert np.array_equal(batch.states[lo + 1:lo + 7],
                                  batch.next_states[lo:lo + 6])

    def test_deterministic_and_seed_sensitive(self, tiny_game):
        policy = ProductPolicy.uniform(tiny_game.n_states,
                                       tiny_game.action_counts)
        a = rollout(tiny_game, policy, 10, 4, np.random.SeedSequence(7))
        b = rollout(tiny_game, policy, 10, 4, np.random.SeedSequence(7))
        c = rollout(tiny_game, policy, 10, 4, np.random.SeedSequence(8))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.rewards, b.rewards)
        assert not np.array_equal(a.states, c.states)

    def test_initial_state_distribution(self, tiny_game):
        policy = ProductPolicy.uniform(tiny_game.n_states,
                                       tiny_game.action_counts)
        batch = rollout(tiny_game, policy, 2, 6000, rng=1)
        starts = batch.states[::2]
        freq = np.bincount(starts, minlength=3) / 6000
        assert np.max(np.abs(freq - tiny_game.initial_dist)) < 0.02

    def test_rejects_bad_sizes(self, tiny_game):
        policy = ProductPolicy.uniform(tiny_game.n_states,
                                       tiny_game.action_counts)
        with pytest.raises(ConfigurationError):
            rollout(tiny_game, policy, 0, 1, rng=0)
        with pytest.raises(ConfigurationError):
            rollout(tiny_game, policy, 1, 0, rng=0)

    def test_action_marginals_follow_policy(self, tiny_game):
        rng = np.random.default_rng(3)
        tables = [rng.dirichlet(np.ones(2), size=3) for _ in range(2)]
        batch = rollout(tiny_game, tables, 1, 30000, rng=9)
        for i in range(2):
            for s in range(3):
                mask = batch.states == s
                if mask.sum() < 500:
                    continue
                freq = np.mean(batch.actions[mask, i])
                assert abs(freq - tables[i][s, 1]) < 0.03


class TestBatchMath:
    def _toy_batch(self):
        rewards = np.array([1.0, 2.0, 4.0, 0.5, 0.0, 3.0])
        return TransitionBatch(
            states=np.zeros(6, dtype=np.int64),
            actions=np.zeros((6, 1), dtype=np.int64),
            rewards=rewards,
            next_states=np.zeros(6, dtype=np.int64),
            terminal=np.array([False, False, True] * 2),
            n_episodes=2, horizon=3)

    def test_episode_returns(self):
        batch = self._toy_batch()
        assert np.allclose(batch.episode_returns(), [7.0, 3.5])

    def test_discounted_returns(self):
        batch = self._toy_batch()
        # 1 + 2g + 4g^2 and 0.5 + 3g^2 at g = 0.5
        assert np.allclose(batch.discounted_returns(0.5), [3.0, 1.25])

    def test_agent_view_contiguous(self, tiny_game):
        policy = ProductPolicy.uniform(tiny_game.n_states,
                                       tiny_game.action_counts)
        batch = rollout(tiny_game, policy, 5, 2, rng=0)
        view = batch.agent_view(1)
        assert view.actions.flags["C_CONTIGUOUS"]
        assert np.array_equal(view.actions, batch.actions[:, 1])
        with pytest.raises(IndexError):
            batch.agent_view(2)
