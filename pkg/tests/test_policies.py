from __future__ import annotations

import numpy as np
import pytest

from depo.policies import (ProductPolicy, epsilon_greedy_tables, log_softmax,
                           softmax, softmax_kl)


def test_softmax_rows_normalized():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 4)) * 3
    p = softmax(logits)
    assert np.allclose(p.sum(axis=-1), 1.0)
    assert np.all(p > 0)


def test_log_softmax_stable_for_large_logits():
    logits = np.array([[1000.0, 1000.0, 999.0]])
    lp = log_softmax(logits)
    assert np.all(np.isfinite(lp))
    assert np.allclose(np.exp(lp).sum(), 1.0)
    assert np.allclose(lp, np.log(softmax(logits)))


class TestSoftmaxKL:
    def test_zero_for_identical(self):
        logits = np.random.default_rng(1).normal(size=(4, 3))
        assert np.allclose(softmax_kl(logits, logits), 0.0)
        # shift invariance of softmax carries over
        assert np.allclose(softmax_kl(logits, logits + 5.0), 0.0)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        old = rng.normal(size=(6, 4))
        new = rng.normal(size=(6, 4))
        got = softmax_kl(old, new)
        p, q = softmax(old), softmax(new)
        want = (p * np.log(p / q)).sum(axis=-1)
        assert np.allclose(got, want, atol=1e-12)
        assert np.all(got >= 0.0)

    def test_never_negative(self):
        # tiny perturbations can make the naive sum land below zero
        rng = np.random.default_rng(3)
        for _ in range(200):
            logits = rng.normal(size=(1, 5))
            out = softmax_kl(logits, logits + rng.normal(size=(1, 5)) * 1e-9)
            assert np.all(out >= 0.0)


class TestProductPolicy:
    def test_uniform_probs(self):
        pol = ProductPolicy.uniform(3, (2, 4))
        assert np.allclose(pol.probs(0), 0.5)
        assert np.allclose(pol.probs(1), 0.25)
        assert pol.n_agents == 2
        assert pol.n_states == 3

    def test_joint_probs_are_products(self, wide_game):
        pol = ProductPolicy.random(wide_game.n_states,
                                   wide_game.action_counts,
                                   np.random.default_rng(4))
        joint = pol.joint_probs()
        tables = pol.prob_tables()
        codec = wide_game.codec
        assert joint.shape == (4, codec.n_joint_actions)
        assert np.allclose(joint.sum(axis=1), 1.0)
        for ja in range(codec.n_joint_actions):
            acts = codec.decode(ja)
            want = np.ones(4)
            for i, a in enumerate(acts):
                want = want * tables[i][:, a]
            assert np.allclose(joint[:, ja], want)

    def test_with_agent_copies(self):
        pol = ProductPolicy.uniform(2, (2, 2))
        new = pol.with_agent(1, np.array([[5.0, 0.0], [0.0, 5.0]]))
        assert np.allclose(pol.probs(1), 0.5)
        assert new.probs(1)[0, 0] > 0.99

    def test_matches_game(self, tiny_game, wide_game):
        pol = ProductPolicy.uniform(3, (2, 2))
        assert pol.matches_game(tiny_game)
        assert not pol.matches_game(wide_game)
        with pytest.raises(ConfigurationError):
            pol.require_match(wide_game)


from depo.errors import ConfigurationError  # noqa: E402


class TestEpsilonGreedy:
    def test_greedy_mass(self):
        q = [np.array([[1.0, 3.0, 2.0], [0.0, -1.0, -2.0]])]
        tables = epsilon_greedy_tables(q, 0.3)
        t = tables[0]
        assert np.allclose(t.sum(axis=1), 1.0)
        assert np.isclose(t[0, 1], 0.7 + 0.1)
        assert np.isclose(t[0, 0], 0.1)
        assert np.isclose(t[1, 0], 0.8)

    def test_tie_goes_to_lowest_index(self):
        q = [np.array([[2.0, 2.0]])]
        t = epsilon_greedy_tables(q, 0.0)[0]
        assert t[0, 0] == 1.0 and t[0, 1] == 0.0

    def test_epsilon_bounds(self):
        q = [np.zeros((1, 2))]
        with pytest.raises(ConfigurationError):
            epsilon_greedy_tables(q, -0.1)
        with pytest.raises(ConfigurationError):
            epsilon_greedy_tables(q, 1.5)
