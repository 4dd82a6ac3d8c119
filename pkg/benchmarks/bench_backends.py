"""Head-to-head timing of the compiled sampling kernels vs the NumPy
fallback. Both backends are called on identical inputs and must produce
bitwise-identical outputs; the table at the end reports wall-clock times
and the speedup ratio.

Usage: python3 benchmarks/bench_backends.py [--episodes N] [--horizon T]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from depo._core import _fallback
from depo.env import generate_game

try:
    from depo._core import _kernels
except ImportError:
    _kernels = None


def _packed_tables(game, rng):
    # uniform per-agent policies, padded to the widest action count
    amax = max(game.action_counts)
    tables = np.zeros((game.n_agents, game.n_states, amax))
    for i, a in enumerate(game.action_counts):
        tables[i, :, :a] = 1.0 / a
    return tables


def bench_sample_episode(impl, game, episodes: int, horizon: int,
                         seed: int):
    tables = _packed_tables(game, None)
    radix = game.codec.radix()
    counts = np.array(game.action_counts, dtype=np.int64)
    states = np.empty((episodes, horizon), dtype=np.int64)
    actions = np.empty((episodes, horizon, game.n_agents), dtype=np.int64)
    rewards = np.empty((episodes, horizon))
    nxt = np.empty((episodes, horizon), dtype=np.int64)
    start = time.perf_counter()
    for ep in range(episodes):
        impl.sample_episode(game.transition, game.reward,
                            game.initial_dist, tables, counts, radix,
                            np.random.PCG64(seed + ep),
                            states[ep], actions[ep], rewards[ep], nxt[ep])
    elapsed = time.perf_counter() - start
    return elapsed, (states, actions, rewards, nxt)


def bench_iql_sweep(impl, game, records: int, seed: int):
    rng = np.random.default_rng(seed)
    a0 = game.action_counts[0]
    q = rng.standard_normal((game.n_states, a0))
    states = rng.integers(0, game.n_states, size=records)
    actions = rng.integers(0, a0, size=records)
    rewards = rng.random(records)
    nxt = rng.integers(0, game.n_states, size=records)
    q_out = q.copy()
    start = time.perf_counter()
    impl.iql_sweep(q_out, states, actions, rewards, nxt, 0.1, game.gamma)
    elapsed = time.perf_counter() - start
    return elapsed, q_out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=512)
    ap.add_argument("--horizon", type=int, default=100)
    ap.add_argument("--records", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not importable; nothing to compare")
        return 1

    game = generate_game(seed=args.seed, n_states=50, n_agents=4,
                         action_counts=[4] * 4, gamma=0.95,
                         transition_alpha=0.3)
    print(f"game: {game.n_states} states, {game.n_agents} agents, "
          f"{game.n_joint_actions} joint actions")
    print(f"episode sampling: {args.episodes} episodes x {args.horizon} steps; "
          f"q sweep: {args.records} records\n")

    rows = []
    t_py, out_py = bench_sample_episode(_fallback, game, args.episodes,
                                        args.horizon, args.seed)
    t_cy, out_cy = bench_sample_episode(_kernels, game, args.episodes,
                                        args.horizon, args.seed)
    for a, b in zip(out_py, out_cy):
        assert np.array_equal(a, b), "backends disagree on sampled episodes"
    rows.append(("sample_episode", t_py, t_cy))

    t_py, q_py = bench_iql_sweep(_fallback, game, args.records, args.seed)
    t_cy, q_cy = bench_iql_sweep(_kernels, game, args.records, args.seed)
    assert np.array_equal(q_py, q_cy), "backends disagree on q sweep"
    rows.append(("iql_sweep", t_py, t_cy))

    print(f"{'kernel':<16} {'python':>10} {'cython':>10} {'speedup':>9}")
    for name, py, cy in rows:
        print(f"{name:<16} {py:>9.3f}s {cy:>9.3f}s {py / cy:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
