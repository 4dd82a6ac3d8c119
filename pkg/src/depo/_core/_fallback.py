"""Pure NumPy implementations of the compiled kernels.

Kept in lockstep with _kernels.pyx. Both backends consume one uniform
double per decision from the same bit generator and resolve it against a
sequentially accumulated CDF, so trajectories and Q tables come out
bit-identical. Any change to the draw order or the accumulation order in
one backend must be mirrored in the other.
"""

import numpy as np

BACKEND = "python"


def _pick(probs: np.ndarray, u: float) -> int:
    # np.cumsum is a sequential running sum, matching the C scan exactly
    c = np.cumsum(probs)
    k = int(np.searchsorted(c, u, side="right"))
    return min(k, len(c) - 1)


def sample_episode(transition, reward, initial_dist, prob_tables,
                   action_counts, radix, bit_generator,
                   states, actions, rewards, next_states):
    gen = np.random.Generator(bit_generator)
    horizon = states.shape[0]
    n_agents = len(action_counts)
    s = _pick(initial_dist, gen.random())
    for t in range(horizon):
        ja = 0
        for i in range(n_agents):
            a = _pick(prob_tables[i, s, :action_counts[i]], gen.random())
            actions[t, i] = a
            ja += a * int(radix[i])
        s2 = _pick(transition[s, ja], gen.random())
        states[t] = s
        rewards[t] = reward[s, ja]
        next_states[t] = s2
        s = s2


def iql_sweep(q, states, actions, rewards, next_states, alpha, gamma):
    for t in range(len(states)):
        s = states[t]
        a = actions[t]
        s2 = next_states[t]
        best = q[s2, 0]
        for k in range(1, q.shape[1]):
            if q[s2, k] > best:
                best = q[s2, k]
        q[s, a] = q[s, a] + alpha * (rewards[t] + gamma * best - q[s, a])
