#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: episode sampling and sequential Q-learning sweeps.

Both kernels consume raw uniform doubles straight from the bit generator,
one draw per decision, so the pure-Python fallback can reproduce the exact
same streams (see _fallback.py for the shared contract).
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

BACKEND = "cython"


cdef inline Py_ssize_t _pick(const double *probs, Py_ssize_t n, double u) noexcept nogil:
    # inverse-CDF scan; sequential accumulation order is part of the contract
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(n):
        acc += probs[k]
        if u < acc:
            return k
    return n - 1


def sample_episode(const double[:, :, ::1] transition,
                   const double[:, ::1] reward,
                   const double[::1] initial_dist,
                   const double[:, :, ::1] prob_tables,
                   const long[::1] action_counts,
                   const long[::1] radix,
                   bit_generator,
                   long[::1] states,
                   long[:, ::1] actions,
                   double[::1] rewards,
                   long[::1] next_states):
    """Fill one horizon-length episode into the output arrays.

    Draw order per step: agent 0..N-1 action draws, then the next-state
    draw; a single initial-state draw precedes the first step.
    """
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")
    cdef Py_ssize_t horizon = states.shape[0]
    cdef Py_ssize_t n_agents = action_counts.shape[0]
    cdef Py_ssize_t n_states = transition.shape[2]
    cdef Py_ssize_t t, i, s, s2, a, ja
    with nogil:
        s = _pick(&initial_dist[0], n_states, rng.next_double(rng.state))
        for t in range(horizon):
            ja = 0
            for i in range(n_agents):
                a = _pick(&prob_tables[i, s, 0], action_counts[i],
                          rng.next_double(rng.state))
                actions[t, i] = a
                ja += a * radix[i]
            s2 = _pick(&transition[s, ja, 0], n_states,
                       rng.next_double(rng.state))
            states[t] = s
            rewards[t] = reward[s, ja]
            next_states[t] = s2
            s = s2


def iql_sweep(double[:, ::1] q,
              const long[::1] states,
              const long[::1] actions,
              const double[::1] rewards,
              const long[::1] next_states,
              double alpha, double gamma):
    """Apply tabular Q-learning updates in rollout order, in place.

    Horizon truncation is not termination, so every record bootstraps.
    """
    cdef Py_ssize_t n = states.shape[0]
    cdef Py_ssize_t n_actions = q.shape[1]
    cdef Py_ssize_t t, k, s, a, s2
    cdef double best
    with nogil:
        for t in range(n):
            s = states[t]
            a = actions[t]
            s2 = next_states[t]
            best = q[s2, 0]
            for k in range(1, n_actions):
                if q[s2, k] > best:
                    best = q[s2, k]
            q[s, a] = q[s, a] + alpha * (rewards[t] + gamma * best - q[s, a])
