"""Exact dynamic programming on small games.

Everything here is deterministic linear algebra: optimal values via value
iteration, joint-policy evaluation via direct linear solves (iterative
fallback above a size threshold), discounted occupancies, and the
decentralized per-agent value functions obtained by averaging the joint
quantities over the other agents' policies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import StochasticGame
from .errors import ConfigurationError
from .policies import ProductPolicy

# above this many states, (I - gamma P) solves switch to fixed-point iteration
DIRECT_SOLVE_MAX_STATES = 512


@dataclass
class ValueIterationResult:
    v_star: np.ndarray
    j_star: float
    iterations: int
    residual: float


@dataclass
class ExactEvalResult:
    """Exact evaluation of one joint policy.

    v: (S,) state values; q: (S, JA) joint action values; adv = q - v;
    rho: (S,) unnormalized discounted occupancy (sums to 1/(1-gamma));
    j: expected discounted return from the initial distribution.
    """

    policy: ProductPolicy
    v: np.ndarray
    q: np.ndarray
    adv: np.ndarray
    rho: np.ndarray
    j: float


@dataclass
class DecentralizedQ:
    agent: int
    q: np.ndarray  # (S, A_i)


def _check_agent(policy: ProductPolicy, agent: int) -> None:
    if not 0 <= agent < policy.n_agents:
        raise IndexError(f"agent {agent} out of range [0, {policy.n_agents})")


def joint_value_iteration(game: StochasticGame, tol: float = 1e-8,
                          max_iterations: int | None = None) -> ValueIterationResult:
    """Optimal joint values by synchronous value iteration.

    Stops when the sup-norm sweep change drops below tol * (1 - gamma) /
    gamma, which bounds the value error ||v - v*||_inf by tol.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be > 0")
    s, ja = game.n_states, game.n_joint_actions
    gamma = game.gamma
    p2 = game.transition.reshape(s * ja, s)
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    v = np.zeros(s)
    tmp = np.empty(s * ja)
    iterations = 0
    residual = np.inf
    while True:
        np.matmul(p2, v, out=tmp)
        q = tmp.reshape(s, ja)
        q *= gamma
        q += game.reward
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        iterations += 1
        if residual < threshold or gamma == 0.0:
            break
        if max_iterations is not None and iterations >= max_iterations:
            break
    j_star = float(game.initial_dist @ v)
    return ValueIterationResult(v_star=v, j_star=j_star,
                                iterations=iterations, residual=residual)


def _collapse(game: StochasticGame, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Policy-averaged reward (S,) and transition matrix (S, S)."""
    r_pi = (w * game.reward).sum(axis=1)
    p_pi = np.matmul(w[:, None, :], game.transition)[:, 0, :]
    return r_pi, p_pi


def _solve_values(game: StochasticGame, r_pi: np.ndarray, p_pi: np.ndarray,
                  tol: float) -> np.ndarray:
    s, gamma = game.n_states, game.gamma
    if s <= DIRECT_SOLVE_MAX_STATES:
        return np.linalg.solve(np.eye(s) - gamma * p_pi, r_pi)
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    v = np.zeros(s)
    while True:
        v_new = r_pi + gamma * (p_pi @ v)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change < threshold or gamma == 0.0:
            return v


def _solve_occupancy(game: StochasticGame, p_pi: np.ndarray,
                     tol: float) -> np.ndarray:
    s, gamma = game.n_states, game.gamma
    if s <= DIRECT_SOLVE_MAX_STATES:
        return np.linalg.solve((np.eye(s) - gamma * p_pi).T, game.initial_dist)
    # rho = d0 + gamma P^T rho contracts in L1
    rho = np.array(game.initial_dist)
    pt = p_pi.T
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    while True:
        rho_new = game.initial_dist + gamma * (pt @ rho)
        change = float(np.abs(rho_new - rho).sum())
        rho = rho_new
        if change < threshold or gamma == 0.0:
            return rho


def _joint_w(game: StochasticGame, policy) -> np.ndarray:
    if isinstance(policy, ProductPolicy):
        policy.require_match(game)
        return policy.joint_probs()
    # explicit per-agent probability tables (e.g. epsilon-greedy behavior)
    w = np.ones((game.n_states, 1))
    for i, table in enumerate(policy):
        table = np.asarray(table, dtype=np.float64)
        want = (game.n_states, game.action_counts[i])
        if table.shape != want:
            raise ConfigurationError(
                f"policy table for agent {i} has shape {table.shape}, expected {want}")
        w = (w[:, :, None] * table[:, None, :]).reshape(game.n_states, -1)
    if w.shape[1] != game.n_joint_actions:
        raise ConfigurationError(
            f"policy covers {w.shape[1]} joint actions, game has {game.n_joint_actions}")
    return w


def exact_state_values(game: StochasticGame, policy,
                       tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """State values and discounted return of a joint policy.

    Cheaper than evaluate_joint_policy: skips the Q tensor and occupancy.
    policy may be a ProductPolicy or a list of per-agent probability tables.
    """
    w = _joint_w(game, policy)
    r_pi, p_pi = _collapse(game, w)
    v = _solve_values(game, r_pi, p_pi, tol)
    return v, float(game.initial_dist @ v)


def evaluate_joint_policy(game: StochasticGame, policy: ProductPolicy,
                          tol: float = 1e-10) -> ExactEvalResult:
    """Full exact evaluation: V, Q, A, occupancy, and return."""
    policy.require_match(game)
    s, ja = game.n_states, game.n_joint_actions
    w = policy.joint_probs()
    r_pi, p_pi = _collapse(game, w)
    v = _solve_values(game, r_pi, p_pi, tol)
    rho = _solve_occupancy(game, p_pi, tol)
    q = game.reward + game.gamma * (
        game.transition.reshape(s * ja, s) @ v).reshape(s, ja)
    adv = q - v[:, None]
    return ExactEvalResult(policy=policy, v=v, q=q, adv=adv, rho=rho,
                           j=float(game.initial_dist @ v))


def _marginalize_over_others(game: StochasticGame, policy: ProductPolicy,
                             agent: int, tensor: np.ndarray) -> np.ndarray:
    """Average agent axes j != agent of (S, A_0, ..., A_{N-1}, *extra)
    under the respective policies, leaving (S, A_agent, *extra)."""
    arr = tensor
    # descending order keeps axis 1 + j valid as higher axes disappear
    for j in range(policy.n_agents - 1, -1, -1):
        if j == agent:
            continue
        moved = np.moveaxis(arr, 1 + j, 1)
        arr = np.einsum("sj,sj...->s...", policy.probs(j), moved)
    return arr


def marginal_advantage(game: StochasticGame, policy: ProductPolicy,
                       agent: int, eval_result: ExactEvalResult) -> np.ndarray:
    """Joint advantage averaged over the other agents' policies, (S, A_i)."""
    policy.require_match(game)
    _check_agent(policy, agent)
    shaped = eval_result.adv.reshape(game.n_states, *game.action_counts)
    return _marginalize_over_others(game, policy, agent, shaped)


def decentralized_bellman_operator(
        game: StochasticGame, policy: ProductPolicy,
        agent: int) -> Callable[[np.ndarray], np.ndarray]:
    """The per-agent evaluation operator whose fixed point is the
    decentralized Q table.

    Applies q <- r_i + gamma * P_i @ E_{a' ~ pi_i}[q(s', a')], where r_i and
    P_i are the reward and transition averaged over the other agents. The
    operator is a gamma-contraction in the sup norm.
    """
    policy.require_match(game)
    _check_agent(policy, agent)
    s = game.n_states
    r_shaped = game.reward.reshape(s, *game.action_counts)
    p_shaped = game.transition.reshape(s, *game.action_counts, s)
    r_marg = _marginalize_over_others(game, policy, agent, r_shaped)
    p_marg = _marginalize_over_others(game, policy, agent, p_shaped)
    probs_i = policy.probs(agent)
    gamma = game.gamma

    def apply(q: np.ndarray) -> np.ndarray:
        ev = (probs_i * q).sum(axis=1)
        return r_marg + gamma * (p_marg @ ev)

    return apply


def decentralized_q_fixed_point(game: StochasticGame, policy: ProductPolicy,
                                agent: int,
                                tol: float = 1e-10) -> DecentralizedQ:
    """Iterate the decentralized operator from the zero table to its fixed
    point. Stop rule mirrors joint_value_iteration's tolerance semantics."""
    op = decentralized_bellman_operator(game, policy, agent)
    gamma = game.gamma
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    q = np.zeros((game.n_states, game.action_counts[agent]))
    while True:
        q_new = op(q)
        change = float(np.max(np.abs(q_new - q)))
        q = q_new
        if change < threshold or gamma == 0.0:
            return DecentralizedQ(agent=agent, q=q)


def decentralized_v(game: StochasticGame, policy: ProductPolicy, agent: int,
                    tol: float = 1e-10) -> np.ndarray:
    """Per-agent state values: own-policy average of the decentralized Q.

    Coincides with the joint V of the product policy.
    """
    fp = decentralized_q_fixed_point(game, policy, agent, tol=tol)
    return (policy.probs(agent) * fp.q).sum(axis=1)
