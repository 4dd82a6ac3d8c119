"""Trust-region surrogates, KL measures, and the improvement bound.

The central object is the lower bound

    J_new - J_old >= (1/N) sum_i L^i  -  m_tilde * sum_i sqrt(klmax_i)
                                      -  c * sum_i klmax_i

where L^i is the per-agent surrogate under the old occupancy and marginal
advantage, klmax_i is the per-agent maximum-over-states KL from old to new,
and the constants scale with the largest joint advantage magnitude.
verify_bound checks this inequality (and the coupling step it rests on)
numerically; exact_improvement_step turns the bound into a monotone
improvement procedure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import StochasticGame
from .errors import ConfigurationError
from .oracle import (ExactEvalResult, evaluate_joint_policy,
                     exact_state_values, marginal_advantage)
from .policies import ProductPolicy, softmax, softmax_kl

# smoothing inside sqrt-KL gradients; keeps the derivative finite at KL = 0
KL_EPS = 1e-12


@dataclass(frozen=True)
class SurrogateConstants:
    """Bound constants for a given old policy.

    m_abs   = max_{s,a} |A_old(s,a)|
    m_tilde = 2 m_abs / (1 - gamma)          (coupling coefficient)
    c_const = 4 gamma m_abs / (1 - gamma)^2  (trust-region coefficient)
    """

    m_abs: float
    m_tilde: float
    c_const: float


def constants(old_eval: ExactEvalResult, gamma: float) -> SurrogateConstants:
    if not 0.0 <= gamma < 1.0:
        raise ConfigurationError("gamma must be in [0, 1)")
    m_abs = float(np.max(np.abs(old_eval.adv)))
    return SurrogateConstants(
        m_abs=m_abs,
        m_tilde=2.0 * m_abs / (1.0 - gamma),
        c_const=4.0 * gamma * m_abs / (1.0 - gamma) ** 2,
    )


def surrogate_joint(game: StochasticGame, old_eval: ExactEvalResult,
                    new_policy: ProductPolicy) -> float:
    """Occupancy-weighted expected old advantage under the new joint policy.

    Zero when new equals old (the advantage averages to zero per state).
    """
    new_policy.require_match(game)
    w_new = new_policy.joint_probs()
    return float(np.einsum("s,sa,sa->", old_eval.rho, w_new, old_eval.adv))


def _agent_prob_table(new_agent_policy, agent: int) -> np.ndarray:
    if isinstance(new_agent_policy, ProductPolicy):
        return new_agent_policy.probs(agent)
    return np.asarray(new_agent_policy, dtype=np.float64)


def surrogate_individual(game: StochasticGame, old_eval: ExactEvalResult,
                         agent: int, new_agent_policy) -> float:
    """Per-agent surrogate: occupancy-weighted marginal advantage under the
    agent's new policy, other agents held at old.

    new_agent_policy may be a ProductPolicy (agent's table is extracted) or
    an (S, A_i) probability table.
    """
    p_new = _agent_prob_table(new_agent_policy, agent)
    a_i = marginal_advantage(game, old_eval.policy, agent, old_eval)
    if p_new.shape != a_i.shape:
        raise ConfigurationError(
            f"new policy table shape {p_new.shape} != {a_i.shape}")
    return float(np.einsum("s,sa,sa->", old_eval.rho, p_new, a_i))


def kl_per_state(old_policy: ProductPolicy, new_policy: ProductPolicy,
                 agent: int) -> np.ndarray:
    """KL(old_i(.|s) || new_i(.|s)) for every state, shape (S,)."""
    if old_policy.action_counts != new_policy.action_counts \
            or old_policy.n_states != new_policy.n_states:
        raise ConfigurationError("old and new policies have mismatched dims")
    return softmax_kl(old_policy.logits[agent], new_policy.logits[agent])


def kl_max(old_policy: ProductPolicy, new_policy: ProductPolicy,
           agent: int) -> float:
    return float(kl_per_state(old_policy, new_policy, agent).max())


def kl_avg(game: StochasticGame, old_eval: ExactEvalResult,
           new_policy: ProductPolicy, agent: int) -> float:
    """Occupancy-weighted mean per-state KL (weights rho / sum(rho))."""
    kl = kl_per_state(old_eval.policy, new_policy, agent)
    weights = old_eval.rho / old_eval.rho.sum()
    return float(weights @ kl)


@dataclass
class BoundReport:
    """Numerical audit of the improvement bound for one policy pair."""

    j_old: float
    j_new: float
    lhs: float                      # j_new - j_old
    l_joint: float
    l_individual: np.ndarray        # (N,)
    kl_max_per_agent: np.ndarray    # (N,)
    constants: SurrogateConstants
    rhs: float
    margin: float                   # lhs - rhs, >= -tol when the bound holds
    holds: bool
    coupling_gap: np.ndarray        # (N,) |l_joint - l_individual[i]|
    coupling_bound: np.ndarray      # (N,) m_tilde * sqrt(sum_{j != i} kl_j)
    coupling_holds: bool


def verify_bound(game: StochasticGame, old_policy: ProductPolicy,
                 new_policy: ProductPolicy, tol: float = 1e-9) -> BoundReport:
    """Evaluate both policies exactly and check the improvement bound and
    its per-agent coupling step."""
    old_policy.require_match(game)
    new_policy.require_match(game)
    old_eval = evaluate_joint_policy(game, old_policy)
    _, j_new = exact_state_values(game, new_policy)
    n = game.n_agents
    l_joint = surrogate_joint(game, old_eval, new_policy)
    l_ind = np.array([surrogate_individual(game, old_eval, i, new_policy)
                      for i in range(n)])
    kls = np.array([kl_max(old_policy, new_policy, i) for i in range(n)])
    consts = constants(old_eval, game.gamma)
    rhs = (l_ind.sum() / n
           - consts.m_tilde * np.sqrt(kls).sum()
           - consts.c_const * kls.sum())
    lhs = j_new - old_eval.j
    gap = np.abs(l_joint - l_ind)
    others = kls.sum() - kls
    coupling_bound = consts.m_tilde * np.sqrt(others)
    return BoundReport(
        j_old=old_eval.j, j_new=j_new, lhs=lhs, l_joint=l_joint,
        l_individual=l_ind, kl_max_per_agent=kls, constants=consts,
        rhs=float(rhs), margin=float(lhs - rhs), holds=bool(lhs >= rhs - tol),
        coupling_gap=gap, coupling_bound=coupling_bound,
        coupling_holds=bool(np.all(gap <= coupling_bound + tol)),
    )


def _exact_objective(theta: np.ndarray, old_logits: np.ndarray,
                     rho: np.ndarray, a_marg: np.ndarray, n_agents: int,
                     consts: SurrogateConstants) -> float:
    p = softmax(theta)
    l_i = float(np.einsum("s,sa,sa->", rho, p, a_marg))
    kl = softmax_kl(old_logits, theta)
    klmax = float(kl.max())
    return (l_i / n_agents - consts.m_tilde * np.sqrt(klmax)
            - consts.c_const * klmax)


def _exact_objective_grad(theta: np.ndarray, old_logits: np.ndarray,
                          rho: np.ndarray, a_marg: np.ndarray, n_agents: int,
                          consts: SurrogateConstants) -> np.ndarray:
    p = softmax(theta)
    p_old = softmax(old_logits)
    # d L^i / d theta[s, b] = rho_s p(b|s) (A_i(s, b) - sum_a p(a|s) A_i(s, a))
    mean_adv = (p * a_marg).sum(axis=1, keepdims=True)
    grad = rho[:, None] * p * (a_marg - mean_adv) / n_agents
    kl = softmax_kl(old_logits, theta)
    s_star = int(np.argmax(kl))  # ties resolve to the lowest state index
    klmax = float(kl[s_star])
    coef = consts.m_tilde / (2.0 * np.sqrt(klmax + KL_EPS)) + consts.c_const
    grad[s_star] -= coef * (p[s_star] - p_old[s_star])
    return grad


def exact_improvement_step(game: StochasticGame, old_policy: ProductPolicy,
                           inner_steps: int = 200,
                           inner_lr: float = 0.05) -> ProductPolicy:
    """One outer iteration of the exact decentralized improvement scheme.

    Every agent independently ascends its own bound objective

        (1/N) L^i - m_tilde * sqrt(klmax_i) - c * klmax_i

    starting from its old table, with backtracking on the true objective:
    a candidate step is kept only if it does not decrease the objective.
    Since staying at the old table scores zero, each agent's accepted value
    is >= 0, and the improvement bound then guarantees J_new >= J_old up to
    solver precision. All agents step simultaneously from the same old
    evaluation.

    Note the sqrt penalty has slope m_tilde at zero KL while the surrogate
    gain is capped at sqrt(2 klmax) m_abs / (1 - gamma) by the same total
    variation argument that proves the bound, which is m_tilde sqrt(klmax/2):
    the penalty dominates at every scale, so the objective's global maximum
    is the old table itself and the iterates (correctly) barely move. That
    conservatism is the motivation for the practical adaptive-coefficient
    objective in trainers.
    """
    if inner_steps < 0:
        raise ConfigurationError("inner_steps must be >= 0")
    old_policy.require_match(game)
    old_eval = evaluate_joint_policy(game, old_policy)
    consts = constants(old_eval, game.gamma)
    new_logits = []
    for i in range(game.n_agents):
        a_marg = marginal_advantage(game, old_policy, i, old_eval)
        old_logits = old_policy.logits[i]
        theta = old_logits.copy()
        args = (old_logits, old_eval.rho, a_marg, game.n_agents, consts)
        best = _exact_objective(theta, *args)
        lr = inner_lr
        grad = _exact_objective_grad(theta, *args)
        for _ in range(inner_steps):
            candidate = theta + lr * grad
            value = _exact_objective(candidate, *args)
            if value >= best:
                theta = candidate
                best = value
                grad = _exact_objective_grad(theta, *args)
            else:
                lr *= 0.5
                if lr < 1e-14:
                    break
        new_logits.append(theta)
    return ProductPolicy(new_logits)
