"""Randomized machine checks of the theory.

Each suite draws random small instances, evaluates the exact quantities,
and checks an identity or inequality at a stated tolerance. The suites
return per-trial row dicts (CSV-friendly) plus a pass flag, and are used
both by the command line verifier and by the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import StochasticGame, generate_game
from .oracle import (decentralized_bellman_operator,
                     decentralized_q_fixed_point, decentralized_v,
                     evaluate_joint_policy, exact_state_values,
                     joint_value_iteration)
from .policies import ProductPolicy, log_softmax
from .surrogate import exact_improvement_step, kl_per_state, verify_bound
from .trainers import (dpo_objective_and_grad, ippo_kl_objective_and_grad,
                       ippo_objective_and_grad)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    rows: list[dict]
    summary: str


def small_reference_game(seed: int = 3) -> StochasticGame:
    """The 2-state, 2-agent, 2x2-action game used by the exact-step checks."""
    return generate_game(seed=seed, n_states=2, n_agents=2,
                         action_counts=[2, 2], gamma=0.9)


def _random_small_game(rng: np.random.Generator) -> StochasticGame:
    n_states = int(rng.integers(2, 7))
    n_agents = int(rng.integers(1, 4))
    counts = [int(rng.integers(2, 4)) for _ in range(n_agents)]
    gamma = float(rng.uniform(0.5, 0.95))
    return generate_game(seed=int(rng.integers(0, 2 ** 31)),
                         n_states=n_states, n_agents=n_agents,
                         action_counts=counts, gamma=gamma,
                         transition_alpha=0.5)


def _random_policy(rng: np.random.Generator, game: StochasticGame,
                   adversarial: bool) -> ProductPolicy:
    logits = []
    for a in game.action_counts:
        table = 1.5 * rng.standard_normal((game.n_states, a))
        if adversarial:
            # near-deterministic rows stress the bound where KL is large
            picks = rng.integers(0, a, size=game.n_states)
            table[np.arange(game.n_states), picks] += 8.0
        logits.append(table)
    return ProductPolicy(logits)


def run_bound_trials(seed: int, trials: int, tol: float = 1e-9,
                     c_scale: float = 1.0) -> SuiteResult:
    """Improvement-bound and coupling-step audit on random triples.

    c_scale rescales the trust-region constant in the checked inequality;
    anything other than 1.0 is a deliberate fault injection used to prove
    the verifier can fail.
    """
    rng = np.random.default_rng(seed)
    rows = []
    n_pass = 0
    for trial in range(trials):
        game = _random_small_game(rng)
        adversarial = trial % 10 == 9
        old = _random_policy(rng, game, adversarial)
        new = _random_policy(rng, game, adversarial)
        rep = verify_bound(game, old, new, tol=tol)
        holds = rep.holds
        rhs = rep.rhs
        if c_scale != 1.0:
            kls = rep.kl_max_per_agent
            rhs = (rep.l_individual.sum() / game.n_agents
                   - rep.constants.m_tilde * np.sqrt(kls).sum()
                   - c_scale * rep.constants.c_const * kls.sum())
            holds = bool(rep.lhs >= rhs - tol)
        ok = holds and rep.coupling_holds
        n_pass += ok
        rows.append({
            "trial": trial, "n_states": game.n_states,
            "n_agents": game.n_agents, "gamma": game.gamma,
            "adversarial": int(adversarial), "j_old": rep.j_old,
            "j_new": rep.j_new, "lhs": rep.lhs, "rhs": float(rhs),
            "margin": float(rep.lhs - rhs),
            "coupling_gap_max": float(rep.coupling_gap.max()),
            "coupling_slack_min": float(
                (rep.coupling_bound - rep.coupling_gap).min()),
            "bound_holds": int(holds),
            "coupling_holds": int(rep.coupling_holds),
        })
    return SuiteResult(
        name="bound", passed=n_pass == trials, rows=rows,
        summary=f"improvement bound + coupling step: {n_pass}/{trials} trials")


def run_fixed_point_trials(seed: int, trials: int,
                           tol: float = 1e-8) -> SuiteResult:
    """Decentralized critic identity, contraction ratio, and V agreement."""
    rng = np.random.default_rng(seed)
    rows = []
    n_pass = 0
    for trial in range(trials):
        game = _random_small_game(rng)
        policy = _random_policy(rng, game, adversarial=trial % 7 == 6)
        ev = evaluate_joint_policy(game, policy)
        q_shaped = ev.q.reshape(game.n_states, *game.action_counts)
        worst_fp = 0.0
        worst_v = 0.0
        worst_ratio = 0.0
        for i in range(game.n_agents):
            fp = decentralized_q_fixed_point(game, policy, i, tol=1e-12)
            marg = q_shaped
            for j in range(game.n_agents - 1, -1, -1):
                if j == i:
                    continue
                moved = np.moveaxis(marg, 1 + j, 1)
                marg = np.einsum("sj,sj...->s...", policy.probs(j), moved)
            worst_fp = max(worst_fp, float(np.max(np.abs(fp.q - marg))))
            v_i = decentralized_v(game, policy, i, tol=1e-12)
            worst_v = max(worst_v, float(np.max(np.abs(v_i - ev.v))))
            op = decentralized_bellman_operator(game, policy, i)
            q_a = np.zeros_like(fp.q)
            q_b = rng.standard_normal(fp.q.shape)
            prev = float(np.max(np.abs(q_a - q_b)))
            for _ in range(12):
                q_a, q_b = op(q_a), op(q_b)
                diff = float(np.max(np.abs(q_a - q_b)))
                if prev > 1e-13:
                    worst_ratio = max(worst_ratio, diff / prev)
                prev = diff
        ok = (worst_fp <= tol and worst_v <= tol
              and worst_ratio <= game.gamma + 1e-9)
        n_pass += ok
        rows.append({
            "trial": trial, "n_states": game.n_states,
            "n_agents": game.n_agents, "gamma": game.gamma,
            "fixed_point_err": worst_fp, "dec_v_err": worst_v,
            "contraction_ratio": worst_ratio, "ok": int(ok),
        })
    return SuiteResult(
        name="fixed_point", passed=n_pass == trials, rows=rows,
        summary=f"decentralized critic fixed point: {n_pass}/{trials} instances")


def _joint_kl_rows(old: ProductPolicy, new: ProductPolicy) -> np.ndarray:
    """Per-state KL between the dense joint categorical distributions."""
    w_old = old.joint_probs()
    # accumulate joint log-probs agent by agent to avoid log(product)
    s = old.n_states
    lp_old = np.zeros((s, 1))
    lp_new = np.zeros((s, 1))
    for i in range(old.n_agents):
        lo = log_softmax(old.logits[i])
        ln = log_softmax(new.logits[i])
        lp_old = (lp_old[:, :, None] + lo[:, None, :]).reshape(s, -1)
        lp_new = (lp_new[:, :, None] + ln[:, None, :]).reshape(s, -1)
    return (w_old * (lp_old - lp_new)).sum(axis=1)


def run_kl_additivity_trials(seed: int, trials: int,
                             tol: float = 1e-12) -> SuiteResult:
    """Joint per-state KL equals the sum of per-agent KLs for products."""
    rng = np.random.default_rng(seed)
    rows = []
    n_pass = 0
    for trial in range(trials):
        game = _random_small_game(rng)
        old = _random_policy(rng, game, adversarial=trial % 5 == 4)
        new = _random_policy(rng, game, adversarial=trial % 5 == 4)
        joint = _joint_kl_rows(old, new)
        total = np.zeros(game.n_states)
        for i in range(game.n_agents):
            total += kl_per_state(old, new, i)
        err = float(np.max(np.abs(joint - total)))
        ok = err <= tol
        n_pass += ok
        rows.append({"trial": trial, "n_states": game.n_states,
                     "n_agents": game.n_agents, "max_abs_err": err,
                     "ok": int(ok)})
    return SuiteResult(
        name="kl_additivity", passed=n_pass == trials, rows=rows,
        summary=f"KL additivity over product policies: {n_pass}/{trials} pairs")


def finite_difference_gradient(f: Callable[[np.ndarray], float],
                               theta: np.ndarray,
                               h: float = 1e-6) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    grad = np.zeros_like(theta)
    it = np.nditer(theta, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = theta.copy()
        up[idx] += h
        down = theta.copy()
        down[idx] -= h
        grad[idx] = (f(up) - f(down)) / (2.0 * h)
        it.iternext()
    return grad


def run_gradient_checks(seed: int, trials: int,
                        tol: float = 1e-5) -> SuiteResult:
    """Analytic gradients of the three policy objectives vs finite
    differences on random synthetic batches."""
    rng = np.random.default_rng(seed)
    rows = []
    n_pass = 0
    for trial in range(trials):
        s = int(rng.integers(2, 6))
        a = int(rng.integers(2, 5))
        t = int(rng.integers(8, 40))
        states = rng.integers(0, s, size=t)
        actions = rng.integers(0, a, size=t)
        adv = rng.standard_normal(t)
        old_logits = rng.standard_normal((s, a))
        theta = old_logits + 0.3 * rng.standard_normal((s, a))
        beta1 = float(rng.uniform(0.001, 0.5))
        beta2 = float(rng.uniform(0.001, 0.5))
        n_agents = int(rng.integers(1, 5))
        clip_eps = 0.2
        cases = {
            "dpo": (
                lambda th: dpo_objective_and_grad(
                    th, old_logits, states, actions, adv, beta1, beta2,
                    n_agents)),
            "ippo": (
                lambda th: ippo_objective_and_grad(
                    th, old_logits, states, actions, adv, clip_eps)),
            "ippo_kl": (
                lambda th: ippo_kl_objective_and_grad(
                    th, old_logits, states, actions, adv, beta2, n_agents)),
        }
        row = {"trial": trial, "n_states": s, "n_actions": a, "batch": t}
        ok = True
        for name, fn in cases.items():
            _, grad = fn(theta)
            fd = finite_difference_gradient(lambda th: fn(th)[0], theta)
            denom = max(float(np.linalg.norm(fd)), 1e-12)
            rel = float(np.linalg.norm(grad - fd)) / denom
            row[f"rel_err_{name}"] = rel
            ok = ok and rel <= tol
        row["ok"] = int(ok)
        n_pass += ok
        rows.append(row)
    return SuiteResult(
        name="gradients", passed=n_pass == trials, rows=rows,
        summary=f"objective gradients vs finite differences: {n_pass}/{trials} instances")


def run_exact_step_check(iterations: int = 20, seed: int = 3,
                         slack: float = 1e-10) -> SuiteResult:
    """Monotonicity of the exact improvement iterates on the reference game."""
    game = small_reference_game(seed)
    vi = joint_value_iteration(game, tol=1e-10)
    policy = ProductPolicy.uniform(game.n_states, game.action_counts)
    rows = []
    js = []
    for it in range(iterations + 1):
        _, j = exact_state_values(game, policy)
        js.append(j)
        rows.append({"iteration": it, "j": j, "j_star": vi.j_star})
        if it < iterations:
            policy = exact_improvement_step(game, policy)
    monotone = all(b >= a - slack for a, b in zip(js, js[1:]))
    below = all(j <= vi.j_star + 1e-9 for j in js)
    return SuiteResult(
        name="exact_step", passed=monotone and below, rows=rows,
        summary=(f"exact improvement: monotone={monotone}, "
                 f"below j_star={below}, final J={js[-1]:.6f}"))
