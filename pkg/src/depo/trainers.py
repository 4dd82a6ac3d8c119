"""Sample-based training: DPO, independent PPO variants, and Q-learning.

All policy-gradient objectives here are plain functions of one agent's
logit table; their analytic gradients are exposed alongside the values so
they can be checked against finite differences. Updates receive only the
agent's own projection of the batch (state, own action, shared reward,
next state) and the agent's own parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _core
from .env import AgentBatch, StochasticGame, TransitionBatch, rollout
from .errors import ConfigurationError
from .oracle import (evaluate_joint_policy, exact_state_values,
                     marginal_advantage)
from .policies import ProductPolicy, epsilon_greedy_tables, log_softmax, softmax, softmax_kl
from .surrogate import KL_EPS

BETA_MIN = 1e-8
BETA_MAX = 1e8

ALGOS = ("dpo", "ippo", "ippo_kl", "iql")


@dataclass
class AdamState:
    """Adam moment accumulators for one parameter table."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params))

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        """Advance the moments and return the scaled increment.

        Add the result to ascend the objective the gradient belongs to, or
        subtract it to descend.
        """
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        m_hat = self.m / (1.0 - self.b1 ** self.t)
        v_hat = self.v / (1.0 - self.b2 ** self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def clone(self) -> "AdamState":
        return AdamState(m=self.m.copy(), v=self.v.copy(), t=self.t,
                         b1=self.b1, b2=self.b2, eps=self.eps)

    def load(self, other: "AdamState") -> None:
        self.m = other.m.copy()
        self.v = other.v.copy()
        self.t = other.t


@dataclass(frozen=True)
class AdaptiveState:
    """Per-agent adaptive KL-penalty coefficients and their controller
    settings."""

    beta1: float
    beta2: float
    d_target: float
    delta: float = 1.5
    omega: float = 2.0


def adapt_coefficients(state: AdaptiveState,
                       realized_kl: float) -> AdaptiveState:
    """Move both coefficients by the same factor based on where the
    realized average KL landed relative to the target band.

    Above d_target * delta: multiply by omega. Below d_target / delta:
    divide by omega. Inside the band: unchanged. Results are clamped to
    [1e-8, 1e8].
    """
    if realized_kl > state.d_target * state.delta:
        scale = state.omega
    elif realized_kl < state.d_target / state.delta:
        scale = 1.0 / state.omega
    else:
        scale = 1.0
    def clamp(b: float) -> float:
        return float(min(max(b * scale, BETA_MIN), BETA_MAX))

    return AdaptiveState(beta1=clamp(state.beta1), beta2=clamp(state.beta2),
                         d_target=state.d_target, delta=state.delta,
                         omega=state.omega)


def mc_returns(view: AgentBatch, gamma: float) -> np.ndarray:
    """Discounted return-to-go of every record within its own episode."""
    r = view.rewards.reshape(view.n_episodes, view.horizon)
    out = np.empty_like(r)
    acc = np.zeros(view.n_episodes)
    for t in range(view.horizon - 1, -1, -1):
        acc = r[:, t] + gamma * acc
        out[:, t] = acc
    return out.reshape(-1)


def advantage_estimate(view: AgentBatch, critic: np.ndarray, gamma: float,
                       target_mode: str = "mc") -> np.ndarray:
    """One-step advantage r + gamma V(s') - V(s) against the given critic.

    Horizon truncation is not termination, so the bootstrap term is kept at
    cutoff records in td mode; in mc mode it is dropped there to stay
    consistent with Monte Carlo critic targets.
    """
    if target_mode not in ("mc", "td"):
        raise ConfigurationError("target_mode must be 'mc' or 'td'")
    boot = gamma * critic[view.next_states]
    if target_mode == "mc":
        boot = np.where(view.terminal, 0.0, boot)
    return view.rewards + boot - critic[view.states]


def critic_update(critic: np.ndarray, view: AgentBatch, lr: float,
                  epochs: int, gamma: float, target_mode: str = "mc",
                  adam: AdamState | None = None) -> np.ndarray:
    """Gradient steps on the mean squared value error; returns the new table.

    Targets are fixed at the start of the round: Monte Carlo return-to-go
    in mc mode, one-step bootstrap off the frozen input critic in td mode.
    """
    if target_mode == "mc":
        y = mc_returns(view, gamma)
    elif target_mode == "td":
        y = view.rewards + gamma * critic[view.next_states]
    else:
        raise ConfigurationError("target_mode must be 'mc' or 'td'")
    t = view.n_records
    v = critic.copy()
    for _ in range(epochs):
        err = v[view.states] - y
        grad = 2.0 / t * np.bincount(view.states, weights=err,
                                     minlength=len(v))
        v -= adam.step(grad, lr) if adam is not None else lr * grad
    return v


def _log_ratios(theta: np.ndarray, old_logits: np.ndarray,
                states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    lp = log_softmax(theta)
    lp_old = log_softmax(old_logits)
    return lp[states, actions] - lp_old[states, actions]


def _score_weighted_grad(theta: np.ndarray, states: np.ndarray,
                         actions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gradient of sum_t w_t log pi(a_t|s_t) plus the reparameterization
    term, i.e. sum_t w_t (e_{a_t} - pi(.|s_t)) laid out as an (S, A) table."""
    s, a = theta.shape
    flat = np.bincount(states * a + actions, weights=weights,
                       minlength=s * a).reshape(s, a)
    row = np.bincount(states, weights=weights, minlength=s)
    return flat - softmax(theta) * row[:, None]


def dpo_objective_and_grad(theta: np.ndarray, old_logits: np.ndarray,
                           states: np.ndarray, actions: np.ndarray,
                           advantages: np.ndarray, beta1: float,
                           beta2: float,
                           n_agents: int) -> tuple[float, np.ndarray]:
    """Penalty-form surrogate: (1/N) mean ratio*A - beta1 sqrt(KL) - beta2 KL.

    KL is the batch-state average of the exact per-state KL(old || theta);
    the square root is smoothed as sqrt(KL + 1e-12), in the objective and
    the gradient alike, so the two always match.
    """
    t = len(states)
    s_dim = theta.shape[0]
    u = np.exp(_log_ratios(theta, old_logits, states, actions))
    l_hat = float(u @ advantages) / t
    counts = np.bincount(states, minlength=s_dim).astype(np.float64)
    kl_rows = softmax_kl(old_logits, theta)
    kl_avg = float(counts @ kl_rows) / t
    value = (l_hat / n_agents - beta1 * np.sqrt(kl_avg + KL_EPS)
             - beta2 * kl_avg)
    grad_l = _score_weighted_grad(theta, states, actions, u * advantages) / t
    grad_kl = counts[:, None] / t * (softmax(theta) - softmax(old_logits))
    coef = beta1 / (2.0 * np.sqrt(kl_avg + KL_EPS)) + beta2
    return value, grad_l / n_agents - coef * grad_kl


def ippo_kl_objective_and_grad(theta: np.ndarray, old_logits: np.ndarray,
                               states: np.ndarray, actions: np.ndarray,
                               advantages: np.ndarray, beta2: float,
                               n_agents: int) -> tuple[float, np.ndarray]:
    """DPO's objective with the square-root term absent (beta1 = 0)."""
    return dpo_objective_and_grad(theta, old_logits, states, actions,
                                  advantages, 0.0, beta2, n_agents)


def ippo_objective_and_grad(theta: np.ndarray, old_logits: np.ndarray,
                            states: np.ndarray, actions: np.ndarray,
                            advantages: np.ndarray,
                            clip_eps: float) -> tuple[float, np.ndarray]:
    """Clipped surrogate mean_t min(u A, clip(u, 1-eps, 1+eps) A)."""
    t = len(states)
    u = np.exp(_log_ratios(theta, old_logits, states, actions))
    clipped = np.clip(u, 1.0 - clip_eps, 1.0 + clip_eps)
    raw = u * advantages
    capped = clipped * advantages
    value = float(np.minimum(raw, capped).sum()) / t
    # gradient flows only where the unclipped branch attains the min
    w = np.where(raw <= capped, raw, 0.0)
    return value, _score_weighted_grad(theta, states, actions, w) / t


def ippo_hinge_objective(theta: np.ndarray, old_logits: np.ndarray,
                         states: np.ndarray, actions: np.ndarray,
                         advantages: np.ndarray, clip_eps: float) -> float:
    """Hinge rewrite of the clipped surrogate:

        min(uA, clip(u)A) = A(1 + sign(A) eps) - |A| max(0, eps - sign(A)(u-1))

    Algebraically identical per record; the first term does not depend on
    theta.
    """
    t = len(states)
    u = np.exp(_log_ratios(theta, old_logits, states, actions))
    sign = np.sign(advantages)
    const = advantages * (1.0 + sign * clip_eps)
    hinge = np.maximum(0.0, clip_eps - sign * (u - 1.0))
    return float((const - np.abs(advantages) * hinge).sum()) / t


def _ascend(theta: np.ndarray, objective_grad, lr: float, epochs: int,
            adam: AdamState | None) -> np.ndarray:
    """Run epochs ascent steps; abort to the start point on non-finite
    values (the optimizer state is rolled back too)."""
    start = theta.copy()
    snapshot = adam.clone() if adam is not None else None
    for _ in range(epochs):
        value, grad = objective_grad(theta)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            if adam is not None and snapshot is not None:
                adam.load(snapshot)
            return start
        theta = theta + (adam.step(grad, lr) if adam is not None
                         else lr * grad)
    return theta


def dpo_policy_update(logits: np.ndarray, view: AgentBatch,
                      advantages: np.ndarray, adaptive: AdaptiveState,
                      lr: float, epochs: int, n_agents: int,
                      adam: AdamState | None = None) -> np.ndarray:
    old = logits.copy()
    return _ascend(
        logits.copy(),
        lambda th: dpo_objective_and_grad(th, old, view.states, view.actions,
                                          advantages, adaptive.beta1,
                                          adaptive.beta2, n_agents),
        lr, epochs, adam)


def ippo_kl_policy_update(logits: np.ndarray, view: AgentBatch,
                          advantages: np.ndarray, adaptive: AdaptiveState,
                          lr: float, epochs: int, n_agents: int,
                          adam: AdamState | None = None) -> np.ndarray:
    """Same code path as DPO with the sqrt coefficient pinned to zero."""
    pinned = AdaptiveState(beta1=0.0, beta2=adaptive.beta2,
                           d_target=adaptive.d_target, delta=adaptive.delta,
                           omega=adaptive.omega)
    return dpo_policy_update(logits, view, advantages, pinned, lr, epochs,
                             n_agents, adam)


def ippo_policy_update(logits: np.ndarray, view: AgentBatch,
                       advantages: np.ndarray, clip_eps: float, lr: float,
                       epochs: int,
                       adam: AdamState | None = None) -> np.ndarray:
    old = logits.copy()
    return _ascend(
        logits.copy(),
        lambda th: ippo_objective_and_grad(th, old, view.states, view.actions,
                                           advantages, clip_eps),
        lr, epochs, adam)


def iql_update(q: np.ndarray, record: Sequence, alpha: float,
               gamma: float) -> np.ndarray:
    """One tabular Q-learning update from a (s, a, r, s') record; returns a
    new table. Bootstraps unconditionally (truncation is not termination)."""
    s, a, r, s2 = int(record[0]), int(record[1]), float(record[2]), int(record[3])
    out = q.copy()
    best = q[s2, 0]
    for k in range(1, q.shape[1]):
        if q[s2, k] > best:
            best = q[s2, k]
    out[s, a] = q[s, a] + alpha * (r + gamma * best - q[s, a])
    return out


def iql_sweep(q: np.ndarray, view: AgentBatch, alpha: float,
              gamma: float) -> None:
    """Sequential Q-learning over the whole batch in rollout order, in
    place. Matches repeated iql_update application exactly."""
    _core.iql_sweep(q, view.states, view.actions, view.rewards,
                    view.next_states, alpha, gamma)


@dataclass
class TrainerConfig:
    """Knobs for train(). Defaults reproduce the didactic experiment."""

    iterations: int = 40
    batch_episodes: int = 16
    horizon: int = 100
    epochs: int = 5
    actor_lr: float = 0.1
    critic_lr: float = 1.0
    clip_eps: float = 0.2
    beta1_init: float = 0.01
    beta2_init: float = 0.01
    d_target: float = 0.1
    delta: float = 1.5
    omega: float = 2.0
    exact_advantage: bool = False
    normalize_advantages: bool = False
    critic_target_mode: str = "mc"
    eval_exact_every: int = 1
    iql_alpha: float = 0.1
    iql_eps_start: float = 1.0
    iql_eps_final: float = 0.05

    def validate(self) -> None:
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.batch_episodes < 1:
            raise ConfigurationError("batch_episodes must be >= 1")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.eval_exact_every < 1:
            raise ConfigurationError("eval_exact_every must be >= 1")
        if self.critic_target_mode not in ("mc", "td"):
            raise ConfigurationError("critic_target_mode must be 'mc' or 'td'")
        for name in ("actor_lr", "critic_lr", "clip_eps", "d_target",
                     "delta", "omega", "iql_alpha"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("beta1_init", "beta2_init"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0.0 <= self.iql_eps_final <= self.iql_eps_start <= 1.0:
            raise ConfigurationError(
                "iql_eps_final must satisfy 0 <= final <= start <= 1")


@dataclass
class TrainResult:
    rows: list[dict]
    final_policy: ProductPolicy | None
    final_q: list[np.ndarray] | None
    final_j: float | None


def curve_columns(algo: str, n_agents: int) -> list[str]:
    """CSV column order for one run of the given algorithm.

    Row dicts additionally carry an internal j_is_exact flag (1 when
    discounted_J_estimate came from the linear solver rather than the batch
    Monte Carlo average); it is not part of the CSV schema.
    """
    cols = ["algo", "seed", "iteration", "env_steps",
            "mean_return_undiscounted", "discounted_J_estimate"]
    if algo in ("dpo", "ippo_kl"):
        for i in range(n_agents):
            cols += [f"kl_{i}", f"beta1_{i}", f"beta2_{i}"]
    return cols


def _realized_kl(old_logits: np.ndarray, new_logits: np.ndarray,
                 counts: np.ndarray, n_records: int) -> float:
    rows = softmax_kl(old_logits, new_logits)
    return float(counts @ rows) / n_records


def train(game: StochasticGame, algo: str, cfg: TrainerConfig,
          seed: int) -> TrainResult:
    """Run one seeded training run; returns per-iteration curve rows.

    Per-iteration RNG streams are derived from (seed, iteration), so a run
    is reproducible regardless of scheduling. discounted_j is evaluated
    exactly every eval_exact_every iterations (and always at the last one);
    other rows carry the batch Monte Carlo estimate, flagged j_is_exact=0.
    """
    if algo not in ALGOS:
        raise ConfigurationError(f"algo must be one of {ALGOS}")
    cfg.validate()
    if algo == "iql":
        return _train_iql(game, cfg, seed)
    return _train_policy_gradient(game, algo, cfg, seed)


def _estimate_j(game: StochasticGame, policy, batch: TransitionBatch,
                cfg: TrainerConfig, it: int) -> tuple[float, int]:
    exact = it % cfg.eval_exact_every == 0 or it == cfg.iterations - 1
    if exact:
        _, j = exact_state_values(game, policy)
        return j, 1
    return float(batch.discounted_returns(game.gamma).mean()), 0


def _train_policy_gradient(game: StochasticGame, algo: str,
                           cfg: TrainerConfig, seed: int) -> TrainResult:
    n = game.n_agents
    policy = ProductPolicy.uniform(game.n_states, game.action_counts)
    critics = [np.zeros(game.n_states) for _ in range(n)]
    adam_actor = [AdamState.like(policy.logits[i]) for i in range(n)]
    adam_critic = [AdamState.like(critics[i]) for i in range(n)]
    beta1 = 0.0 if algo == "ippo_kl" else cfg.beta1_init
    adaptive = [AdaptiveState(beta1=beta1, beta2=cfg.beta2_init,
                              d_target=cfg.d_target, delta=cfg.delta,
                              omega=cfg.omega) for _ in range(n)]
    rows: list[dict] = []
    final_j: float | None = None
    for it in range(cfg.iterations):
        batch = rollout(game, policy, cfg.horizon, cfg.batch_episodes,
                        np.random.SeedSequence([seed, it]))
        counts = np.bincount(batch.states,
                             minlength=game.n_states).astype(np.float64)
        j_est, j_exact_flag = _estimate_j(game, policy, batch, cfg, it)
        if j_exact_flag:
            final_j = j_est
        old_eval = None
        if cfg.exact_advantage:
            old_eval = evaluate_joint_policy(game, policy)
        old_logits = [policy.logits[i].copy() for i in range(n)]
        row = {
            "algo": algo, "seed": seed, "iteration": it,
            "env_steps": (it + 1) * cfg.batch_episodes * cfg.horizon,
            "mean_return_undiscounted": float(batch.episode_returns().mean()),
            "discounted_J_estimate": j_est, "j_is_exact": j_exact_flag,
        }
        for i in range(n):
            view = batch.agent_view(i)
            if cfg.exact_advantage:
                table = marginal_advantage(game, policy, i, old_eval)
                adv = table[view.states, view.actions]
            else:
                critics[i] = critic_update(critics[i], view, cfg.critic_lr,
                                           cfg.epochs, game.gamma,
                                           cfg.critic_target_mode,
                                           adam_critic[i])
                adv = advantage_estimate(view, critics[i], game.gamma,
                                         cfg.critic_target_mode)
            if cfg.normalize_advantages:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            if algo == "dpo":
                new_logits = dpo_policy_update(
                    old_logits[i], view, adv, adaptive[i], cfg.actor_lr,
                    cfg.epochs, n, adam_actor[i])
            elif algo == "ippo_kl":
                new_logits = ippo_kl_policy_update(
                    old_logits[i], view, adv, adaptive[i], cfg.actor_lr,
                    cfg.epochs, n, adam_actor[i])
            else:
                new_logits = ippo_policy_update(
                    old_logits[i], view, adv, cfg.clip_eps, cfg.actor_lr,
                    cfg.epochs, adam_actor[i])
            policy.logits[i] = new_logits
            if algo in ("dpo", "ippo_kl"):
                realized = _realized_kl(old_logits[i], new_logits, counts,
                                        batch.n_records)
                adaptive[i] = adapt_coefficients(adaptive[i], realized)
                if algo == "ippo_kl":
                    # the sqrt term does not exist for this algorithm; keep
                    # its coefficient structurally zero across adaptations
                    adaptive[i] = AdaptiveState(
                        beta1=0.0, beta2=adaptive[i].beta2,
                        d_target=cfg.d_target, delta=cfg.delta,
                        omega=cfg.omega)
                row[f"kl_{i}"] = realized
                row[f"beta1_{i}"] = adaptive[i].beta1
                row[f"beta2_{i}"] = adaptive[i].beta2
        rows.append(row)
    return TrainResult(rows=rows, final_policy=policy, final_q=None,
                       final_j=final_j)


def _train_iql(game: StochasticGame, cfg: TrainerConfig,
               seed: int) -> TrainResult:
    n = game.n_agents
    q = [np.zeros((game.n_states, a)) for a in game.action_counts]
    half = cfg.iterations // 2
    rows: list[dict] = []
    final_j: float | None = None
    tables = None
    for it in range(cfg.iterations):
        frac = 1.0 if half == 0 else min(1.0, it / half)
        eps = cfg.iql_eps_start + (cfg.iql_eps_final - cfg.iql_eps_start) * frac
        tables = epsilon_greedy_tables(q, eps)
        batch = rollout(game, tables, cfg.horizon, cfg.batch_episodes,
                        np.random.SeedSequence([seed, it]))
        j_est, j_exact_flag = _estimate_j(game, tables, batch, cfg, it)
        if j_exact_flag:
            final_j = j_est
        rows.append({
            "algo": "iql", "seed": seed, "iteration": it,
            "env_steps": (it + 1) * cfg.batch_episodes * cfg.horizon,
            "mean_return_undiscounted": float(batch.episode_returns().mean()),
            "discounted_J_estimate": j_est, "j_is_exact": j_exact_flag,
        })
        for i in range(n):
            iql_sweep(q[i], batch.agent_view(i), cfg.iql_alpha, game.gamma)
    policy = None
    if tables is not None:
        policy = ProductPolicy([np.log(np.maximum(t, 1e-300))
                                for t in tables])
    return TrainResult(rows=rows, final_policy=policy, final_q=q,
                       final_j=final_j)


def greedy_policy_tables(q_tables: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Deterministic greedy tables from per-agent Q tables (ties to the
    lowest action index), usable with rollout and exact_state_values."""
    return epsilon_greedy_tables(q_tables, 0.0)
