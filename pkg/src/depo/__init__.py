"""Decentralized policy optimization on tabular cooperative stochastic games.

Exact dynamic-programming oracles, trust-region style decentralized policy
updates, and independent-learner baselines, all on small finite games where
every quantity the theory talks about can be computed to machine precision.
"""

from ._core import backend
from .env import (JointActionCodec, StochasticGame, TransitionBatch,
                  generate_game, load_game, rollout, save_game, step)
from .errors import ConfigurationError, OptimizationError
from .oracle import (DecentralizedQ, ExactEvalResult, ValueIterationResult,
                     decentralized_q_fixed_point, decentralized_v,
                     evaluate_joint_policy, exact_state_values,
                     joint_value_iteration, marginal_advantage)
from .policies import ProductPolicy, epsilon_greedy_tables
from .surrogate import (BoundReport, SurrogateConstants, constants,
                        exact_improvement_step, kl_avg, kl_max, kl_per_state,
                        surrogate_individual, surrogate_joint, verify_bound)
from .trainers import TrainerConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "BoundReport", "ConfigurationError", "DecentralizedQ", "ExactEvalResult",
    "JointActionCodec", "OptimizationError", "ProductPolicy",
    "StochasticGame", "SurrogateConstants", "TrainResult", "TrainerConfig",
    "TransitionBatch", "ValueIterationResult", "backend", "constants",
    "decentralized_q_fixed_point", "decentralized_v", "epsilon_greedy_tables",
    "evaluate_joint_policy", "exact_improvement_step", "exact_state_values",
    "generate_game", "joint_value_iteration", "kl_avg", "kl_max",
    "kl_per_state", "load_game", "marginal_advantage", "rollout", "save_game",
    "step", "surrogate_individual", "surrogate_joint", "train",
    "verify_bound",
]
