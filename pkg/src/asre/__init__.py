"""Sparse-action MDPs, KL-to-prior regularized Q-learning and bandit-driven sparsity evaluation."""
from .agent import AgentConfig, train
from .envs import EnvSpec, build_budgeted_shooter, build_chain_with_trigger, build_synthetic_market
from .harness import ExperimentConfig, compare, lambda_sweep, load_config, run_experiment
from .learner import EvalProtocol
from .mdp import ContractError, SparseActionMdp, run_episode
from .soft_bellman import SparsityDistribution, regularized_value_iteration, soft_value

__all__ = [
    "AgentConfig", "ContractError", "EnvSpec", "EvalProtocol", "ExperimentConfig", "SparseActionMdp",
    "SparsityDistribution", "build_budgeted_shooter", "build_chain_with_trigger",
    "build_synthetic_market", "compare", "lambda_sweep", "load_config", "regularized_value_iteration",
    "run_episode", "run_experiment", "soft_value", "train",
]
