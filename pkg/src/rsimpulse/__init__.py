"""Long-run risk-sensitive impulse control on finite continuous-time Markov chains."""
__version__ = "0.1.0"

from .bellman import BellmanSolution, bellman_residual, lambda_delta, lambda_full
from .eigensolver import EigenSolution, SolverOptions, check_fixed_point, solve_one_step
from .model import ModelSpec, load_model, loads_model, normalize_running_cost, validate_model
from .policy import Policy, oracle_lambda, policy_growth_rate, strategy_from_solution
from .propagator import semigroup_type, weighted_kernel
from .simulator import SimConfig, estimate_J

__all__ = [
    "BellmanSolution", "EigenSolution", "ModelSpec", "Policy", "SimConfig", "SolverOptions",
    "bellman_residual", "check_fixed_point", "estimate_J", "lambda_delta", "lambda_full",
    "load_model", "loads_model", "normalize_running_cost", "oracle_lambda", "policy_growth_rate",
    "semigroup_type", "solve_one_step", "strategy_from_solution", "validate_model", "weighted_kernel",
]
