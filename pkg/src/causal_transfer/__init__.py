"""Causal bounds for transferring a demonstrator's experience to a learner
that cannot observe the demonstrator's context."""
from .causal_bounds import (CausalInterval, Priors, ResponseMappings, bound_all, critical_pairs,
                            priors_from_model, reward_do_bounds, transition_do_bounds)
from .demonstrator import (ObservationalDistribution, analytic_observational, collect_observations,
                           contextual_optimal_policy, epsilon_greedy, naive_estimates, naive_mdp,
                           tabulated_policy)
from .environments import GridSpec, build_gridworld, build_reward_gridworld, build_transition_gridworld
from .learners import (LearnerConfig, LearnerResult, run_cb_ucb_q, run_cbc_q, run_q_learning,
                       run_ucb_q)
from .lp import LinearProgram, solve
from .mdp import ContextualMdp, Mdp, marginalize, policy_value, q_from_v, value_iteration
from .value_bounds import (BoundedMdpModel, QBoundTable, q_bounds, robust_value_bounds,
                           weighted_relaxation_bounds)

__version__ = "0.1.0"

__all__ = [
    "BoundedMdpModel", "CausalInterval", "ContextualMdp", "GridSpec", "LearnerConfig",
    "LearnerResult", "LinearProgram", "Mdp", "ObservationalDistribution", "Priors", "QBoundTable",
    "ResponseMappings", "analytic_observational", "bound_all", "build_gridworld",
    "build_reward_gridworld", "build_transition_gridworld", "collect_observations",
    "contextual_optimal_policy", "critical_pairs", "epsilon_greedy", "marginalize",
    "naive_estimates", "naive_mdp", "policy_value", "priors_from_model", "q_bounds", "q_from_v",
    "reward_do_bounds", "robust_value_bounds", "run_cb_ucb_q", "run_cbc_q", "run_q_learning",
    "run_ucb_q", "solve", "tabulated_policy", "transition_do_bounds", "value_iteration",
    "weighted_relaxation_bounds",
]
