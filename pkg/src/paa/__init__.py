"""Welfare-aligned planning in social MDPs with sampled assessors and an approximate model."""

from .oracle import Policy, ValueTable, greedy_policy, monte_carlo_welfare, policy_evaluation, value_iteration
from .planner import (
    ErrorBudget,
    InfeasibleToleranceError,
    NodeBudgetError,
    PlannerParams,
    ToleranceSpec,
    compute_aa_params,
    compute_paa_params,
    paa_action,
    q_error_bound,
    q_hat,
    suboptimality_bound,
)
from .safeguard import SafeguardConfig, alpha_threshold, restrict_policy, safe_action_set, safe_step
from .smdp import ModelPair, Smdp, empirical_reward, expectation_gap_bound, perturb_kernel, sup_kl, true_reward
from .welfare import (
    WelfareConfig,
    gamma_factor,
    hoeffding_serfling_bound,
    power_mean,
    power_mean_concentration_bound,
    sample_assessors,
)

__version__ = "0.1.0"
