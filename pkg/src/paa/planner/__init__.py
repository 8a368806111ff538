from .params import (
    ErrorBudget,
    InfeasibleToleranceError,
    SuboptimalityBound,
    ToleranceSpec,
    compute_aa_params,
    compute_paa_params,
    divergence_limit,
    error_budget,
    min_feasible_epsilon,
    q_error_bound,
    suboptimality_bound,
)
from .sampling import (
    DEFAULT_NODE_BUDGET,
    NodeBudgetError,
    PlannerParams,
    paa_action,
    q_hat,
    q_hat_row,
    tree_nodes,
)

__all__ = [
    "DEFAULT_NODE_BUDGET", "ErrorBudget", "InfeasibleToleranceError", "NodeBudgetError",
    "PlannerParams", "SuboptimalityBound", "ToleranceSpec", "compute_aa_params",
    "compute_paa_params", "divergence_limit", "error_budget", "min_feasible_epsilon",
    "paa_action", "q_error_bound", "q_hat", "q_hat_row", "suboptimality_bound", "tree_nodes",
]
