"""Prune dense convolutions into permuted group convolutions."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    LayerSpec,
    PermutationPair,
    ValidationError,
    apply_permutation,
    diagonal_block_sum,
    invert_permutation,
    kernel_norm_matrix,
)
from .pruner import (  # noqa: E402
    OracleTooLargeError,
    PruneSolution,
    brute_force_oracle,
    greedy_permutation,
    prune_mask,
    recovery_ratio,
    solve_layer,
)
from .search import (  # noqa: E402
    BudgetConstraint,
    GroupConfig,
    InfeasibleBudgetError,
    exhaustive_config_oracle,
    group_candidates,
    local_search,
    num_ops,
    num_params,
)
