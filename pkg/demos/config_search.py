"""
Choosing group counts per layer under a budget
==============================================

Every layer gets its own G. Higher G is cheaper but prunes more magnitude.
The local search starts from the sparsest setting and densifies the layer
whose next step costs least, until the parameter budget would be exceeded.
"""

from gprune.search import (
    BudgetConstraint,
    exhaustive_config_oracle,
    local_search,
    random_layer_fixture,
    uniform_totals,
)

layers = random_layer_fixture(4, seed=1)
specs = [s for s, _ in layers]
for s in specs:
    print(f"{s.name}: {s.c_out}x{s.c_in} k={s.k_h} out={s.h_out}x{s.w_out}")

lo, _ = uniform_totals(specs, "max")   # params with every layer at its max G
hi, _ = uniform_totals(specs, "min")   # params of the dense network
budget = BudgetConstraint(max_params=(lo + hi) // 3)
print(f"param range {lo}..{hi}, budget {budget.max_params}")

cfg = local_search(layers, budget)
print("densify :", cfg.groups, "cost", round(cfg.total_cost, 4), "params", cfg.total_params)

sparse = local_search(layers, budget, direction="sparsify")
print("sparsify:", sparse.groups, "cost", round(sparse.total_cost, 4), "params", sparse.total_params)

# small enough to check against every configuration
best = exhaustive_config_oracle(layers, budget)
print("optimum :", best.groups, "cost", round(best.total_cost, 4))
