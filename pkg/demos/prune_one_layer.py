"""
Pruning a single layer into group structure
===========================================

Take a random 3x3 conv layer, reduce it to a matrix of kernel norms, and
look for channel orderings that pack as much magnitude as possible into
the diagonal blocks of a G-group layout.
"""

import numpy as np

from gprune import kernel_norm_matrix, solve_layer
from gprune.pruner import brute_force_oracle, prune_mask

rng = np.random.default_rng(0)
weights = rng.standard_normal((8, 8, 3, 3))

# each entry is the L2 norm of one 3x3 kernel
m = kernel_norm_matrix(weights)
print("kernel norm matrix:\n", np.round(m, 2))

# with no sorting rounds we just prune whatever is off the diagonal
for ns in (0, 1, 10):
    sol = solve_layer(m, g=2, ns=ns)
    print(f"n_s={ns:2d}: recovery ratio {sol.recovery_ratio:.4f}")

# the brute-force oracle is affordable at this size
best = brute_force_oracle(m, 2)
print(f"oracle:  recovery ratio {best.recovery_ratio:.4f}")

# the mask keeps exactly c_in/G kernels in every output channel
sol = solve_layer(m, 2)
mask = prune_mask(8, 8, 2, sol.perms)
print("kept per row:", mask.sum(axis=1))
print("in_perm:", sol.perms.in_perm, "out_perm:", sol.perms.out_perm)
