"""
Exporting a pruned layer and checking it computes the same thing
================================================================

The pruned layer can be run three ways: the dense conv with a mask, a real
group convolution with permuted inputs and outputs, and (for 1x1 kernels)
a CSR sparse product. All three should agree.
"""

import numpy as np

from gprune import kernel_norm_matrix, solve_layer
from gprune.equivalence import (
    export_grouped,
    export_sparse,
    grouped_forward,
    masked_forward,
    relative_error,
)
from gprune.pruner import prune_mask

rng = np.random.default_rng(3)
g = 4

# a 3x3 layer through the grouped path
w = rng.standard_normal((16, 12, 3, 3))
sol = solve_layer(kernel_norm_matrix(w), g)
mask = prune_mask(16, 12, g, sol.perms)
export = export_grouped(w, sol.perms, g)
print("block shapes:", [b.shape for b in export.blocks])

x = rng.standard_normal((12, 8, 8))
ref = masked_forward(x, w, mask, padding=1)
print("grouped vs masked:", relative_error(grouped_forward(x, export, padding=1), ref))
print("reassembly exact:", np.array_equal(export.reassemble(), w * mask[:, :, None, None]))

# a pointwise layer through the sparse path
w1 = rng.standard_normal((16, 16, 1, 1))
sol1 = solve_layer(kernel_norm_matrix(w1), g)
mask1 = prune_mask(16, 16, g, sol1.perms)
csr = export_sparse(w1, mask1)
x1 = rng.standard_normal((16, 5, 5))
print("nonzeros per row:", csr.row_counts())
print("sparse vs masked:", relative_error(csr.matvec(x1), masked_forward(x1, w1, mask1)))
