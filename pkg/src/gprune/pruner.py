"""Single-layer pruning into group-convolution structure.

Given a kernel-norm matrix and a number of groups ``G``, find input/output
channel permutations that move as much magnitude as possible into the ``G``
diagonal blocks. Everything outside the blocks is pruned.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    PermutationPair,
    ValidationError,
    as_norm_matrix,
    block_diagonal_mask,
    check_groups,
)

DEFAULT_NS = 10
DEFAULT_ORACLE_CAP = 10**8


class OracleTooLargeError(RuntimeError):
    """The exhaustive oracle refuses instances above its enumeration cap."""


@dataclass(frozen=True)
class PruneSolution:
    perms: PermutationPair
    g: int
    objective: float
    cost: float
    recovery_ratio: float

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "objective": self.objective,
            "cost": self.cost,
            "recovery_ratio": self.recovery_ratio,
            **self.perms.to_dict(),
        }


def _check_ns(ns) -> int:
    if isinstance(ns, bool) or int(ns) != ns or ns < 0:
        raise ValidationError(f"number of sorting rounds must be a non-negative integer, got {ns!r}")
    return int(ns)


def _is_identity(order: np.ndarray) -> bool:
    return bool(np.all(order == np.arange(len(order))))


def greedy_permutation(m, g: int, ns: int = DEFAULT_NS) -> PermutationPair:
    """Block-by-block sorting heuristic.

    Blocks are resolved from the bottom-right one to the top-left one. For
    block ``b`` only channels in the prefix ``[0, b * c / G)`` may move; the
    channels behind it belong to blocks already resolved and stay frozen.
    Each of the ``ns`` rounds sorts the input prefix ascending by the column
    sums over the block's output rows, then the output prefix ascending by
    the row sums over the block's input columns, so the heaviest channels
    end up inside the block. Sorts are stable.
    """
    m = as_norm_matrix(m)
    c_out, c_in = m.shape
    g = check_groups(c_out, c_in, g)
    ns = _check_ns(ns)
    bo, bi = c_out // g, c_in // g

    out_perm = np.arange(c_out)
    in_perm = np.arange(c_in)
    for b in range(g, 0, -1):
        r0, r1 = (b - 1) * bo, b * bo
        k0, k1 = (b - 1) * bi, b * bi
        for _ in range(ns):
            col_keys = m[np.ix_(out_perm[r0:r1], in_perm[:k1])].sum(axis=0)
            col_order = np.argsort(col_keys, kind="stable")
            in_perm[:k1] = in_perm[:k1][col_order]
            # keys recomputed against the updated input order
            row_keys = m[np.ix_(out_perm[:r1], in_perm[k0:k1])].sum(axis=1)
            row_order = np.argsort(row_keys, kind="stable")
            out_perm[:r1] = out_perm[:r1][row_order]
            # a round that moves nothing is a fixed point; later rounds repeat it
            if _is_identity(col_order) and _is_identity(row_order):
                break
    return PermutationPair(out_perm, in_perm)


def prune_mask(c_out: int, c_in: int, g: int, perms: PermutationPair) -> np.ndarray:
    """Boolean ``(c_out, c_in)`` mask in original channel coordinates.

    Entry ``(out_perm[f], in_perm[c])`` is kept iff ``(f, c)`` lies in a
    diagonal block. Every row keeps ``c_in / g`` kernels and every column
    ``c_out / g``.
    """
    g = check_groups(c_out, c_in, g)
    if perms.c_out != c_out or perms.c_in != c_in:
        raise ValidationError(
            f"permutation lengths ({perms.c_out}, {perms.c_in}) do not match ({c_out}, {c_in})")
    mask = np.zeros((c_out, c_in), dtype=bool)
    mask[np.ix_(perms.out_perm, perms.in_perm)] = block_diagonal_mask(c_out, c_in, g)
    return mask


def retained_magnitude(m, perms: PermutationPair, g: int) -> float:
    """Magnitude kept inside the diagonal blocks after permuting.

    Summed over the kept entries in original row-major order, so two
    permutation pairs that keep the same set of kernels give bit-identical
    values.
    """
    m = as_norm_matrix(m)
    return float(m[prune_mask(*m.shape, g, perms)].sum())


def recovery_ratio(m, perms: PermutationPair, g: int) -> float:
    """Fraction of total magnitude kept in the diagonal blocks (0/0 is 1.0)."""
    m = as_norm_matrix(m)
    kept = retained_magnitude(m, perms, g)
    total = float(m.sum())
    if total == 0.0:
        return 1.0
    return min(1.0, kept / total)


def _solution(m: np.ndarray, perms: PermutationPair, g: int) -> PruneSolution:
    objective = retained_magnitude(m, perms, g)
    total = float(m.sum())
    ratio = 1.0 if total == 0.0 else min(1.0, objective / total)
    return PruneSolution(perms, g, objective, max(0.0, total - objective), ratio)


def solve_layer(m, g: int, ns: int = DEFAULT_NS) -> PruneSolution:
    m = as_norm_matrix(m)
    return _solution(m, greedy_permutation(m, g, ns), g)


# -- exhaustive oracle -------------------------------------------------------

def _set_partitions(n: int, g: int):
    """Partitions of ``range(n)`` into ``g`` unlabeled groups of size ``n // g``.

    Groups come out ordered by their smallest member (channel 0 always lands
    in group 0), which removes the ``g!`` relabeling symmetry.
    """
    size = n // g

    def rec(remaining):
        if not remaining:
            yield ()
            return
        first, rest = remaining[0], remaining[1:]
        for others in itertools.combinations(rest, size - 1):
            group = (first,) + others
            left = tuple(x for x in rest if x not in others)
            for tail in rec(left):
                yield (group,) + tail

    yield from rec(tuple(range(n)))


def _labeled_assignments(n: int, g: int):
    """Every assignment of ``range(n)`` to ``g`` labeled groups of equal size."""
    size = n // g

    def rec(remaining, k):
        if k == g - 1:
            yield (remaining,)
            return
        for group in itertools.combinations(remaining, size):
            left = tuple(x for x in remaining if x not in group)
            for tail in rec(left, k + 1):
                yield (group,) + tail

    yield from rec(tuple(range(n)), 0)


def _multinomial_count(n: int, g: int) -> int:
    size = n // g
    return math.factorial(n) // math.factorial(size) ** g


def oracle_enumeration_count(c_out: int, c_in: int, g: int) -> int:
    """Objective evaluations the exhaustive oracle needs for this shape."""
    g = check_groups(c_out, c_in, g)
    in_partitions = _multinomial_count(c_in, g) // math.factorial(g)
    return in_partitions * _multinomial_count(c_out, g)


def _perm_from_groups(groups) -> np.ndarray:
    return np.array([i for grp in groups for i in sorted(grp)], dtype=np.int64)


def brute_force_oracle(m, g: int, cap: int = DEFAULT_ORACLE_CAP) -> PruneSolution:
    """Globally optimal permutation pair by exhaustive enumeration.

    Input channels are split into canonical (unlabeled) partitions; for each,
    every labeled split of the output channels is scored. Among optimal
    solutions the first one in enumeration order wins.
    """
    m = as_norm_matrix(m)
    c_out, c_in = m.shape
    g = check_groups(c_out, c_in, g)
    count = oracle_enumeration_count(c_out, c_in, g)
    if count > cap:
        raise OracleTooLargeError(
            f"instance too large for oracle: {count} evaluations for {c_out}x{c_in}, G={g} (cap {cap})")

    out_assignments = list(_labeled_assignments(c_out, g))
    # labels[a, f] = group of output channel f under assignment a
    labels = np.empty((len(out_assignments), c_out), dtype=np.int64)
    for a, groups in enumerate(out_assignments):
        for k, grp in enumerate(groups):
            labels[a, list(grp)] = k
    rows = np.arange(c_out)

    scored = []
    best = -math.inf
    for in_groups in _set_partitions(c_in, g):
        # per_group[f, k] = magnitude of row f inside input group k
        per_group = np.stack([m[:, list(grp)].sum(axis=1) for grp in in_groups], axis=1)
        values = per_group[rows, labels].sum(axis=1)
        top = float(values.max())
        best = max(best, top)
        near = np.flatnonzero(values >= top - 1e-9 * max(1.0, abs(top)))
        scored.extend((float(values[i]), in_groups, int(i)) for i in near)

    # Candidates within float noise of the best are re-scored with the
    # canonical summation so the winner never loses to a tie on rounding.
    tol = 1e-9 * max(1.0, abs(best))
    winner = None
    for v, in_groups, idx in scored:
        if v < best - tol:
            continue
        perms = PermutationPair(_perm_from_groups(out_assignments[idx]), _perm_from_groups(in_groups))
        sol = _solution(m, perms, g)
        if winner is None or sol.objective > winner.objective:
            winner = sol
    return winner
