"""Per-layer group counts under parameter / operation budgets.

Parameter and operation counts are exact integers and cover convolution
weights only (no biases, no other layer types). One fused multiply-add
counts as two operations.
"""

from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import LayerSpec, ValidationError, as_norm_matrix, check_groups
from .pruner import DEFAULT_NS, solve_layer

DEFAULT_CONFIG_CAP = 10**6


class InfeasibleBudgetError(RuntimeError):
    pass


class ConfigSpaceTooLargeError(RuntimeError):
    pass


def group_candidates(c_in: int, c_out: int) -> list[int]:
    """Common divisors of both channel counts, largest first."""
    if c_in < 1 or c_out < 1:
        raise ValidationError(f"channel counts must be positive, got ({c_in}, {c_out})")
    d = math.gcd(c_in, c_out)
    return [g for g in range(d, 0, -1) if d % g == 0]


def num_params(layer: LayerSpec, g: int) -> int:
    g = check_groups(layer.c_out, layer.c_in, g)
    return layer.c_out * layer.c_in * layer.k_h * layer.k_w // g


def num_ops(layer: LayerSpec, g: int) -> int:
    g = check_groups(layer.c_out, layer.c_in, g)
    return 2 * layer.h_out * layer.w_out * layer.c_out * layer.c_in * layer.k_h * layer.k_w // g


@dataclass(frozen=True)
class BudgetConstraint:
    """Upper bounds on totals; ``None`` means unbounded."""

    max_params: Optional[int] = None
    max_ops: Optional[int] = None

    def __post_init__(self):
        for name in ("max_params", "max_ops"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or int(v) != v or v < 0):
                raise ValidationError(f"{name} must be a non-negative integer or None, got {v!r}")

    def admits(self, params: int, ops: int) -> bool:
        return ((self.max_params is None or params <= self.max_params)
                and (self.max_ops is None or ops <= self.max_ops))


class CostTable:
    """Memoized pruning cost of one layer for each candidate group count."""

    def __init__(self, m, ns: int = DEFAULT_NS, normalized: bool = False):
        self.m = as_norm_matrix(m)
        self.ns = ns
        self.normalized = normalized
        self.solves = 0
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()

    def __call__(self, g: int) -> float:
        with self._lock:
            if g in self._cache:
                return self._cache[g]
        if g == 1:
            cost = 0.0
        else:
            cost = solve_layer(self.m, g, self.ns).cost
            if self.normalized:
                total = float(self.m.sum())
                cost = cost / total if total > 0 else 0.0
        with self._lock:
            if g not in self._cache:
                self._cache[g] = cost
                self.solves += 1
            return self._cache[g]

    def as_dict(self) -> dict[int, float]:
        return dict(self._cache)


def cost_table(m, candidates: Sequence[int], ns: int = DEFAULT_NS,
               normalized: bool = False) -> dict[int, float]:
    table = CostTable(m, ns, normalized)
    return {g: table(g) for g in candidates}


@dataclass
class GroupConfig:
    layers: list[str]
    groups: list[int]
    layer_costs: list[float]
    total_params: int
    total_ops: int
    total_cost: float
    moves: int = 0

    def to_dict(self) -> dict:
        return {
            "scope": "conv-only",
            "layers": [{"name": n, "g": g, "cost": c}
                       for n, g, c in zip(self.layers, self.groups, self.layer_costs)],
            "total_params": self.total_params,
            "total_ops": self.total_ops,
            "total_cost": self.total_cost,
        }


@dataclass
class _Problem:
    specs: list[LayerSpec]
    tables: list[CostTable]
    candidates: list[list[int]] = field(default_factory=list)

    def totals(self, groups) -> tuple[int, int]:
        params = sum(num_params(s, g) for s, g in zip(self.specs, groups))
        ops = sum(num_ops(s, g) for s, g in zip(self.specs, groups))
        return params, ops

    def config(self, groups, moves=0) -> GroupConfig:
        groups = list(groups)
        costs = [t(g) for t, g in zip(self.tables, groups)]
        params, ops = self.totals(groups)
        return GroupConfig([s.name for s in self.specs], groups, costs,
                           params, ops, total_cost(costs), moves)


def total_cost(costs: Sequence[float]) -> float:
    # fixed left-to-right order so equal configurations give equal totals
    acc = 0.0
    for c in costs:
        acc += c
    return acc


def _problem(layers, ns, normalized, threads) -> _Problem:
    specs, tables = [], []
    for spec, m in layers:
        m = as_norm_matrix(m)
        if m.shape != (spec.c_out, spec.c_in):
            raise ValidationError(
                f"layer {spec.name!r}: norm matrix shape {m.shape} != ({spec.c_out}, {spec.c_in})")
        specs.append(spec)
        tables.append(CostTable(m, ns, normalized))
    cands = [group_candidates(s.c_in, s.c_out) for s in specs]
    problem = _Problem(specs, tables, cands)
    if threads is not None and threads > 1:
        jobs = [(t, g) for t, cs in zip(tables, cands) for g in cs]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda job: job[0](job[1]), jobs))
    return problem


def local_search(layers, budget: BudgetConstraint, ns: int = DEFAULT_NS,
                 direction: str = "densify", normalized: bool = False,
                 threads: Optional[int] = None) -> GroupConfig:
    """Greedy walk over per-layer group counts.

    ``layers`` is a sequence of ``(LayerSpec, norm_matrix)`` pairs.

    ``densify`` starts every layer at its largest group count and keeps
    moving the layer whose next smaller candidate has the lowest cost,
    stopping just before a move would break the budget. ``sparsify`` starts
    from G=1 everywhere and keeps moving the layer whose next larger
    candidate raises its cost the least, until the budget is met. Ties go to
    the lowest layer index.
    """
    problem = _problem(layers, ns, normalized, threads)
    if direction == "densify":
        return _densify(problem, budget)
    if direction == "sparsify":
        return _sparsify(problem, budget)
    raise ValidationError(f"direction must be 'densify' or 'sparsify', got {direction!r}")


def _densify(p: _Problem, budget: BudgetConstraint) -> GroupConfig:
    state = [0] * len(p.specs)
    groups = [c[0] for c in p.candidates]
    if not budget.admits(*p.totals(groups)):
        params, ops = p.totals(groups)
        raise InfeasibleBudgetError(
            f"infeasible budget: largest group counts already need {params} params / {ops} ops")
    moves = 0
    while True:
        best_l, best_cost = None, math.inf
        for l, cands in enumerate(p.candidates):
            if state[l] + 1 < len(cands):
                c = p.tables[l](cands[state[l] + 1])
                if c < best_cost:
                    best_l, best_cost = l, c
        if best_l is None:
            break
        trial = list(groups)
        trial[best_l] = p.candidates[best_l][state[best_l] + 1]
        if not budget.admits(*p.totals(trial)):
            break
        state[best_l] += 1
        groups = trial
        moves += 1
    return p.config(groups, moves)


def _sparsify(p: _Problem, budget: BudgetConstraint) -> GroupConfig:
    state = [len(c) - 1 for c in p.candidates]
    groups = [c[-1] for c in p.candidates]
    moves = 0
    while not budget.admits(*p.totals(groups)):
        best_l, best_inc = None, math.inf
        for l, cands in enumerate(p.candidates):
            if state[l] > 0:
                inc = p.tables[l](cands[state[l] - 1]) - p.tables[l](cands[state[l]])
                if inc < best_inc:
                    best_l, best_inc = l, inc
        if best_l is None:
            params, ops = p.totals(groups)
            raise InfeasibleBudgetError(
                f"infeasible budget: largest group counts still need {params} params / {ops} ops")
        state[best_l] -= 1
        groups[best_l] = p.candidates[best_l][state[best_l]]
        moves += 1
    return p.config(groups, moves)


def exhaustive_config_oracle(layers, budget: BudgetConstraint, ns: int = DEFAULT_NS,
                             normalized: bool = False, cap: int = DEFAULT_CONFIG_CAP,
                             threads: Optional[int] = None) -> GroupConfig:
    """Minimum-cost feasible configuration over every candidate combination.

    Ties go to the lexicographically smallest tuple of group counts.
    """
    problem = _problem(layers, ns, normalized, threads)
    size = math.prod(len(c) for c in problem.candidates)
    if size > cap:
        raise ConfigSpaceTooLargeError(f"configuration space too large: {size} combinations (cap {cap})")
    best = None
    for groups in sorted(itertools.product(*problem.candidates)):
        if not budget.admits(*problem.totals(groups)):
            continue
        cost = total_cost([t(g) for t, g in zip(problem.tables, groups)])
        if best is None or cost < best[0]:
            best = (cost, groups)
    if best is None:
        raise InfeasibleBudgetError("infeasible budget: no configuration satisfies the constraints")
    return problem.config(best[1])


def uniform_totals(specs: Sequence[LayerSpec], which: str = "max") -> tuple[int, int]:
    """Budget totals with every layer at its largest (``max``) or smallest (``min``) G."""
    pick = 0 if which == "max" else -1
    groups = [group_candidates(s.c_in, s.c_out)[pick] for s in specs]
    return (sum(num_params(s, g) for s, g in zip(specs, groups)),
            sum(num_ops(s, g) for s, g in zip(specs, groups)))


def random_layer_fixture(n_layers: int, seed: int, channels=(4, 6, 8, 12, 16),
                         kernels=(1, 3), spatial=(2, 4, 8)) -> list[tuple[LayerSpec, np.ndarray]]:
    """Synthetic layers with seeded half-normal norm matrices."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_layers):
        c_in, c_out = (int(rng.choice(channels)) for _ in range(2))
        k = int(rng.choice(kernels))
        hw = int(rng.choice(spatial))
        spec = LayerSpec(f"conv{i}", c_in, c_out, k, k, hw, hw)
        out.append((spec, np.abs(rng.standard_normal((c_out, c_in)))))
    return out
