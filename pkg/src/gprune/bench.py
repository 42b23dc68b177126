"""Randomized evaluation of the greedy pruner.

Planted instances are block-diagonal matrices shuffled by random row and
column permutations; a perfect solver recovers all of their magnitude.
Per-sample seeds come from ``numpy.random.SeedSequence`` over
``(base_seed, size, g, sample)``, so sweeps do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import PermutationPair, ValidationError, apply_permutation, check_groups, invert_permutation
from .pruner import (
    DEFAULT_NS,
    PruneSolution,
    brute_force_oracle,
    greedy_permutation,
    recovery_ratio,
    solve_layer,
)

GENERATOR = "numpy.random.PCG64"
FULL_RECOVERY_TOL = 1e-12
HIST_BINS = 20


@dataclass(frozen=True)
class ValueDist:
    """In-block value distribution: ``uniform`` on [low, high] or ``halfnormal``."""

    kind: str = "uniform"
    low: float = 0.5
    high: float = 1.5

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, shape)
        if self.kind == "halfnormal":
            # strictly positive so planted blocks stay fully non-zero
            return np.abs(rng.standard_normal(shape)) + np.finfo(float).tiny
        raise ValidationError(f"unknown value distribution {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "uniform":
            return f"uniform[{self.low!r},{self.high!r}]"
        return self.kind


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    matrix: np.ndarray
    g: int
    truth: PermutationPair
    dist: ValueDist
    seed: object

    def unshuffled(self) -> np.ndarray:
        return apply_permutation(self.matrix, invert_permutation(self.truth))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, (tuple, list)):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))
    return np.random.Generator(np.random.PCG64(seed))


def generate_planted_instance(c: int, g: int, dist: ValueDist = ValueDist(), seed=0) -> PlantedInstance:
    """Block-diagonal ``c x c`` matrix with random in-block values, then shuffled.

    ``truth`` is the gather permutation that was applied, so un-permuting by
    its inverse gives back the block-diagonal matrix.
    """
    g = check_groups(c, c, g)
    rng = _rng(seed)
    b = c // g
    base = np.zeros((c, c))
    for k in range(g):
        base[k * b:(k + 1) * b, k * b:(k + 1) * b] = dist.sample(rng, (b, b))
    truth = PermutationPair(rng.permutation(c), rng.permutation(c))
    return PlantedInstance(apply_permutation(base, truth), g, truth, dist, seed)


def sample_seed(base_seed: int, size: int, g: int, index: int) -> tuple:
    return (int(base_seed), int(size), int(g), int(index))


@dataclass
class SweepEntry:
    size: int
    g: int
    ns: int
    samples: int
    full_fraction: float
    ge_090_fraction: float
    mean_ratio: float
    histogram: list[int]

    def to_dict(self) -> dict:
        return {
            "size": self.size, "g": self.g, "n_s": self.ns, "samples": self.samples,
            "full_fraction": self.full_fraction, "ge_0.9_fraction": self.ge_090_fraction,
            "mean_ratio": self.mean_ratio, "histogram": list(self.histogram),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepEntry":
        return cls(d["size"], d["g"], d["n_s"], d["samples"], d["full_fraction"],
                   d["ge_0.9_fraction"], d["mean_ratio"], list(d["histogram"]))


@dataclass
class SweepReport:
    base_seed: int
    dist: str
    entries: list[SweepEntry] = field(default_factory=list)
    generator: str = GENERATOR
    # raw per-sample ratios, keyed by (size, g, ns); not serialized
    ratios: dict = field(default_factory=dict, repr=False)

    def entry(self, size: int, g: int, ns: int) -> SweepEntry:
        for e in self.entries:
            if (e.size, e.g, e.ns) == (size, g, ns):
                return e
        raise KeyError((size, g, ns))

    def to_dict(self) -> dict:
        return {
            "kind": "recovery_sweep",
            "generator": self.generator,
            "base_seed": self.base_seed,
            "value_distribution": self.dist,
            "full_recovery_tol": FULL_RECOVERY_TOL,
            "histogram_bins": HIST_BINS,
            "entries": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(d["base_seed"], d["value_distribution"],
                   [SweepEntry.from_dict(e) for e in d["entries"]], d["generator"])

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["size", "g", "n_s", "bin_low", "bin_high", "count"])
        for e in self.entries:
            for i, count in enumerate(e.histogram):
                writer.writerow([e.size, e.g, e.ns, repr(i / HIST_BINS), repr((i + 1) / HIST_BINS), count])
        return buf.getvalue()


def ratio_histogram(ratios) -> list[int]:
    """20 equal bins on [0, 1]; a ratio of exactly 1.0 lands in the last bin."""
    idx = np.minimum((np.asarray(ratios) * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    return np.bincount(idx, minlength=HIST_BINS).tolist()


def summarize(size: int, g: int, ns: int, ratios) -> SweepEntry:
    r = np.asarray(ratios, dtype=np.float64)
    n = len(r)
    return SweepEntry(
        size, g, ns, n,
        float(np.count_nonzero(r >= 1.0 - FULL_RECOVERY_TOL) / n) if n else 0.0,
        float(np.count_nonzero(r >= 0.9) / n) if n else 0.0,
        float(r.mean()) if n else 0.0,
        ratio_histogram(r),
    )


def _instance_ratios(args) -> list[float]:
    size, g, ns_values, dist, seed = args
    inst = generate_planted_instance(size, g, dist, seed)
    return [recovery_ratio(inst.matrix, greedy_permutation(inst.matrix, g, ns), g) for ns in ns_values]


def recovery_sweep(samples: int, sizes: Sequence[int] = (16,), g_values: Sequence[int] = (4,),
                   ns_values: Sequence[int] = (0, 1, 2, 5, 10), base_seed: int = 0,
                   dist: ValueDist = ValueDist(), threads: Optional[int] = None) -> SweepReport:
    """Run the greedy pruner on planted instances for every (size, g, ns).

    All ``ns`` values see the same sample set for a given ``(size, g)``.
    """
    for size in sizes:
        for g in g_values:
            check_groups(size, size, g)
    report = SweepReport(int(base_seed), dist.describe())
    for size in sizes:
        for g in g_values:
            jobs = [(size, g, tuple(ns_values), dist, sample_seed(base_seed, size, g, i))
                    for i in range(samples)]
            if threads is not None and threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    rows = list(pool.map(_instance_ratios, jobs, chunksize=64))
            else:
                rows = [_instance_ratios(j) for j in jobs]
            table = np.array(rows, dtype=np.float64).reshape(samples, len(ns_values))
            for k, ns in enumerate(ns_values):
                report.ratios[(size, g, ns)] = table[:, k]
                report.entries.append(summarize(size, g, ns, table[:, k]))
    return report


@dataclass
class ImprovementRow:
    g: int
    ratio: float
    plain_ratio: float
    layers: int = 1

    @property
    def improvement(self) -> float:
        return self.ratio - self.plain_ratio

    def to_dict(self) -> dict:
        return {"g": self.g, "ratio": self.ratio, "plain_ratio": self.plain_ratio,
                "improvement": self.improvement, "layers": self.layers}


def improvement_report(source, g_values: Sequence[int], ns: int = DEFAULT_NS) -> list[ImprovementRow]:
    """Recovery ratio at ``ns`` rounds versus the unsorted (``ns = 0``) baseline.

    ``source`` is a single norm matrix or a sequence of per-layer norm
    matrices. For several layers the ratios are pooled, i.e. weighted by
    each layer's total magnitude; layers whose channel counts ``g`` does not
    divide are skipped for that ``g``.
    """
    if isinstance(source, np.ndarray) and source.ndim == 2:
        single = True
        mats = [source]
    else:
        single = False
        mats = [np.asarray(m, dtype=np.float64) for m in source]
    rows = []
    for g in g_values:
        kept = plain = total = 0.0
        used = 0
        for m in mats:
            c_out, c_in = m.shape
            if c_out % g or c_in % g:
                if single:
                    check_groups(c_out, c_in, g)
                continue
            kept += solve_layer(m, g, ns).objective
            plain += solve_layer(m, g, 0).objective
            total += float(m.sum())
            used += 1
        if total == 0.0:
            rows.append(ImprovementRow(g, 1.0, 1.0, used))
        else:
            rows.append(ImprovementRow(g, min(1.0, kept / total), min(1.0, plain / total), used))
    return rows


@dataclass(eq=False)
class AdversarialResult:
    found: bool
    trials: int
    instance: Optional[PlantedInstance] = None
    greedy: Optional[PruneSolution] = None
    oracle: Optional[PruneSolution] = None
    pattern: str = ""

    def to_dict(self) -> dict:
        d = {"kind": "adversarial_search", "found": self.found, "trials": self.trials}
        if self.found:
            inst = self.instance
            d.update({
                "pattern": self.pattern,
                "g": inst.g,
                "seed": list(inst.seed) if isinstance(inst.seed, tuple) else inst.seed,
                "matrix": inst.matrix.tolist(),
                "truth": inst.truth.to_dict(),
                "greedy": self.greedy.to_dict(),
                "oracle": self.oracle.to_dict(),
            })
        return d


def _decoy_instance(c: int, g: int, seed) -> PlantedInstance:
    """Planted instance whose blocks each hold one oversized entry.

    Small in-block values come from ``{1, ..., 4}`` and one entry per block
    is raised to ``{8, ..., 10}``, so the column sums that drive the first
    sort can point at columns of different groups.
    """
    g = check_groups(c, c, g)
    rng = _rng(seed)
    b = c // g
    base = np.zeros((c, c))
    for k in range(g):
        blk = rng.integers(1, 5, (b, b)).astype(np.float64)
        i, j = rng.integers(0, b, 2)
        blk[i, j] = float(rng.integers(8, 11))
        base[k * b:(k + 1) * b, k * b:(k + 1) * b] = blk
    truth = PermutationPair(rng.permutation(c), rng.permutation(c))
    return PlantedInstance(apply_permutation(base, truth), g, truth, ValueDist("decoy"), seed)


def find_adversarial_instance(c: int, g: int, trials: int, seed: int = 0,
                              ns: int = DEFAULT_NS) -> AdversarialResult:
    """Search for a planted instance the greedy pruner fails to recover.

    Even trials draw a uniform planted instance, odd trials a decoy one.
    The first instance where the greedy ratio falls below the oracle ratio
    is returned with both solutions.
    """
    for t in range(trials):
        s = (int(seed), int(c), int(g), t)
        if t % 2 == 0:
            inst, pattern = generate_planted_instance(c, g, ValueDist(), s), "uniform"
        else:
            inst, pattern = _decoy_instance(c, g, s), "decoy"
        greedy = solve_layer(inst.matrix, g, ns)
        if greedy.recovery_ratio >= 1.0 - FULL_RECOVERY_TOL:
            continue
        oracle = brute_force_oracle(inst.matrix, g)
        if greedy.recovery_ratio < oracle.recovery_ratio:
            return AdversarialResult(True, t + 1, inst, greedy, oracle, pattern)
    return AdversarialResult(False, trials)
