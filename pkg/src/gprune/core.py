"""Weight tensors, kernel-norm matrices and channel permutations.

Tensors are plain ``numpy`` arrays. A weight tensor has shape
``(c_out, c_in, k_h, k_w)``; a norm matrix has shape ``(c_out, c_in)``.
All channel indices are 0-based.

A :class:`PermutationPair` uses gather semantics::

    permuted[f, c] = original[out_perm[f], in_perm[c]]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a shape, range or bijection constraint."""


def _first_bad_index(a: np.ndarray) -> tuple:
    bad = np.argwhere(~np.isfinite(a))
    return tuple(int(i) for i in bad[0])


def as_weight_tensor(w) -> np.ndarray:
    """Validate ``w`` as a 4-D finite weight tensor and return it as float64."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 4:
        raise ValidationError(f"weight tensor must be 4-D (c_out, c_in, k_h, k_w), got shape {w.shape}")
    if min(w.shape) < 1:
        raise ValidationError(f"weight tensor dimensions must be positive, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"non-finite weight value at index {_first_bad_index(w)}")
    return w


def as_norm_matrix(m) -> np.ndarray:
    """Validate ``m`` as a finite non-negative 2-D matrix and return it as float64."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"norm matrix must be 2-D (c_out, c_in), got shape {m.shape}")
    if min(m.shape) < 1:
        raise ValidationError(f"norm matrix dimensions must be positive, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"non-finite norm value at index {_first_bad_index(m)}")
    if np.any(m < 0):
        bad = tuple(int(i) for i in np.argwhere(m < 0)[0])
        raise ValidationError(f"negative norm value at index {bad}")
    return m


def kernel_norm_matrix(w) -> np.ndarray:
    """L2 norm of every ``(k_h, k_w)`` kernel of a weight tensor.

    Returns a ``(c_out, c_in)`` matrix. Biases never enter here.
    """
    w = as_weight_tensor(w)
    return np.sqrt(np.sum(w * w, axis=(2, 3)))


def _check_perm(p, n: int, axis: str) -> np.ndarray:
    p = np.asarray(p)
    if p.ndim != 1 or len(p) != n:
        raise ValidationError(f"{axis} permutation must have length {n}, got shape {p.shape}")
    if n and not np.issubdtype(p.dtype, np.integer):
        raise ValidationError(f"{axis} permutation must hold integers, got dtype {p.dtype}")
    p = p.astype(np.int64)
    seen = np.zeros(n, dtype=bool)
    if n and (p.min() < 0 or p.max() >= n):
        raise ValidationError(f"{axis} permutation has entries outside [0, {n})")
    seen[p] = True
    if not seen.all():
        raise ValidationError(f"{axis} permutation is not a bijection on [0, {n})")
    return p


@dataclass(frozen=True, eq=False)
class PermutationPair:
    """Output- and input-channel gather permutations."""

    out_perm: np.ndarray
    in_perm: np.ndarray

    def __post_init__(self):
        out_perm = _check_perm(self.out_perm, len(np.asarray(self.out_perm)), "output")
        in_perm = _check_perm(self.in_perm, len(np.asarray(self.in_perm)), "input")
        out_perm.setflags(write=False)
        in_perm.setflags(write=False)
        object.__setattr__(self, "out_perm", out_perm)
        object.__setattr__(self, "in_perm", in_perm)

    @classmethod
    def identity(cls, c_out: int, c_in: int) -> "PermutationPair":
        return cls(np.arange(c_out), np.arange(c_in))

    @property
    def c_out(self) -> int:
        return len(self.out_perm)

    @property
    def c_in(self) -> int:
        return len(self.in_perm)

    def __eq__(self, other):
        if not isinstance(other, PermutationPair):
            return NotImplemented
        return (np.array_equal(self.out_perm, other.out_perm)
                and np.array_equal(self.in_perm, other.in_perm))

    def __hash__(self):
        return hash((self.out_perm.tobytes(), self.in_perm.tobytes()))

    def __repr__(self):
        return f"PermutationPair(out_perm={self.out_perm.tolist()}, in_perm={self.in_perm.tolist()})"

    def to_dict(self) -> dict:
        return {"out_perm": self.out_perm.tolist(), "in_perm": self.in_perm.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PermutationPair":
        return cls(np.asarray(d["out_perm"], dtype=np.int64), np.asarray(d["in_perm"], dtype=np.int64))


def invert_permutation(p: PermutationPair) -> PermutationPair:
    return PermutationPair(np.argsort(p.out_perm), np.argsort(p.in_perm))


def apply_permutation(a, p: PermutationPair) -> np.ndarray:
    """Permute the two leading (channel) axes of a norm matrix or weight tensor.

    ``result[f, c] = a[p.out_perm[f], p.in_perm[c]]``; for a weight tensor
    the whole kernel moves with its indices.
    """
    a = np.asarray(a)
    if a.ndim not in (2, 4):
        raise ValidationError(f"expected a 2-D norm matrix or 4-D weight tensor, got shape {a.shape}")
    if a.shape[0] != p.c_out or a.shape[1] != p.c_in:
        raise ValidationError(
            f"permutation lengths ({p.c_out}, {p.c_in}) do not match channel dims {a.shape[:2]}")
    return a[p.out_perm][:, p.in_perm]


def check_groups(c_out: int, c_in: int, g: int) -> int:
    if isinstance(g, bool) or int(g) != g or g < 1:
        raise ValidationError(f"number of groups must be a positive integer, got {g!r}")
    g = int(g)
    if c_out % g or c_in % g:
        raise ValidationError(f"G={g} does not divide both c_out={c_out} and c_in={c_in}")
    return g


def block_diagonal_mask(c_out: int, c_in: int, g: int) -> np.ndarray:
    """Boolean ``(c_out, c_in)`` mask of the ``g`` diagonal blocks in permuted space."""
    g = check_groups(c_out, c_in, g)
    return np.kron(np.eye(g, dtype=bool), np.ones((c_out // g, c_in // g), dtype=bool))


def diagonal_block_sum(m, g: int) -> float:
    """Sum of the entries of ``m`` that fall inside the ``g`` diagonal blocks."""
    m = as_norm_matrix(m)
    return float(m[block_diagonal_mask(*m.shape, g)].sum())


@dataclass(frozen=True)
class LayerSpec:
    """Shape of one convolution layer, plus its output size for op counting."""

    name: str
    c_in: int
    c_out: int
    k_h: int
    k_w: int
    h_out: int = 1
    w_out: int = 1

    def __post_init__(self):
        for field in ("c_in", "c_out", "k_h", "k_w", "h_out", "w_out"):
            v = getattr(self, field)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ValidationError(f"layer {self.name!r}: {field} must be a positive integer, got {v!r}")
