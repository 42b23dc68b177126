"""Reference convolution and the three views of a pruned layer.

A pruned layer can run as

* a dense convolution with a 0/1 kernel mask,
* permute -> grouped convolution -> un-permute, from a :class:`GroupedLayerExport`,
* a compressed-row sparse product over the kernel grid (1x1 kernels),

and all three must agree. Feature maps are ``(channels, height, width)``
arrays. Convolution is cross-correlation with stride 1 and symmetric zero
padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .core import PermutationPair, ValidationError, as_weight_tensor, check_groups
from .pruner import prune_mask


def _as_feature_map(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValidationError(f"feature map must be 3-D (channels, height, width), got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("feature map holds non-finite values")
    return x


def dense_forward(x, w, padding: int = 0) -> np.ndarray:
    """Direct convolution; accumulates input channel by input channel."""
    x = _as_feature_map(x)
    w = as_weight_tensor(w)
    c_out, c_in, kh, kw = w.shape
    if x.shape[0] != c_in:
        raise ValidationError(f"input has {x.shape[0]} channels, weights expect {c_in}")
    if padding < 0:
        raise ValidationError(f"padding must be non-negative, got {padding}")
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h = xp.shape[1] - kh + 1
    wd = xp.shape[2] - kw + 1
    if h < 1 or wd < 1:
        raise ValidationError(f"kernel {kh}x{kw} larger than padded input {xp.shape[1:]}")
    y = np.zeros((c_out, h, wd))
    for c in range(c_in):
        for i in range(kh):
            for j in range(kw):
                y += w[:, c, i, j][:, None, None] * xp[c, i:i + h, j:j + wd]
    return y


def masked_forward(x, w, mask, padding: int = 0) -> np.ndarray:
    w = as_weight_tensor(w)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != w.shape[:2]:
        raise ValidationError(f"mask shape {mask.shape} does not match weight channels {w.shape[:2]}")
    return dense_forward(x, w * mask[:, :, None, None], padding)


@dataclass(frozen=True, eq=False)
class GroupedLayerExport:
    """Diagonal blocks of the permuted weights plus the permutation pair.

    ``blocks[k]`` has shape ``(c_out/g, c_in/g, k_h, k_w)``.
    """

    g: int
    blocks: tuple
    perms: PermutationPair

    @property
    def c_out(self) -> int:
        return self.perms.c_out

    @property
    def c_in(self) -> int:
        return self.perms.c_in

    def check(self) -> None:
        if len(self.blocks) != self.g:
            raise ValidationError(f"export has {len(self.blocks)} blocks, expected {self.g}")
        check_groups(self.c_out, self.c_in, self.g)
        shape = None
        for b in self.blocks:
            b = np.asarray(b)
            if b.ndim != 4 or b.shape[:2] != (self.c_out // self.g, self.c_in // self.g):
                raise ValidationError(f"block shape {b.shape} inconsistent with {self.c_out}x{self.c_in}, G={self.g}")
            if shape is not None and b.shape != shape:
                raise ValidationError("blocks differ in kernel size")
            shape = b.shape

    def reassemble(self) -> np.ndarray:
        """Dense weights in original channel order, zeros outside the blocks.

        Only copies values, so the result equals ``w * mask`` bit for bit.
        """
        self.check()
        bo, bi = self.c_out // self.g, self.c_in // self.g
        kh, kw = self.blocks[0].shape[2:]
        permuted = np.zeros((self.c_out, self.c_in, kh, kw))
        for k, b in enumerate(self.blocks):
            permuted[k * bo:(k + 1) * bo, k * bi:(k + 1) * bi] = b
        w = np.zeros_like(permuted)
        w[np.ix_(self.perms.out_perm, self.perms.in_perm)] = permuted
        return w


def export_grouped(w, perms: PermutationPair, g: int) -> GroupedLayerExport:
    w = as_weight_tensor(w)
    c_out, c_in = w.shape[:2]
    g = check_groups(c_out, c_in, g)
    if perms.c_out != c_out or perms.c_in != c_in:
        raise ValidationError(f"permutation lengths ({perms.c_out}, {perms.c_in}) do not match ({c_out}, {c_in})")
    permuted = w[perms.out_perm][:, perms.in_perm]
    bo, bi = c_out // g, c_in // g
    blocks = tuple(permuted[k * bo:(k + 1) * bo, k * bi:(k + 1) * bi].copy() for k in range(g))
    return GroupedLayerExport(g, blocks, perms)


def grouped_forward(x, e: GroupedLayerExport, padding: int = 0) -> np.ndarray:
    """Gather inputs by ``in_perm``, convolve each group, scatter outputs by ``out_perm``."""
    e.check()
    x = _as_feature_map(x)
    if x.shape[0] != e.c_in:
        raise ValidationError(f"input has {x.shape[0]} channels, export expects {e.c_in}")
    xs = np.split(x[e.perms.in_perm], e.g, axis=0)
    y_perm = np.concatenate([dense_forward(xg, b, padding) for xg, b in zip(xs, e.blocks)], axis=0)
    y = np.empty_like(y_perm)
    y[e.perms.out_perm] = y_perm
    return y


@dataclass(frozen=True, eq=False)
class SparseLayerExport:
    """Compressed-row storage over the ``(c_out, c_in)`` kernel grid."""

    c_out: int
    c_in: int
    row_offsets: np.ndarray
    column_indices: np.ndarray
    kernel_values: np.ndarray  # (nnz, k_h, k_w)

    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def to_dense(self) -> np.ndarray:
        kh, kw = self.kernel_values.shape[1:]
        w = np.zeros((self.c_out, self.c_in, kh, kw))
        for f in range(self.c_out):
            lo, hi = self.row_offsets[f], self.row_offsets[f + 1]
            w[f, self.column_indices[lo:hi]] = self.kernel_values[lo:hi]
        return w

    def matvec(self, x) -> np.ndarray:
        """Sparse product for 1x1 kernels: ``(c_in, h, w)`` -> ``(c_out, h, w)``."""
        if self.kernel_values.shape[1:] != (1, 1):
            raise ValidationError("sparse execution is only defined for 1x1 kernels")
        x = _as_feature_map(x)
        if x.shape[0] != self.c_in:
            raise ValidationError(f"input has {x.shape[0]} channels, export expects {self.c_in}")
        a = scipy.sparse.csr_matrix(
            (self.kernel_values[:, 0, 0], self.column_indices, self.row_offsets),
            shape=(self.c_out, self.c_in))
        return (a @ x.reshape(self.c_in, -1)).reshape(self.c_out, *x.shape[1:])


def is_regular(mask) -> bool:
    mask = np.asarray(mask, dtype=bool)
    rows = mask.sum(axis=1)
    cols = mask.sum(axis=0)
    return bool(np.all(rows == rows[0]) and np.all(cols == cols[0]))


def export_sparse(w, mask, strict: bool = True) -> SparseLayerExport:
    w = as_weight_tensor(w)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != w.shape[:2]:
        raise ValidationError(f"mask shape {mask.shape} does not match weight channels {w.shape[:2]}")
    if strict and not is_regular(mask):
        raise ValidationError("mask is not regular: rows or columns keep different numbers of kernels")
    rows, cols = np.nonzero(mask)
    offsets = np.zeros(mask.shape[0] + 1, dtype=np.int64)
    np.cumsum(mask.sum(axis=1), out=offsets[1:])
    return SparseLayerExport(mask.shape[0], mask.shape[1], offsets,
                             cols.astype(np.int64), w[rows, cols].copy())


def layer_views(w, perms: PermutationPair, g: int):
    """Mask, grouped export and sparse export of one pruned layer."""
    w = as_weight_tensor(w)
    mask = prune_mask(w.shape[0], w.shape[1], g, perms)
    return mask, export_grouped(w, perms, g), export_sparse(w, mask)


def relative_error(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)
