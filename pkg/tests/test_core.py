import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gprune.core import (
    LayerSpec,
    PermutationPair,
    ValidationError,
    apply_permutation,
    diagonal_block_sum,
    invert_permutation,
    kernel_norm_matrix,
)

from oracles import diag_block_sum_loops, norm_matrix_loops


def test_norm_of_zero_tensor():
    assert np.array_equal(kernel_norm_matrix(np.zeros((2, 2, 1, 1))), np.zeros((2, 2)))


def test_norm_three_four_five():
    w = np.array([3.0, 4.0]).reshape(1, 1, 1, 2)
    assert kernel_norm_matrix(w).tolist() == [[5.0]]


def test_norm_matches_loop_oracle():
    w = np.random.default_rng(1).standard_normal((4, 6, 3, 3))
    got = kernel_norm_matrix(w)
    want = np.array(norm_matrix_loops(w))
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=0)


def test_norm_rejects_non_finite_with_index():
    w = np.ones((2, 3, 1, 1))
    w[1, 2, 0, 0] = np.nan
    with pytest.raises(ValidationError, match=r"\(1, 2, 0, 0\)"):
        kernel_norm_matrix(w)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_norm_sign_flip_invariant(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((3, 2, 2, 2))
    signs = rng.choice([-1.0, 1.0], size=w.shape)
    assert np.array_equal(kernel_norm_matrix(w), kernel_norm_matrix(w * signs))


def test_identity_permutation_is_noop():
    m = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(apply_permutation(m, PermutationPair.identity(3, 4)), m)


def test_three_by_three_permutation_example():
    # 1-based I_O=(2,1,3), I_I=(1,3,2)
    labels = np.array([["w11", "w12", "w13"], ["w21", "w22", "w23"], ["w31", "w32", "w33"]])
    p = PermutationPair([1, 0, 2], [0, 2, 1])
    assert apply_permutation(labels, p).tolist() == [
        ["w21", "w23", "w22"],
        ["w11", "w13", "w12"],
        ["w31", "w33", "w32"],
    ]


def test_weight_tensor_moves_whole_kernels():
    w = np.random.default_rng(2).standard_normal((3, 2, 2, 2))
    p = PermutationPair([2, 0, 1], [1, 0])
    got = apply_permutation(w, p)
    for f in range(3):
        for c in range(2):
            assert np.array_equal(got[f, c], w[p.out_perm[f], p.in_perm[c]])


def test_round_trip_with_inverse():
    m = np.random.default_rng(3).uniform(size=(5, 7))
    p = PermutationPair([4, 2, 0, 1, 3], [6, 5, 1, 0, 2, 4, 3])
    assert np.array_equal(apply_permutation(apply_permutation(m, p), invert_permutation(p)), m)


def test_inverse_of_transposition_is_itself():
    p = PermutationPair([0], [0, 2, 1])
    assert invert_permutation(p).in_perm.tolist() == [0, 2, 1]
    assert invert_permutation(PermutationPair.identity(3, 3)) == PermutationPair.identity(3, 3)


def test_inverse_by_composition_length_64():
    rng = np.random.default_rng(4)
    p = PermutationPair(rng.permutation(64), rng.permutation(64))
    q = invert_permutation(p)
    assert [p.in_perm[q.in_perm[i]] for i in range(64)] == list(range(64))
    assert [q.out_perm[p.out_perm[i]] for i in range(64)] == list(range(64))


@pytest.mark.parametrize("bad", [[0, 0, 1], [0, 2], [0, 1, 3], [-1, 0, 1]])
def test_invalid_permutations_rejected(bad):
    with pytest.raises(ValidationError):
        PermutationPair(bad, [0])


def test_length_mismatch_rejected():
    with pytest.raises(ValidationError):
        apply_permutation(np.zeros((3, 3)), PermutationPair.identity(2, 3))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_permutation_preserves_entries(c_out, c_in, seed):
    rng = np.random.default_rng(seed)
    m = rng.uniform(size=(c_out, c_in))
    p = PermutationPair(rng.permutation(c_out), rng.permutation(c_in))
    assert sorted(apply_permutation(m, p).ravel()) == sorted(m.ravel())


def test_diagonal_block_sum_counts():
    ones = np.ones((4, 4))
    assert diagonal_block_sum(ones, 2) == 8.0
    assert diagonal_block_sum(ones, 1) == 16.0


def test_diagonal_block_sum_matches_loops():
    m = np.random.default_rng(5).uniform(size=(8, 8))
    assert diagonal_block_sum(m, 4) == pytest.approx(diag_block_sum_loops(m.tolist(), 4), rel=1e-12)


def test_diagonal_block_sum_non_divisor():
    with pytest.raises(ValidationError):
        diagonal_block_sum(np.ones((4, 6)), 4)


@given(st.sampled_from([(4, 4, 2), (6, 4, 2), (8, 12, 4), (6, 6, 3)]), st.integers(0, 2**32 - 1))
def test_block_sum_bounded_by_total(shape, seed):
    c_out, c_in, g = shape
    rng = np.random.default_rng(seed)
    m = rng.uniform(size=(c_out, c_in))
    assert diagonal_block_sum(m, g) <= m.sum() + 1e-12
    m_block = m * np.kron(np.eye(g), np.ones((c_out // g, c_in // g)))
    assert diagonal_block_sum(m_block, g) == pytest.approx(m_block.sum(), rel=1e-12)


def test_layer_spec_validation():
    with pytest.raises(ValidationError):
        LayerSpec("bad", 0, 4, 3, 3)
