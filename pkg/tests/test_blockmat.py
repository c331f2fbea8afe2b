import numpy as np
import pytest
from hypothesis import given, strategies as st

from netsyn.blockmat import (BlockBlockMatrix, BlockMatrix, Definiteness, bew_permutation,
                             bew_transform, definiteness_oracle, inverse_bew,
                             is_network_matrix, min_eigenvalue, unit_block)
from netsyn.errors import StructureError

from oracles import bew_by_loops


def scalar_cells(values):
    return [[BlockMatrix(np.array(v, dtype=float), [1, 1]) for v in row] for row in values]


def test_block_access_and_partition():
    m = BlockMatrix(np.arange(25.0).reshape(5, 5), [2, 3])
    assert m.nblocks == (2, 2)
    assert m.block(0, 1).shape == (2, 3)
    np.testing.assert_array_equal(m[1, 0], np.arange(25.0).reshape(5, 5)[2:, :2])
    with pytest.raises(ValueError):
        m.block(0, 0)[0, 0] = 1.0


def test_partition_mismatch_is_rejected():
    with pytest.raises(StructureError):
        BlockMatrix(np.zeros((3, 3)), [1, 1])
    with pytest.raises(StructureError):
        BlockMatrix.from_blocks({(0, 0): np.zeros((2, 2))}, [1])


def test_from_blocks_and_to_dict_roundtrip():
    blocks = {(0, 0): np.eye(2), (1, 0): np.ones((1, 2))}
    m = BlockMatrix.from_blocks(blocks, [2, 1])
    back = m.to_dict()
    assert set(back) == set(blocks)
    for key in blocks:
        np.testing.assert_array_equal(back[key], blocks[key])


def test_unit_block():
    np.testing.assert_array_equal(unit_block(1, 1, 2), np.eye(2))
    np.testing.assert_array_equal(unit_block(0, 1, 2, 3), np.zeros((2, 3)))


def test_bew_single_outer_cell_is_identity():
    psi = BlockMatrix(np.arange(9.0).reshape(3, 3), [1, 2])
    out = bew_transform(BlockBlockMatrix([[psi]]))
    np.testing.assert_array_equal(out.data, psi.data)


def test_bew_worked_example():
    cells = scalar_cells([[[[1, 2], [3, 4]], [[5, 6], [7, 8]]],
                          [[[9, 10], [11, 12]], [[13, 14], [15, 16]]]])
    w = bew_transform(BlockBlockMatrix(cells))
    np.testing.assert_array_equal(w.block(0, 0), [[1, 5], [9, 13]])
    np.testing.assert_array_equal(w.block(0, 1), [[2, 6], [10, 14]])
    np.testing.assert_array_equal(w.block(1, 0), [[3, 7], [11, 15]])
    np.testing.assert_array_equal(w.block(1, 1), [[4, 8], [12, 16]])


def test_bew_rejects_mismatched_partitions():
    a = BlockMatrix(np.eye(2), [1, 1])
    b = BlockMatrix(np.zeros((2, 3)), [1, 1], [1, 2])
    with pytest.raises(StructureError):
        BlockBlockMatrix([[a, b], [b.T, a]])


parts_strategy = st.integers(1, 3).flatmap(
    lambda m: st.integers(1, 3).flatmap(
        lambda n: st.lists(st.lists(st.integers(0, 2), min_size=n, max_size=n),
                           min_size=m, max_size=m)))


@given(parts_strategy, st.integers(0, 2 ** 31 - 1))
def test_bew_matches_loop_assembly_and_inverts(parts, seed):
    size = sum(map(sum, parts))
    rng = np.random.default_rng(seed)
    flat = rng.standard_normal((size, size))
    off = np.concatenate([[0], np.cumsum([sum(p) for p in parts])])
    cells = [[BlockMatrix(flat[off[k]:off[k + 1], off[l]:off[l + 1]], parts[k], parts[l])
              for l in range(len(parts))] for k in range(len(parts))]
    psi = BlockBlockMatrix(cells, parts)
    w = bew_transform(psi)
    np.testing.assert_array_equal(w.data, bew_by_loops([[c.data for c in r] for r in cells], parts))
    back = inverse_bew(w, parts)
    np.testing.assert_array_equal(back.flatten(), flat)
    perm = bew_permutation(parts)
    assert sorted(perm.tolist()) == list(range(size))


@given(st.integers(0, 2 ** 31 - 1))
def test_bew_preserves_eigenvalues(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((4, 4))
    sym = g + g.T
    cells = [[BlockMatrix(sym[2 * k:2 * k + 2, 2 * l:2 * l + 2], [1, 1]) for l in range(2)]
             for k in range(2)]
    w = bew_transform(BlockBlockMatrix(cells)).data
    np.testing.assert_allclose(np.linalg.eigvalsh(w), np.linalg.eigvalsh(sym), atol=1e-12)


def test_network_matrix_examples():
    ins = [set(), {0}, set()]
    assert is_network_matrix(BlockMatrix.block_diag([np.eye(1), 2 * np.eye(2), np.eye(1)]), ins)
    theta = BlockMatrix.from_blocks({(0, 2): np.ones((1, 1))}, [1, 1, 1])
    assert not is_network_matrix(theta, ins)
    adjacency = BlockMatrix(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]), [1, 1, 1])
    assert is_network_matrix(adjacency, ins)


@given(st.integers(0, 2 ** 31 - 1))
def test_network_matrix_closure(seed):
    rng = np.random.default_rng(seed)
    n = 4
    ins = [set(int(j) for j in rng.choice(n, size=rng.integers(0, n), replace=False) if j != i)
           for i in range(n)]
    mask = np.eye(n, dtype=bool)
    for i, e in enumerate(ins):
        for j in e:
            mask[i, j] = mask[j, i] = True
    theta = BlockMatrix(rng.standard_normal((n, n)) * mask, [1] * n)
    phi = BlockMatrix(np.diag(rng.standard_normal(n)), [1] * n)
    for m in (theta.T, 2.0 * theta + 3.0 * phi, phi @ theta, theta @ phi):
        assert is_network_matrix(m, ins)


def test_definiteness_examples():
    assert definiteness_oracle(BlockMatrix.identity([2, 1])) is Definiteness.POSITIVE_DEFINITE
    assert definiteness_oracle(np.array([[2.0, 1], [1, 2]])) is Definiteness.POSITIVE_DEFINITE
    assert definiteness_oracle(np.array([[1.0, 2], [2, 1]])) is Definiteness.INDEFINITE
    assert definiteness_oracle(np.diag([1.0, 0.0])) is Definiteness.POSITIVE_SEMIDEFINITE
    assert min_eigenvalue(np.array([[1.0, 2], [2, 1]])) == pytest.approx(-1.0)


def test_definiteness_rejects_asymmetry():
    with pytest.raises(StructureError):
        definiteness_oracle(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_transpose_and_arithmetic_keep_partitions():
    m = BlockMatrix(np.arange(6.0).reshape(2, 3), [2], [1, 2])
    assert m.T.row_dims == (1, 2) and m.T.col_dims == (2,)
    assert (m + m).data[1, 2] == 10.0
    assert (2 * m - m).data[1, 2] == 5.0
    with pytest.raises(StructureError):
        m + BlockMatrix(np.zeros((2, 3)), [1, 1], [3])
