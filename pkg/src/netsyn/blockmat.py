"""Block-partitioned dense matrices, network-matrix checks and the BEW transform.

A :class:`BlockMatrix` is one contiguous ``float64`` array plus its row and
column partitions.  Block accessors return read-only views.  Indices are
0-based throughout the library; only the file formats use 1-based indices.
"""

from __future__ import annotations

import enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import StructureError

SYMMETRY_TOL = 1e-9
DEFINITENESS_TOL = 1e-8


def _offsets(dims):
    return np.concatenate(([0], np.cumsum(dims))).astype(int)


def _check_dims(dims, what):
    dims = tuple(int(d) for d in dims)
    if any(d < 0 for d in dims):
        raise StructureError(f"{what} must be non-negative, got {dims}")
    return dims


class BlockMatrix:
    """Dense real matrix with an N x M block partition.

    Parameters
    ----------
    data : array_like
        The full matrix.
    row_dims, col_dims : sequence of int
        Block heights and widths.  ``col_dims`` defaults to ``row_dims``.
    """

    __array_ufunc__ = None

    def __init__(self, data, row_dims, col_dims=None):
        self.row_dims = _check_dims(row_dims, "row_dims")
        self.col_dims = self.row_dims if col_dims is None else _check_dims(col_dims, "col_dims")
        arr = np.array(data, dtype=float, copy=True)
        if arr.ndim != 2:
            arr = arr.reshape(sum(self.row_dims), sum(self.col_dims))
        if arr.shape != (sum(self.row_dims), sum(self.col_dims)):
            raise StructureError(
                f"data shape {arr.shape} does not match partition "
                f"{self.row_dims} x {self.col_dims}")
        arr.flags.writeable = False
        self.data = arr
        self._roff = _offsets(self.row_dims)
        self._coff = _offsets(self.col_dims)

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, row_dims, col_dims=None):
        col_dims = row_dims if col_dims is None else col_dims
        return cls(np.zeros((sum(row_dims), sum(col_dims))), row_dims, col_dims)

    @classmethod
    def identity(cls, dims):
        return cls(np.eye(sum(dims)), dims)

    @classmethod
    def from_blocks(cls, blocks: Mapping, row_dims, col_dims=None):
        """Assemble from a ``{(i, j): block}`` mapping; missing blocks are zero."""
        col_dims = row_dims if col_dims is None else col_dims
        ro, co = _offsets(row_dims), _offsets(col_dims)
        out = np.zeros((ro[-1], co[-1]))
        for (i, j), blk in blocks.items():
            blk = np.asarray(blk, dtype=float)
            if blk.shape != (row_dims[i], col_dims[j]):
                raise StructureError(
                    f"block ({i}, {j}) has shape {blk.shape}, "
                    f"expected {(row_dims[i], col_dims[j])}")
            out[ro[i]:ro[i + 1], co[j]:co[j + 1]] = blk
        return cls(out, row_dims, col_dims)

    @classmethod
    def from_grid(cls, grid: Sequence[Sequence], row_dims=None, col_dims=None):
        """Assemble from a nested list of blocks (``None`` means zero)."""
        n, m = len(grid), len(grid[0])
        if row_dims is None:
            row_dims = [next(np.shape(b)[0] for b in row if b is not None) for row in grid]
        if col_dims is None:
            col_dims = [next(np.shape(grid[i][j])[1] for i in range(n) if grid[i][j] is not None)
                        for j in range(m)]
        blocks = {(i, j): grid[i][j] for i in range(n) for j in range(m) if grid[i][j] is not None}
        return cls.from_blocks(blocks, row_dims, col_dims)

    @classmethod
    def block_diag(cls, blocks: Sequence):
        blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
        rows = [b.shape[0] for b in blocks]
        cols = [b.shape[1] for b in blocks]
        return cls.from_blocks({(i, i): b for i, b in enumerate(blocks)}, rows, cols)

    # -- access -----------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def nblocks(self):
        return len(self.row_dims), len(self.col_dims)

    def block(self, i, j) -> np.ndarray:
        return self.data[self._roff[i]:self._roff[i + 1], self._coff[j]:self._coff[j + 1]]

    def __getitem__(self, ij):
        return self.block(*ij)

    def row_slice(self, i):
        return slice(self._roff[i], self._roff[i + 1])

    def col_slice(self, j):
        return slice(self._coff[j], self._coff[j + 1])

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def to_dict(self, tol=0.0):
        """Nonzero blocks as ``{(i, j): ndarray}``."""
        out = {}
        for i in range(len(self.row_dims)):
            for j in range(len(self.col_dims)):
                b = self.block(i, j)
                if b.size and np.max(np.abs(b)) > tol:
                    out[(i, j)] = np.array(b)
        return out

    def with_blocks(self, updates: Mapping) -> "BlockMatrix":
        """Copy with some blocks replaced."""
        arr = np.array(self.data)
        for (i, j), blk in updates.items():
            arr[self.row_slice(i), self.col_slice(j)] = blk
        return BlockMatrix(arr, self.row_dims, self.col_dims)

    # -- algebra ----------------------------------------------------------
    @property
    def T(self) -> "BlockMatrix":
        return BlockMatrix(self.data.T, self.col_dims, self.row_dims)

    def __add__(self, other):
        other = _as_block(other, self)
        return BlockMatrix(self.data + other.data, self.row_dims, self.col_dims)

    def __sub__(self, other):
        other = _as_block(other, self)
        return BlockMatrix(self.data - other.data, self.row_dims, self.col_dims)

    def __neg__(self):
        return BlockMatrix(-self.data, self.row_dims, self.col_dims)

    def __mul__(self, scalar):
        return BlockMatrix(float(scalar) * self.data, self.row_dims, self.col_dims)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, BlockMatrix):
            if other.row_dims != self.col_dims:
                raise StructureError("inner block partitions do not match")
            return BlockMatrix(self.data @ other.data, self.row_dims, other.col_dims)
        return self.data @ np.asarray(other)

    def __rmatmul__(self, other):
        return np.asarray(other) @ self.data

    def is_symmetric(self, tol=SYMMETRY_TOL) -> bool:
        if self.row_dims != self.col_dims:
            return False
        scale = max(1.0, float(np.max(np.abs(self.data), initial=0.0)))
        return bool(np.max(np.abs(self.data - self.data.T), initial=0.0) <= tol * scale)

    def is_block_diagonal(self, tol=0.0) -> bool:
        n, m = self.nblocks
        return all(np.max(np.abs(self.block(i, j)), initial=0.0) <= tol
                   for i in range(n) for j in range(m) if i != j)

    def __repr__(self):
        return f"BlockMatrix(row_dims={self.row_dims}, col_dims={self.col_dims})"


def _as_block(other, like):
    if isinstance(other, BlockMatrix):
        if other.row_dims != like.row_dims or other.col_dims != like.col_dims:
            raise StructureError("block partitions do not match")
        return other
    return BlockMatrix(other, like.row_dims, like.col_dims)


def unit_block(i, j, n, m=None):
    """``e_ij``: identity if ``i == j`` else the zero block."""
    m = n if m is None else m
    return np.eye(n, m) if i == j else np.zeros((n, m))


# ---------------------------------------------------------------------------
# Block-block matrices and the BEW transform
# ---------------------------------------------------------------------------

class BlockBlockMatrix:
    """An m x m grid of :class:`BlockMatrix` cells.

    ``parts[k]`` is the inner partition shared by every cell in outer row
    (and column) ``k``; cell ``(k, l)`` is therefore ``parts[k] x parts[l]``.
    All partitions must have the same number of inner blocks.
    """

    def __init__(self, cells: Sequence[Sequence[BlockMatrix]], parts=None):
        m = len(cells)
        if m < 1 or any(len(row) != m for row in cells):
            raise StructureError("outer grid must be square and non-empty")
        if parts is None:
            parts = [cells[k][k].row_dims for k in range(m)]
        parts = [tuple(p) for p in parts]
        if len({len(p) for p in parts}) != 1:
            raise StructureError("inner partitions have different block counts")
        for k in range(m):
            for l in range(m):
                c = cells[k][l]
                if c.row_dims != parts[k] or c.col_dims != parts[l]:
                    raise StructureError(
                        f"cell ({k}, {l}) has partition {c.row_dims} x {c.col_dims}, "
                        f"expected {parts[k]} x {parts[l]}")
        self.cells = [list(row) for row in cells]
        self.parts = parts

    @property
    def m(self):
        return len(self.cells)

    @property
    def n(self):
        return len(self.parts[0])

    def flatten(self) -> np.ndarray:
        return np.block([[c.data for c in row] for row in self.cells])


def bew_permutation(parts: Sequence[Sequence[int]]) -> np.ndarray:
    """Index vector ``perm`` with ``BEW(Psi) = Psi[perm][:, perm]``.

    ``parts[k][i]`` is the size of inner block ``i`` within outer block ``k``.
    """
    parts = [tuple(int(d) for d in p) for p in parts]
    outer_off = _offsets([sum(p) for p in parts])
    inner_off = [_offsets(p) for p in parts]
    n = len(parts[0])
    perm = []
    for i in range(n):
        for k, p in enumerate(parts):
            start = outer_off[k] + inner_off[k][i]
            perm.extend(range(start, start + p[i]))
    return np.asarray(perm, dtype=int)


def bew_dims(parts) -> tuple:
    """Block sizes of ``BEW(Psi)``: inner block ``i`` collects ``parts[k][i]`` over ``k``."""
    return tuple(sum(int(p[i]) for p in parts) for i in range(len(parts[0])))


def bew_transform(psi: BlockBlockMatrix) -> BlockMatrix:
    """Block element-wise form ``[[Psi^{kl}_{ij}]_{k,l}]_{i,j}``."""
    if not isinstance(psi, BlockBlockMatrix):
        raise StructureError("bew_transform expects a BlockBlockMatrix")
    perm = bew_permutation(psi.parts)
    flat = psi.flatten()
    return BlockMatrix(flat[np.ix_(perm, perm)], bew_dims(psi.parts))


def inverse_bew(w: BlockMatrix, parts) -> BlockBlockMatrix:
    """Undo :func:`bew_transform` given the inner partitions ``parts``."""
    parts = [tuple(p) for p in parts]
    if w.row_dims != bew_dims(parts) or w.col_dims != w.row_dims:
        raise StructureError("partition of W is inconsistent with parts")
    perm = bew_permutation(parts)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    flat = w.data[np.ix_(inv, inv)]
    off = _offsets([sum(p) for p in parts])
    cells = [[BlockMatrix(flat[off[k]:off[k + 1], off[l]:off[l + 1]], parts[k], parts[l])
              for l in range(len(parts))] for k in range(len(parts))]
    return BlockBlockMatrix(cells, parts)


# ---------------------------------------------------------------------------
# Network matrices and definiteness
# ---------------------------------------------------------------------------

def is_network_matrix(theta: BlockMatrix, in_neighbors: Sequence[Iterable[int]], tol=0.0) -> bool:
    """True iff blocks vanish on every unordered pair with no edge either way.

    ``in_neighbors[i]`` lists the ``j`` with an edge ``j -> i``.  Only the
    structural condition is checked; "information locality" is semantic.
    """
    n = len(in_neighbors)
    if theta.nblocks != (n, n):
        raise StructureError(f"expected a {n} x {n} partition, got {theta.nblocks}")
    ins = [set(e) for e in in_neighbors]
    for i in range(n):
        for j in range(i + 1, n):
            if j in ins[i] or i in ins[j]:
                continue
            if (np.max(np.abs(theta.block(i, j)), initial=0.0) > tol
                    or np.max(np.abs(theta.block(j, i)), initial=0.0) > tol):
                return False
    return True


class Definiteness(enum.Enum):
    POSITIVE_DEFINITE = "positive_definite"
    POSITIVE_SEMIDEFINITE = "positive_semidefinite"
    INDEFINITE = "indefinite"


def _dense(w):
    return w.data if isinstance(w, BlockMatrix) else np.atleast_2d(np.asarray(w, dtype=float))


def min_eigenvalue(w, sym_tol=SYMMETRY_TOL) -> float:
    a = _dense(w)
    if a.shape[0] != a.shape[1]:
        raise StructureError("matrix is not square")
    if a.size == 0:
        return np.inf
    if np.max(np.abs(a - a.T)) > sym_tol * max(1.0, float(np.max(np.abs(a)))):
        raise StructureError(
            f"matrix is not symmetric (max asymmetry {np.max(np.abs(a - a.T)):.3e})")
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def definiteness_oracle(w, tol=DEFINITENESS_TOL, sym_tol=SYMMETRY_TOL) -> Definiteness:
    """Classify a symmetric matrix from its smallest eigenvalue.

    PD iff ``lambda_min > tol``; PSD iff ``lambda_min > -tol``.
    """
    lam = min_eigenvalue(w, sym_tol)
    if lam > tol:
        return Definiteness.POSITIVE_DEFINITE
    if lam > -tol:
        return Definiteness.POSITIVE_SEMIDEFINITE
    return Definiteness.INDEFINITE
