"""Sequential block Schur-complement test of ``W > 0`` and its certificate archive.

Subsystems are processed one at a time.  Step ``i`` receives the row
``[W_i1 .. W_ii]`` and the rows stored by earlier steps, and computes::

    Wt_ik = W_ik - sum_{l<k} Wt_il Wt_ll^{-1} Wt_kl^T      (k < i)
    Wt_ii = W_ii - sum_{k<i} Wt_ik Wt_kk^{-1} Wt_ik^T

``W > 0`` iff every ``Wt_ii > 0``.  This is a block LDL^T factorization
``W = L D L^T`` with ``L_ik = Wt_ik Wt_kk^{-1}`` and ``D = diag(Wt_kk)``.
Inverses are applied through Cholesky factors ``Wt_kk = C_k C_k^T``; the
archive keeps the scaled rows ``Z_ik = Wt_ik C_k^{-T}`` so the sums above are
plain products ``Z_il Z_kl^T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .blockmat import DEFINITENESS_TOL, SYMMETRY_TOL, BlockMatrix
from .errors import FormatError, NumericalError, StateError, StructureError
from .lmi import AffineExpr, as_expr, bmat

COND_LIMIT = 1e12


class CertificateArchive:
    """Append-only store of processed rows ``[Wt_i1 .. Wt_ii]``.

    ``labels[k]`` is the subsystem processed at step ``k``.
    """

    def __init__(self):
        self.labels: list[int] = []
        self.dims: list[int] = []
        self.rows: list[tuple] = []
        self.chol: list[np.ndarray] = []
        self._scaled: list[list[np.ndarray]] = []

    def __len__(self):
        return len(self.rows)

    def copy(self) -> "CertificateArchive":
        out = CertificateArchive()
        out.labels = list(self.labels)
        out.dims = list(self.dims)
        out.rows = list(self.rows)
        out.chol = list(self.chol)
        out._scaled = [list(r) for r in self._scaled]
        return out

    def diag(self, k) -> np.ndarray:
        return self.rows[k][k]

    def _append(self, label, row, factor, scaled):
        for blk in row:
            blk.setflags(write=False)
        self.labels.append(label)
        self.dims.append(row[-1].shape[0])
        self.rows.append(tuple(row))
        self.chol.append(factor)
        self._scaled.append(scaled)

    def leading_block(self) -> np.ndarray:
        """``A D A^T`` over the stored rows, i.e. the processed principal block of ``W``."""
        off = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        n = int(off[-1])
        out = np.zeros((n, n))
        for k in range(len(self)):
            for m in range(k + 1):
                blk = sum(self._scaled[k][l] @ self._scaled[m][l].T for l in range(m + 1))
                out[off[k]:off[k + 1], off[m]:off[m + 1]] = blk
                out[off[m]:off[m + 1], off[k]:off[k + 1]] = blk.T
        return out

    def reconstruct(self) -> BlockMatrix:
        """``L D L^T`` with ``L_ik = Wt_ik Wt_kk^{-1}`` (unit diagonal) and ``D = diag(Wt_kk)``."""
        n = len(self)
        dims = tuple(self.dims)
        lower = {}
        for i in range(n):
            lower[(i, i)] = np.eye(dims[i])
            for k in range(i):
                lower[(i, k)] = np.linalg.solve(self.diag(k), self.rows[i][k].T).T
        lmat = BlockMatrix.from_blocks(lower, dims)
        dmat = BlockMatrix.block_diag([self.diag(k) for k in range(n)])
        return BlockMatrix(lmat.data @ dmat.data @ lmat.data.T, dims)


@dataclass(frozen=True)
class StepResult:
    step: int
    label: int
    row: tuple
    verdict: bool
    min_eig: float

    @property
    def diag(self):
        return self.row[-1]


def _chol_or_none(mat):
    try:
        return cholesky(mat, lower=True)
    except np.linalg.LinAlgError:
        return None


def decompose_step(w_row: Sequence[np.ndarray], archive: CertificateArchive, label=None,
                   tol=DEFINITENESS_TOL) -> StepResult:
    """Process the next subsystem; on success its row is appended to ``archive``.

    ``w_row`` is ``[W_i1, ..., W_ii]`` with ``i = len(archive)``.
    """
    i = len(archive)
    if len(w_row) != i + 1:
        raise StateError(f"step {i + 1} needs {i + 1} blocks, got {len(w_row)}")
    w_ii = np.asarray(w_row[-1], dtype=float)
    if w_ii.ndim != 2 or w_ii.shape[0] != w_ii.shape[1]:
        raise StructureError("diagonal block must be square")
    if np.max(np.abs(w_ii - w_ii.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(w_ii))):
        raise StructureError(f"diagonal block of step {i + 1} is not symmetric")
    ni = w_ii.shape[0]
    wt, scaled = [], []
    for k in range(i):
        blk = np.asarray(w_row[k], dtype=float)
        if blk.shape != (ni, archive.dims[k]):
            raise StructureError(
                f"block {k + 1} of step {i + 1} has shape {blk.shape}, "
                f"expected {(ni, archive.dims[k])}")
        acc = blk.copy()
        for l in range(k):
            acc -= scaled[l] @ archive._scaled[k][l].T
        wt.append(acc)
        scaled.append(solve_triangular(archive.chol[k], acc.T, lower=True).T)
    diag = 0.5 * (w_ii + w_ii.T)
    for z in scaled:
        diag = diag - z @ z.T
    diag = 0.5 * (diag + diag.T)
    eigs = np.linalg.eigvalsh(diag)
    verdict = bool(eigs[0] > tol)
    row = (*wt, diag)
    if verdict:
        if eigs[-1] / eigs[0] > COND_LIMIT:
            raise NumericalError(
                f"step {i + 1}: pivot block condition number {eigs[-1] / eigs[0]:.3g} exceeds "
                f"{COND_LIMIT:.0e}")
        factor = _chol_or_none(diag)
        if factor is None:
            raise NumericalError(f"step {i + 1}: Cholesky failed on a positive pivot")
        archive._append(i if label is None else label, row, factor, [*scaled, factor])
    return StepResult(i, i if label is None else label, row, verdict, float(eigs[0]))


def extend_archive(archive: CertificateArchive, w_row, label=None, tol=DEFINITENESS_TOL):
    """Non-destructive :func:`decompose_step`: returns ``(new_archive, step_result)``."""
    new = archive.copy()
    return new, decompose_step(w_row, new, label, tol)


@dataclass
class DecompResult:
    verdict: bool
    archive: CertificateArchive
    steps: list
    failing: int | None = None

    @property
    def margins(self):
        return [s.min_eig for s in self.steps]


def _check_order(order, n):
    order = list(range(n)) if order is None else [int(k) for k in order]
    if sorted(order) != list(range(n)):
        raise StructureError(f"order must be a permutation of 0..{n - 1}")
    return order


def test_positive_definite(w: BlockMatrix, order=None, tol=DEFINITENESS_TOL) -> DecompResult:
    """Run the sequential test on ``w`` in the given processing order.

    Stops at the first failing step; ``failing`` names that subsystem.
    """
    if not w.is_symmetric():
        raise StructureError("matrix is not symmetric")
    order = _check_order(order, len(w.row_dims))
    archive = CertificateArchive()
    steps = []
    for s, i in enumerate(order):
        res = decompose_step([w.block(i, order[k]) for k in range(s + 1)], archive, i, tol)
        steps.append(res)
        if not res.verdict:
            return DecompResult(False, archive, steps, i)
    return DecompResult(True, archive, steps)


test_positive_definite.__test__ = False  # keep pytest from collecting it


def schur_linearized_constraint(w_ii, w_i: Sequence, archive: CertificateArchive,
                                i=None) -> AffineExpr:
    """``[[W_ii, W_i], [W_i^T, A D A^T]]`` whose Schur complement is ``Wt_ii``.

    ``A D A^T`` is the stored leading block, which is positive definite by
    the archive invariant, so the block is ``> 0`` iff ``Wt_ii > 0``.  Entries
    may be arrays or affine expressions; the result is affine in them.
    """
    k = len(archive)
    if i is not None and i != k:
        raise StateError(f"step {i + 1} requested but the archive holds {k} rows")
    if len(w_i) != k:
        raise StateError(f"expected {k} coupling blocks, got {len(w_i)}")
    w_ii = as_expr(w_ii)
    if k == 0:
        return w_ii
    ni = w_ii.shape[0]
    cols = [as_expr(b) for b in w_i]
    for b, d in zip(cols, archive.dims):
        if b.shape != (ni, d):
            raise StructureError(f"coupling block shape {b.shape}, expected {(ni, d)}")
    lead = archive.leading_block()
    w_row = bmat([cols], [ni], list(archive.dims))
    return bmat([[w_ii, w_row], [w_row.T, lead]], [ni, lead.shape[0]], [ni, lead.shape[0]])


# ---------------------------------------------------------------------------
# Protocol messages and traces
# ---------------------------------------------------------------------------

def _arr_to_json(a):
    return np.asarray(a).tolist()


def _arr_from_json(v):
    a = np.array(v, dtype=float)
    return a.reshape(0, 0) if a.size == 0 and a.ndim < 2 else a


@dataclass(frozen=True)
class StepMessage:
    """What subsystem ``sender`` broadcasts after its step.

    ``row`` is its archived ``[Wt_s1 .. Wt_ss]``; ``aux`` carries the extra
    blocks later receivers need to form their ``W_ij`` (for instance ``P_ss``
    or freshly designed couplings).  ``non_neighbor_receivers`` records which
    receivers are not graph neighbors of the sender.
    """

    sender: int
    step: int
    row: tuple
    aux: dict = field(default_factory=dict)
    receivers: tuple = ()
    non_neighbor_receivers: tuple = ()

    def to_dict(self):
        return {
            "sender": self.sender + 1,
            "step": self.step + 1,
            "row": [_arr_to_json(b) for b in self.row],
            "aux": {k: _arr_to_json(v) for k, v in sorted(self.aux.items())},
            "receivers": [r + 1 for r in self.receivers],
            "non_neighbor_receivers": [r + 1 for r in self.non_neighbor_receivers],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["sender"] - 1, d["step"] - 1, tuple(_arr_from_json(b) for b in d["row"]),
                       {k: _arr_from_json(v) for k, v in d.get("aux", {}).items()},
                       tuple(r - 1 for r in d.get("receivers", [])),
                       tuple(r - 1 for r in d.get("non_neighbor_receivers", [])))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed step message: {exc}") from exc


def message_for(step: StepResult, order, neighbors=None, aux=None) -> StepMessage:
    """Message sent by the subsystem processed at ``step.step`` to all later ones."""
    receivers = tuple(order[step.step + 1:])
    far = ()
    if neighbors is not None:
        far = tuple(r for r in receivers if r not in neighbors[step.label])
    return StepMessage(step.label, step.step, step.row, dict(aux or {}), receivers, far)


@dataclass
class ProtocolTrace:
    messages: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"meta": self.meta, "messages": [m.to_dict() for m in self.messages]}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "messages" not in d:
            raise FormatError("trace: expected an object with 'messages'")
        return cls([StepMessage.from_dict(m) for m in d["messages"]], d.get("meta", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replay(self) -> CertificateArchive:
        """Rebuild the archive a late joiner would hold after receiving every message."""
        archive = CertificateArchive()
        for k, msg in enumerate(self.messages):
            if msg.step != k or len(msg.row) != k + 1:
                raise StateError(f"message {k + 1} is out of sequence")
            diag = msg.row[-1]
            factor = _chol_or_none(diag)
            if factor is None:
                raise NumericalError(f"message {k + 1} carries a non-positive pivot block")
            scaled = [solve_triangular(archive.chol[j], msg.row[j].T, lower=True).T
                      for j in range(k)]
            archive._append(msg.sender, [np.array(b) for b in msg.row], factor, [*scaled, factor])
        return archive


def neighbor_sets(in_neighbors):
    """Undirected neighborhoods ``E_i | F_i``."""
    n = len(in_neighbors)
    out = [set(e) for e in in_neighbors]
    for i, e in enumerate(in_neighbors):
        for j in e:
            out[j].add(i)
    return [frozenset(s) for s in out[:n]]


def trace_test(w: BlockMatrix, order=None, in_neighbors=None, tol=DEFINITENESS_TOL):
    """:func:`test_positive_definite` plus the message log of the run."""
    order = _check_order(order, len(w.row_dims))
    res = test_positive_definite(w, order, tol)
    nb = neighbor_sets(in_neighbors) if in_neighbors is not None else None
    msgs = [message_for(s, order, nb) for s in res.steps if s.verdict]
    return res, ProtocolTrace(msgs, {"order": [k + 1 for k in order]})
