"""A small LMI modelling layer.

Expressions are affine in named matrix variables and are kept symbolic
(``const + sum_k L_k op(V_k) R_k``) so that they can be realized exactly at
numeric values as well as lowered to a conic backend.  The backend contract is
narrow: build the conic program, return a status plus primal values.  cvxpy
with Clarabel is the shipped backend (SCS as a fallback).

Strict inequalities ``X > 0`` are represented as ``X >= eps I`` because conic
solvers only handle closed cones.
"""

from __future__ import annotations

import enum
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .blockmat import BlockMatrix, min_eigenvalue
from .errors import ConfigError, SolverError, StructureError

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 1e-6
DEFAULT_TOL = 1e-8


def default_tolerance() -> float:
    """Solver tolerance, overridable with ``NETSYN_SOLVER_TOL``."""
    raw = os.environ.get("NETSYN_SOLVER_TOL")
    if not raw:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError as exc:
        raise ConfigError(f"NETSYN_SOLVER_TOL={raw!r} is not a number") from exc
    if not tol > 0:
        raise ConfigError("NETSYN_SOLVER_TOL must be positive")
    return tol


class VarKind(enum.Enum):
    SYMMETRIC = "symmetric"
    RECTANGULAR = "rectangular"
    SCALAR = "scalar"


class _ExprOps:
    """Arithmetic shared by variables and expressions (delegates to AffineExpr)."""

    __array_ufunc__ = None

    def __add__(self, other):
        return as_expr(self)._add(as_expr(other, self.shape))

    def __radd__(self, other):
        return as_expr(other, self.shape)._add(as_expr(self))

    def __sub__(self, other):
        return as_expr(self)._add(-as_expr(other, self.shape))

    def __rsub__(self, other):
        return as_expr(other, self.shape)._add(-as_expr(self))

    def __mul__(self, scalar):
        return as_expr(self)._scale(scalar)

    __rmul__ = __mul__

    def __matmul__(self, mat):
        return as_expr(self)._rmul_const(mat)

    def __rmatmul__(self, mat):
        return as_expr(self)._lmul_const(mat)


@dataclass(frozen=True, eq=False)
class VarHandle(_ExprOps):
    """A decision variable; ``label`` must be unique within its problem."""

    label: str
    shape: tuple
    kind: VarKind = VarKind.RECTANGULAR

    def __post_init__(self):
        if self.kind is VarKind.SYMMETRIC and self.shape[0] != self.shape[1]:
            raise StructureError(f"symmetric variable {self.label} must be square")
        if self.kind is VarKind.SCALAR and self.shape != (1, 1):
            raise StructureError("scalar variables have shape (1, 1)")

    def __neg__(self):
        return -as_expr(self)

    @property
    def T(self):
        return as_expr(self).T

    def __repr__(self):
        return f"VarHandle({self.label!r}, {self.shape}, {self.kind.value})"


@dataclass(frozen=True)
class _Term:
    left: np.ndarray | None
    var: VarHandle
    right: np.ndarray | None
    transposed: bool

    def op_shape(self):
        r, c = self.var.shape
        return (c, r) if self.transposed else (r, c)


class AffineExpr(_ExprOps):
    """``const + sum left @ op(var) @ right`` with ``op`` identity or transpose.

    ``row_dims``/``col_dims`` are optional block-partition metadata, set by
    :func:`bmat`; they make the expression an affine *block* expression.
    """

    def __init__(self, const, terms=(), row_dims=None, col_dims=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = tuple(terms)
        self.row_dims = tuple(row_dims) if row_dims is not None else (self.const.shape[0],)
        self.col_dims = tuple(col_dims) if col_dims is not None else (self.const.shape[1],)
        for t in self.terms:
            r, c = t.op_shape()
            if t.left is not None and (t.left.shape[0] != self.shape[0] or t.left.shape[1] != r):
                raise StructureError(f"left factor {t.left.shape} does not compose with {t.var.label}")
            if t.left is None and r != self.shape[0]:
                raise StructureError(f"term {t.var.label} has {r} rows, expected {self.shape[0]}")
            if t.right is not None and (t.right.shape[0] != c or t.right.shape[1] != self.shape[1]):
                raise StructureError(f"right factor does not compose with {t.var.label}")
            if t.right is None and c != self.shape[1]:
                raise StructureError(f"term {t.var.label} has {c} cols, expected {self.shape[1]}")

    @property
    def shape(self):
        return self.const.shape

    @property
    def is_constant(self):
        return not self.terms

    def variables(self):
        seen = {}
        for t in self.terms:
            seen.setdefault(t.var.label, t.var)
        return list(seen.values())

    # -- algebra ----------------------------------------------------------
    def _add(self, other):
        if other.shape != self.shape:
            raise StructureError(f"cannot add shapes {self.shape} and {other.shape}")
        return AffineExpr(self.const + other.const, self.terms + other.terms,
                          self.row_dims, self.col_dims)

    def __neg__(self):
        return self._scale(-1.0)

    def _scale(self, scalar):
        s = float(scalar)
        terms = [_Term(s * (t.left if t.left is not None else np.eye(self.shape[0])),
                       t.var, t.right, t.transposed) for t in self.terms]
        return AffineExpr(s * self.const, terms, self.row_dims, self.col_dims)

    def _lmul_const(self, mat):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if mat.shape[1] != self.shape[0]:
            raise StructureError(f"cannot left-multiply {self.shape} by {mat.shape}")
        terms = [_Term(mat if t.left is None else mat @ t.left, t.var, t.right, t.transposed)
                 for t in self.terms]
        return AffineExpr(mat @ self.const, terms)

    def _rmul_const(self, mat):
        if isinstance(mat, (AffineExpr, VarHandle)):
            raise StructureError("product of two variable expressions is not affine")
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if mat.shape[0] != self.shape[1]:
            raise StructureError(f"cannot right-multiply {self.shape} by {mat.shape}")
        terms = [_Term(t.left, t.var, mat if t.right is None else t.right @ mat, t.transposed)
                 for t in self.terms]
        return AffineExpr(self.const @ mat, terms)

    @property
    def T(self):
        terms = [_Term(None if t.right is None else t.right.T, t.var,
                       None if t.left is None else t.left.T, not t.transposed)
                 for t in self.terms]
        return AffineExpr(self.const.T, terms, self.col_dims, self.row_dims)

    def symmetrized(self):
        return 0.5 * (self + self.T)

    # -- evaluation -------------------------------------------------------
    def realize(self, values: Mapping) -> np.ndarray:
        """Numeric value at ``values`` (keyed by label or VarHandle)."""
        out = np.array(self.const)
        for t in self.terms:
            v = values[t.var.label] if t.var.label in values else values[t.var]
            v = np.atleast_2d(np.asarray(v, dtype=float))
            v = v.T if t.transposed else v
            if t.left is not None:
                v = t.left @ v
            if t.right is not None:
                v = v @ t.right
            out = out + v
        return out

    def to_cvxpy(self, cvars: Mapping):
        import cvxpy as cp

        expr = cp.Constant(self.const) if not self.terms else None
        parts = [] if expr is None else [expr]
        if self.terms and np.any(self.const):
            parts.append(cp.Constant(self.const))
        for t in self.terms:
            v = cvars[t.var.label]
            v = v.T if t.transposed else v
            if t.left is not None:
                v = t.left @ v
            if t.right is not None:
                v = v @ t.right
            parts.append(v)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total

    def __repr__(self):
        labels = ", ".join(v.label for v in self.variables())
        return f"AffineExpr(shape={self.shape}, vars=[{labels}])"


def as_expr(x, shape=None) -> AffineExpr:
    """Coerce a variable, array, BlockMatrix or scalar into an AffineExpr.

    Nonzero scalars only broadcast to 1 x 1 expressions.
    """
    if isinstance(x, AffineExpr):
        return x
    if isinstance(x, VarHandle):
        return AffineExpr(np.zeros(x.shape), [_Term(None, x, None, False)])
    if isinstance(x, BlockMatrix):
        return AffineExpr(x.data, (), x.row_dims, x.col_dims)
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if shape is None or tuple(shape) == (1, 1):
            arr = arr.reshape(1, 1)
        elif arr == 0:
            arr = np.zeros(shape)
        else:
            raise StructureError("only the scalar 0 broadcasts to a matrix expression")
    return AffineExpr(arr)


def bmat(grid, row_dims=None, col_dims=None) -> AffineExpr:
    """Assemble a block expression; ``None`` entries are zero blocks."""
    nr, nc = len(grid), len(grid[0])
    if row_dims is None:
        row_dims = []
        for row in grid:
            dims = [np.shape(b)[0] if not isinstance(b, (AffineExpr, VarHandle)) else b.shape[0]
                    for b in row if b is not None]
            if not dims:
                raise StructureError("cannot infer the height of an all-zero block row")
            row_dims.append(dims[0])
    if col_dims is None:
        col_dims = []
        for j in range(nc):
            dims = [grid[i][j].shape[1] for i in range(nr) if grid[i][j] is not None]
            if not dims:
                raise StructureError("cannot infer the width of an all-zero block column")
            col_dims.append(dims[0])
    ro = np.concatenate(([0], np.cumsum(row_dims))).astype(int)
    co = np.concatenate(([0], np.cumsum(col_dims))).astype(int)
    const = np.zeros((ro[-1], co[-1]))
    terms = []
    for a in range(nr):
        for b in range(nc):
            blk = grid[a][b]
            if blk is None:
                continue
            e = as_expr(blk, (row_dims[a], col_dims[b]))
            if e.shape != (row_dims[a], col_dims[b]):
                raise StructureError(
                    f"block ({a}, {b}) has shape {e.shape}, expected {(row_dims[a], col_dims[b])}")
            const[ro[a]:ro[a + 1], co[b]:co[b + 1]] = e.const
            if not e.terms:
                continue
            er = np.zeros((ro[-1], row_dims[a]))
            er[ro[a]:ro[a + 1], :] = np.eye(row_dims[a])
            ec = np.zeros((col_dims[b], co[-1]))
            ec[:, co[b]:co[b + 1]] = np.eye(col_dims[b])
            for t in e.terms:
                left = er if t.left is None else er @ t.left
                right = ec if t.right is None else t.right @ ec
                terms.append(_Term(left, t.var, right, t.transposed))
    return AffineExpr(const, terms, row_dims, col_dims)


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

@dataclass
class PsdConstraint:
    """``expr >= margin * I`` on the symmetric part of ``expr``."""

    expr: AffineExpr
    margin: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.margin < 0:
            raise ConfigError("PSD margin must be non-negative")
        if self.expr.shape[0] != self.expr.shape[1]:
            raise StructureError("PSD constraints need a square expression")

    def slack(self, values) -> float:
        """``lambda_min(expr) - margin`` at ``values``."""
        val = self.expr.realize(values)
        return min_eigenvalue(0.5 * (val + val.T)) - self.margin


def strictify(expr, eps) -> PsdConstraint:
    """Represent ``expr > 0`` as ``expr >= eps I``."""
    if not eps > 0:
        raise ConfigError(f"strictness margin must be positive, got {eps}")
    return PsdConstraint(as_expr(expr), float(eps))


class LmiProblem:
    """Variables, PSD and equality constraints, and a convex objective.

    The objective is ``sum w_k ||E_k||_F + sum v_k e_k`` with affine ``E_k``
    and scalar affine ``e_k``; norm weights must be non-negative, so the
    objective is convex by construction.
    """

    def __init__(self, name=""):
        self.name = name
        self.variables: dict[str, VarHandle] = {}
        self.psd: list[PsdConstraint] = []
        self.equalities: list[tuple[AffineExpr, np.ndarray]] = []
        self.norm_terms: list[tuple[float, AffineExpr]] = []
        self.linear_terms: list[tuple[float, AffineExpr]] = []

    def variable(self, label, shape, kind=VarKind.RECTANGULAR) -> VarHandle:
        if label in self.variables:
            raise StructureError(f"duplicate variable label {label!r}")
        v = VarHandle(label, tuple(int(s) for s in shape), kind)
        self.variables[label] = v
        return v

    def symmetric(self, label, n) -> VarHandle:
        return self.variable(label, (n, n), VarKind.SYMMETRIC)

    def scalar(self, label) -> VarHandle:
        return self.variable(label, (1, 1), VarKind.SCALAR)

    def add_psd(self, expr, margin=0.0, label=""):
        con = expr if isinstance(expr, PsdConstraint) else PsdConstraint(as_expr(expr), margin, label)
        self._check_vars(con.expr)
        self.psd.append(con)
        return con

    def add_equality(self, expr, value=0.0):
        e = as_expr(expr)
        self._check_vars(e)
        self.equalities.append((e, np.broadcast_to(np.asarray(value, dtype=float), e.shape)))

    def add_norm(self, weight, expr):
        if weight < 0:
            raise ConfigError("norm weights must be non-negative")
        e = as_expr(expr)
        self._check_vars(e)
        if weight > 0:
            self.norm_terms.append((float(weight), e))

    def add_linear(self, weight, expr):
        e = as_expr(expr)
        if e.shape != (1, 1):
            raise StructureError("linear objective terms must be scalar")
        self._check_vars(e)
        self.linear_terms.append((float(weight), e))

    def objective_value(self, values) -> float:
        total = sum(w * np.linalg.norm(e.realize(values)) for w, e in self.norm_terms)
        total += sum(w * float(e.realize(values)[0, 0]) for w, e in self.linear_terms)
        return float(total)

    def _check_vars(self, expr):
        for v in expr.variables():
            if self.variables.get(v.label) is not v:
                raise StructureError(f"variable {v.label!r} does not belong to this problem")


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    INACCURATE = "inaccurate"


@dataclass
class SolveOptions:
    margin: float = DEFAULT_MARGIN
    tol: float = field(default_factory=default_tolerance)
    max_iters: int = 200
    solver: str = "CLARABEL"

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        if not self.tol > 0:
            raise ConfigError("tolerance must be positive")


@dataclass
class LmiSolution:
    status: Status
    values: dict
    objective: float | None
    slacks: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status is Status.OPTIMAL

    def __getitem__(self, key):
        return self.values[key.label if isinstance(key, VarHandle) else key]


def _solver_kwargs(solver, options):
    if solver == "CLARABEL":
        return dict(tol_gap_abs=options.tol, tol_gap_rel=options.tol,
                    tol_feas=options.tol, max_iter=options.max_iters)
    if solver == "SCS":
        return dict(eps=options.tol, max_iters=100 * options.max_iters)
    return {}


def solve(problem: LmiProblem, options: SolveOptions | None = None) -> LmiSolution:
    """Solve ``problem``; infeasibility is a status, backend failure raises.

    An ``OPTIMAL`` answer is re-checked here: every PSD constraint realized
    at the returned values must have ``lambda_min - margin >= -10 tol`` (tol
    scaled by the magnitude of the realized matrix), otherwise the status is
    downgraded to ``INACCURATE``.
    """
    import cvxpy as cp

    options = options or SolveOptions()
    cvars = {}
    for label, v in problem.variables.items():
        cvars[label] = cp.Variable(v.shape, symmetric=v.kind is VarKind.SYMMETRIC, name=label)
    cons = []
    for con in problem.psd:
        e = con.expr.to_cvxpy(cvars)
        n = con.expr.shape[0]
        sym = (e + e.T) / 2
        cons.append(sym - con.margin * np.eye(n) >> 0)
    for e, val in problem.equalities:
        cons.append(e.to_cvxpy(cvars) == val)
    obj = 0
    for w, e in problem.norm_terms:
        obj = obj + w * cp.norm(e.to_cvxpy(cvars), "fro")
    for w, e in problem.linear_terms:
        obj = obj + w * cp.sum(e.to_cvxpy(cvars))
    prob = cp.Problem(cp.Minimize(obj), cons)

    status = None
    for solver in dict.fromkeys([options.solver, "SCS"]):
        try:
            with warnings.catch_warnings():
                # inaccuracy is reported through the returned status instead
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=solver, **_solver_kwargs(solver, options))
            status = prob.status
            break
        except cp.error.SolverError as exc:
            log.info("backend %s failed on %s: %s", solver, problem.name or "problem", exc)
    if status is None:
        raise SolverError(f"all backends failed on {problem.name or 'problem'}")

    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return LmiSolution(Status.INFEASIBLE, {}, None)
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise SolverError(f"{problem.name or 'problem'} is unbounded")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverError(f"backend returned status {status!r}")

    values = {}
    for label, v in cvars.items():
        val = np.atleast_2d(np.asarray(v.value, dtype=float))
        if problem.variables[label].kind is VarKind.SYMMETRIC:
            val = 0.5 * (val + val.T)
        values[label] = val
    slacks = [con.slack(values) for con in problem.psd]
    ok = status == cp.OPTIMAL
    for con, s in zip(problem.psd, slacks):
        scale = max(1.0, float(np.max(np.abs(con.expr.realize(values)), initial=0.0)))
        if s < -10 * options.tol * scale:
            ok = False
    return LmiSolution(Status.OPTIMAL if ok else Status.INACCURATE, values,
                       problem.objective_value(values), slacks)


def scaled_identity(t, n) -> AffineExpr:
    """``t * I_n`` for a scalar variable or expression ``t``."""
    t = as_expr(t)
    if t.shape != (1, 1):
        raise StructureError("scaled_identity needs a scalar expression")
    eye = np.eye(n)
    out = as_expr(np.zeros((n, n)))
    for k in range(n):
        out = out + eye[:, k:k + 1] @ t @ eye[k:k + 1, :]
    return out
