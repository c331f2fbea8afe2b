"""Networked-system data model, design specifications, costs and file I/O.

Subsystem ``i`` evolves as::

    dx_i = sum_{j in Ebar_i} A_ij x_j + B_ij u_j + E_ij w_j
    y_i  = sum_{j in Ebar_i} C_ij x_j + D_ij u_j + F_ij w_j

with optional distributed feedback ``u_i = sum_j K_ij x_j``.  A pair
``(i, j)`` always names the block ``M_ij``, i.e. the edge ``j -> i``.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .blockmat import BlockMatrix, is_network_matrix
from .errors import ConfigError, FormatError, SpecError, StructureError

MATRIX_NAMES = ("A", "B", "C", "D", "E", "F")


def _zero(row_dims, col_dims):
    return BlockMatrix.zeros(row_dims, col_dims)


@dataclass(frozen=True)
class NetworkedSystem:
    """Topology plus the block system matrices of a linear networked system.

    ``in_neighbors[i]`` is ``E_i``.  Every block ``(i, j)`` with
    ``j not in E_i | {i}`` must vanish in ``A..F`` and ``K``.
    """

    in_neighbors: tuple
    A: BlockMatrix
    B: BlockMatrix
    C: BlockMatrix
    D: BlockMatrix
    E: BlockMatrix
    F: BlockMatrix
    K: BlockMatrix | None = None

    def __post_init__(self):
        ins = tuple(frozenset(int(j) for j in e) for e in self.in_neighbors)
        object.__setattr__(self, "in_neighbors", ins)
        n = len(ins)
        x, u = self.A.row_dims, self.B.col_dims
        w, y = self.E.col_dims, self.C.row_dims
        expect = {"A": (x, x), "B": (x, u), "C": (y, x), "D": (y, u), "E": (x, w), "F": (y, w)}
        mats = {name: getattr(self, name) for name in MATRIX_NAMES}
        if self.K is not None:
            expect["K"] = (u, x)
            mats["K"] = self.K
        for name, (r, c) in expect.items():
            if mats[name].row_dims != r or mats[name].col_dims != c:
                raise StructureError(
                    f"{name} has partition {mats[name].row_dims} x {mats[name].col_dims}, "
                    f"expected {r} x {c}")
            if len(r) != n:
                raise StructureError(f"{name} has {len(r)} block rows but N = {n}")
        for i, e in enumerate(ins):
            if i in e:
                raise StructureError(f"subsystem {i + 1} lists itself as an in-neighbor")
            if any(j < 0 or j >= n for j in e):
                raise StructureError(f"subsystem {i + 1} has an out-of-range in-neighbor")
            for j in range(n):
                if j == i or j in e:
                    continue
                for name, mat in mats.items():
                    if np.any(mat.block(i, j)):
                        raise StructureError(
                            f"{name}[{i + 1},{j + 1}] is nonzero but {j + 1} is not an "
                            f"in-neighbor of {i + 1}")

    # -- dimensions and topology ------------------------------------------
    @property
    def N(self) -> int:
        return len(self.in_neighbors)

    @property
    def state_dims(self):
        return self.A.row_dims

    @property
    def input_dims(self):
        return self.B.col_dims

    @property
    def disturbance_dims(self):
        return self.E.col_dims

    @property
    def output_dims(self):
        return self.C.row_dims

    @property
    def out_neighbors(self):
        outs = [set() for _ in range(self.N)]
        for i, e in enumerate(self.in_neighbors):
            for j in e:
                outs[j].add(i)
        return tuple(frozenset(o) for o in outs)

    def edges(self):
        """Sorted ``(i, j)`` pairs with ``j in E_i``."""
        return sorted((i, j) for i, e in enumerate(self.in_neighbors) for j in e)

    def vacuous_edges(self):
        mats = [getattr(self, m) for m in MATRIX_NAMES]
        if self.K is not None:
            mats.append(self.K)
        return [(i, j) for i, j in self.edges() if not any(np.any(m.block(i, j)) for m in mats)]

    # -- construction -----------------------------------------------------
    @classmethod
    def from_blocks(cls, state_dims, input_dims=None, disturbance_dims=None, output_dims=None,
                    edges=None, **blocks):
        """Build from ``{(i, j): array}`` block maps keyed by matrix name.

        ``edges`` is an iterable of ``(i, j)`` pairs (``j in E_i``); when
        omitted the topology is read off the nonzero off-diagonal blocks.
        """
        n = len(state_dims)
        x = tuple(state_dims)
        u = tuple(input_dims) if input_dims is not None else (0,) * n
        w = tuple(disturbance_dims) if disturbance_dims is not None else (0,) * n
        y = tuple(output_dims) if output_dims is not None else (0,) * n
        parts = {"A": (x, x), "B": (x, u), "C": (y, x), "D": (y, u), "E": (x, w), "F": (y, w),
                 "K": (u, x)}
        unknown = set(blocks) - set(parts)
        if unknown:
            raise StructureError(f"unknown matrices {sorted(unknown)}")
        mats = {}
        for name, (r, c) in parts.items():
            given = blocks.get(name)
            if given is None:
                mats[name] = None if name == "K" else _zero(r, c)
            elif isinstance(given, BlockMatrix):
                mats[name] = given
            else:
                mats[name] = BlockMatrix.from_blocks(given, r, c)
        if edges is None:
            ins = _topology_from(mats, n)
        else:
            ins = [set() for _ in range(n)]
            for i, j in edges:
                ins[i].add(j)
        return cls(tuple(ins), **mats)

    def replace(self, **changes) -> "NetworkedSystem":
        return dataclasses.replace(self, **changes)

    def with_matrices(self, tol=0.0, **mats) -> "NetworkedSystem":
        """Replace matrices and recompute the topology from nonzero blocks."""
        current = {m: getattr(self, m) for m in (*MATRIX_NAMES, "K")}
        current.update(mats)
        ins = _topology_from(current, self.N, tol)
        return NetworkedSystem(tuple(ins), **current)

    def closed_loop_A(self) -> BlockMatrix:
        if self.K is None:
            return self.A
        return BlockMatrix(self.A.data + self.B.data @ self.K.data, self.state_dims)


def _topology_from(mats, n, tol=0.0):
    ins = [set() for _ in range(n)]
    for mat in mats.values():
        if mat is None:
            continue
        for i in range(n):
            for j in range(n):
                if i != j and mat.block(i, j).size and np.max(np.abs(mat.block(i, j))) > tol:
                    ins[i].add(j)
    return ins


# ---------------------------------------------------------------------------
# Supply rates
# ---------------------------------------------------------------------------

def _per_subsystem(value, n):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,))
    return [float(v) for v in arr]


def _scaled_identity(dims, values):
    return BlockMatrix.block_diag([v * np.eye(d) for v, d in zip(values, dims)])


@dataclass(frozen=True)
class QsrSpec:
    """Quadratic supply rate ``[y;u]^T [[Q, S], [S^T, R]] [y;u]``.

    ``Q`` is ``m x m``, ``S`` is ``m x p`` and ``R`` is ``p x p`` where ``m``
    and ``p`` are the output and input (or disturbance) partitions.
    """

    Q: BlockMatrix
    S: BlockMatrix
    R: BlockMatrix

    @property
    def output_dims(self):
        return self.Q.row_dims

    @property
    def input_dims(self):
        return self.R.row_dims

    @classmethod
    def passive(cls, dims, delta=1e-3):
        """Passivity with ``Q = 0`` relaxed to ``-delta I`` so that ``-Q > 0``."""
        n = len(dims)
        return cls(_scaled_identity(dims, [-delta] * n), _scaled_identity(dims, [0.5] * n),
                   BlockMatrix.zeros(dims))

    @classmethod
    def strictly_passive(cls, dims, nu, rho):
        """``Q = -rho I, S = I/2, R = -nu I`` (indices may be per subsystem)."""
        n = len(dims)
        return cls(_scaled_identity(dims, [-r for r in _per_subsystem(rho, n)]),
                   _scaled_identity(dims, [0.5] * n),
                   _scaled_identity(dims, [-v for v in _per_subsystem(nu, n)]))

    @classmethod
    def l2_gain(cls, output_dims, input_dims, gamma):
        """``Q = -I, S = 0, R = gamma^2 I``."""
        n = len(output_dims)
        g = _per_subsystem(gamma, n)
        return cls(_scaled_identity(output_dims, [-1.0] * n),
                   BlockMatrix.zeros(output_dims, input_dims),
                   _scaled_identity(input_dims, [v * v for v in g]))

    @classmethod
    def sector(cls, dims, a, b):
        """Sector ``[a, b]``: ``Q = -I, S = (a + b)/2 I, R = -ab I``."""
        n = len(dims)
        return cls(_scaled_identity(dims, [-1.0] * n),
                   _scaled_identity(dims, [0.5 * (a + b)] * n),
                   _scaled_identity(dims, [-a * b] * n))

    def validate(self, output_dims=None, input_dims=None, in_neighbors=None):
        """Raise :class:`SpecError` unless the supply rate meets the hypotheses."""
        if output_dims is not None and tuple(output_dims) != self.Q.row_dims:
            raise SpecError(f"Q partition {self.Q.row_dims} does not match outputs {tuple(output_dims)}")
        if input_dims is not None and tuple(input_dims) != self.R.row_dims:
            raise SpecError(f"R partition {self.R.row_dims} does not match inputs {tuple(input_dims)}")
        if self.S.row_dims != self.Q.row_dims or self.S.col_dims != self.R.row_dims:
            raise SpecError("S partition is inconsistent with Q and R")
        if not self.Q.is_block_diagonal():
            raise SpecError("Q must be block diagonal")
        if not self.Q.is_symmetric() or not self.R.is_symmetric():
            raise SpecError("Q and R must be symmetric")
        if self.Q.shape[0] and np.linalg.eigvalsh(-self.Q.data)[0] <= 0:
            raise SpecError("-Q must be positive definite")
        if in_neighbors is not None:
            undirected = [set(e) | {i for i, e2 in enumerate(in_neighbors) if k in e2}
                          for k, e in enumerate(in_neighbors)]
            for name in ("S", "R"):
                mat = getattr(self, name)
                if mat.row_dims != mat.col_dims and name == "S":
                    ok = _rect_network_ok(mat, undirected)
                else:
                    ok = is_network_matrix(mat, undirected)
                if not ok:
                    raise SpecError(f"{name} is not a network matrix of the topology")
        return self


def _rect_network_ok(mat, undirected):
    n = len(undirected)
    return all(not np.any(mat.block(i, j)) for i in range(n) for j in range(n)
               if i != j and j not in undirected[i])


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

class CostKind(enum.Enum):
    FIXED_LEVELS = "fixed"
    GRAPH_DISTANCE = "distance"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class CostModel:
    kind: CostKind = CostKind.FIXED_LEVELS
    c_exist: float = 1.0
    c_new: float = 10.0
    c_base: float = 1.0
    c_max: float | None = None
    matrix: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def fixed(cls, c_exist=1.0, c_new=10.0):
        return cls(CostKind.FIXED_LEVELS, c_exist=c_exist, c_new=c_new)

    @classmethod
    def distance(cls, c_base=1.0, c_max=None):
        return cls(CostKind.GRAPH_DISTANCE, c_base=c_base, c_max=c_max)

    @classmethod
    def explicit(cls, matrix):
        return cls(CostKind.EXPLICIT, matrix=np.asarray(matrix, dtype=float))

    def to_dict(self):
        if self.kind is CostKind.FIXED_LEVELS:
            return {"kind": "fixed", "c_exist": self.c_exist, "c_new": self.c_new}
        if self.kind is CostKind.GRAPH_DISTANCE:
            return {"kind": "distance", "c_base": self.c_base, "c_max": self.c_max}
        return {"kind": "explicit", "matrix": np.asarray(self.matrix).tolist()}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "fixed")
        if kind == "fixed":
            return cls.fixed(d.get("c_exist", 1.0), d.get("c_new", 10.0))
        if kind == "distance":
            return cls.distance(d.get("c_base", 1.0), d.get("c_max"))
        if kind == "explicit":
            if "matrix" not in d:
                raise FormatError("costs: explicit model needs a 'matrix'")
            return cls.explicit(d["matrix"])
        raise FormatError(f"costs: unknown kind {kind!r}")


def hop_distances(in_neighbors) -> np.ndarray:
    """Undirected shortest-path hop counts (``inf`` when unreachable)."""
    n = len(in_neighbors)
    adj = np.zeros((n, n))
    for i, e in enumerate(in_neighbors):
        for j in e:
            adj[i, j] = adj[j, i] = 1.0
    return shortest_path(adj, unweighted=True, directed=False)


def cost_matrix(model: CostModel, in_neighbors) -> np.ndarray:
    """Interconnection costs ``c_ij`` for the initial topology (zero diagonal)."""
    n = len(in_neighbors)
    if model.kind is CostKind.EXPLICIT:
        mat = np.array(model.matrix, dtype=float)
        if mat.shape != (n, n):
            raise ConfigError(f"explicit cost matrix has shape {mat.shape}, expected {(n, n)}")
        if np.any(mat < 0):
            raise ConfigError("costs must be non-negative")
        return mat
    if model.kind is CostKind.FIXED_LEVELS:
        if model.c_exist < 0 or model.c_new < 0:
            raise ConfigError("cost levels must be non-negative")
        mat = np.full((n, n), float(model.c_new))
        for i, e in enumerate(in_neighbors):
            for j in e:
                mat[i, j] = model.c_exist
    else:
        if model.c_base < 0 or (model.c_max is not None and model.c_max < 0):
            raise ConfigError("distance cost parameters must be non-negative")
        dist = hop_distances(in_neighbors)
        finite = dist[np.isfinite(dist)]
        diameter = float(finite.max()) if finite.size else 0.0
        c_max = model.c_max if model.c_max is not None else 10.0 * model.c_base * max(diameter, 1.0)
        mat = np.where(np.isfinite(dist), model.c_base * dist, c_max)
    np.fill_diagonal(mat, 0.0)
    return mat


def deviation_and_nominal_cost(initial: NetworkedSystem, synthesized: NetworkedSystem, costs):
    """``(J_Dev, J_Nom)`` over off-diagonal ``A`` blocks, Frobenius norms.

    ``costs`` is an ``N x N`` array or a :class:`CostModel` evaluated on the
    initial topology.
    """
    if initial.state_dims != synthesized.state_dims:
        raise StructureError("systems have different state partitions")
    c = cost_matrix(costs, initial.in_neighbors) if isinstance(costs, CostModel) else np.asarray(costs)
    j_dev = j_nom = 0.0
    for i in range(initial.N):
        for j in range(initial.N):
            if i == j:
                continue
            a_star = synthesized.A.block(i, j)
            j_dev += c[i, j] * np.linalg.norm(a_star - initial.A.block(i, j))
            j_nom += np.linalg.norm(a_star)
    return float(j_dev), float(j_nom)


# ---------------------------------------------------------------------------
# Design specifications
# ---------------------------------------------------------------------------

class Designation(enum.Enum):
    FIXED = "fixed"
    DESIGNABLE = "designable"
    REMOVABLE = "removable"


@dataclass(frozen=True)
class DesignSpec:
    """Which interconnection blocks a synthesis run may change, and at what cost.

    Pairs absent from ``designations`` are fixed.  A designable pair's
    reference defaults to its current block and its cost comes from the cost
    model; a removable pair defaults to reference ``0`` and the removal cost
    ``removal_factor * max c``.  Explicit ``reference`` entries override the
    default reference.  ``input_pairs``/``disturbance_pairs`` open the
    corresponding ``B``/``E`` blocks (reference: current block, cost: ``c_ij``).
    ``intrinsic_C``/``intrinsic_D`` list subsystems whose ``C_ii``/``D_ii``
    become design variables in dissipativity synthesis.
    """

    designations: Mapping = field(default_factory=dict)
    reference: Mapping = field(default_factory=dict)
    costs: CostModel = field(default_factory=CostModel)
    input_pairs: frozenset = frozenset()
    disturbance_pairs: frozenset = frozenset()
    intrinsic_C: frozenset = frozenset()
    intrinsic_D: frozenset = frozenset()
    removal_factor: float = 1e6
    intrinsic_cost: float = 1.0

    def __post_init__(self):
        for (i, j), d in self.designations.items():
            if i == j and d is not Designation.FIXED:
                raise SpecError(f"diagonal pair ({i + 1},{i + 1}) cannot be designable")
        if self.removal_factor <= 0:
            raise ConfigError("removal_factor must be positive")

    def designation(self, i, j) -> Designation:
        return self.designations.get((i, j), Designation.FIXED)

    def is_variable(self, i, j) -> bool:
        return self.designation(i, j) is not Designation.FIXED

    def reference_block(self, mat: BlockMatrix, i, j) -> np.ndarray:
        if (i, j) in self.reference:
            return np.asarray(self.reference[(i, j)], dtype=float)
        if self.designation(i, j) is Designation.REMOVABLE:
            return np.zeros_like(mat.block(i, j))
        return np.array(mat.block(i, j))

    def pair_cost(self, i, j, cmat) -> float:
        if self.designation(i, j) is Designation.REMOVABLE:
            return self.removal_factor * max(float(np.max(cmat, initial=0.0)), 1.0)
        return float(cmat[i, j])

    def cost_matrix(self, system: NetworkedSystem):
        return cost_matrix(self.costs, system.in_neighbors)

    def check(self, system: NetworkedSystem):
        n = system.N
        pairs = list(self.designations) + list(self.reference) + list(self.input_pairs) \
            + list(self.disturbance_pairs)
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise SpecError(f"pair ({i + 1},{j + 1}) is out of range for N = {n}")
        for (i, j), ref in self.reference.items():
            if np.shape(ref) != system.A.block(i, j).shape:
                raise SpecError(f"reference ({i + 1},{j + 1}) has the wrong shape")
        return self

    # -- convenience constructors -----------------------------------------
    @classmethod
    def fixed(cls, costs=None):
        return cls(costs=costs or CostModel())

    @classmethod
    def all_pairs(cls, system: NetworkedSystem, designation=Designation.DESIGNABLE,
                  reference=None, costs=None, **kw):
        """Designate every off-diagonal pair.

        ``reference="initial"`` pins every reference to the current block,
        which for removable pairs overrides their zero default.
        """
        n = system.N
        des = {(i, j): designation for i in range(n) for j in range(n) if i != j}
        ref = {}
        if reference == "initial":
            ref = {(i, j): np.array(system.A.block(i, j)) for (i, j) in des}
        return cls(des, ref, costs or CostModel(), **kw)

    @classmethod
    def refine_all(cls, system: NetworkedSystem, costs=None, **kw):
        """Every existing edge refinable, every absent edge creatable."""
        return cls.all_pairs(system, Designation.DESIGNABLE, costs=costs, **kw)


def mark_refinable(spec: DesignSpec, system: NetworkedSystem, edge, remove=False) -> DesignSpec:
    """Turn the existing edge ``(i, j)`` into a design variable.

    The current ``A_ij`` becomes the reference.  With ``remove=True`` the pair
    is instead made removable with reference ``0`` and the removal cost.
    The system keeps its block; the designation is what frees it.
    """
    i, j = edge
    if j not in system.in_neighbors[i]:
        raise SpecError(f"{j + 1} is not an in-neighbor of {i + 1}")
    des = dict(spec.designations)
    ref = dict(spec.reference)
    if remove:
        des[(i, j)] = Designation.REMOVABLE
        ref.pop((i, j), None)
    else:
        des[(i, j)] = Designation.DESIGNABLE
        ref[(i, j)] = np.array(system.A.block(i, j))
    return dataclasses.replace(spec, designations=des, reference=ref)


# ---------------------------------------------------------------------------
# Edge bookkeeping and DOT
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeDiff:
    kept: frozenset
    added: frozenset
    removed: frozenset

    def to_dict(self):
        def fmt(s):
            return [[i + 1, j + 1] for i, j in sorted(s)]
        return {"kept": fmt(self.kept), "added": fmt(self.added), "removed": fmt(self.removed)}


def coupling_edges(system: NetworkedSystem, tol=1e-6):
    """``(i, j)`` pairs whose ``A_ij`` has Frobenius norm above ``tol``."""
    n = system.N
    return frozenset((i, j) for i in range(n) for j in range(n)
                     if i != j and np.linalg.norm(system.A.block(i, j)) > tol)


def edge_diff(initial: NetworkedSystem, final: NetworkedSystem, tol=1e-6) -> EdgeDiff:
    before, after = coupling_edges(initial, tol), coupling_edges(final, tol)
    return EdgeDiff(before & after, after - before, before - after)


def to_dot(system: NetworkedSystem, annotations: EdgeDiff | None = None, title=None,
           costs=None) -> str:
    """DOT digraph with kept/added/removed couplings in blue/green/red.

    An edge ``j -> i`` is drawn for every pair ``(i, j)``.  ``costs`` is an
    optional ``(J_Dev, J_Nom)`` tuple written into the header comment.
    """
    if annotations is None:
        annotations = EdgeDiff(frozenset(coupling_edges(system)), frozenset(), frozenset())
    lines = []
    if costs is not None:
        lines.append(f"// J_Dev={costs[0]:.6g} J_Nom={costs[1]:.6g}")
    lines.append("digraph G {")
    if title:
        lines.append(f'  label="{title}";')
    lines.append("  node [shape=circle];")
    for i in range(system.N):
        lines.append(f"  {i + 1};")
    styles = [("kept", "blue", "solid"), ("added", "green", "solid"), ("removed", "red", "dashed")]
    for attr, color, style in styles:
        for i, j in sorted(getattr(annotations, attr)):
            lines.append(f'  {j + 1} -> {i + 1} [color={color}, style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def _key(i, j):
    return f"{i + 1},{j + 1}"


def _parse_key(key, n, where):
    try:
        i, j = (int(s) for s in key.split(","))
    except ValueError as exc:
        raise FormatError(f"{where}: bad block key {key!r}") from exc
    if not (1 <= i <= n and 1 <= j <= n):
        raise FormatError(f"{where}: block key {key!r} out of range for N = {n}")
    return i - 1, j - 1


def _dims_entry(raw, n, name, required):
    if raw is None:
        if required:
            raise FormatError(f"dims.{name}: missing")
        return (0,) * n
    if isinstance(raw, int):
        raw = [raw] * n
    if not isinstance(raw, list) or len(raw) != n or not all(isinstance(d, int) and d >= 0 for d in raw):
        raise FormatError(f"dims.{name}: expected {n} non-negative integers")
    return tuple(raw)


def block_map_from_json(raw, n, row_dims, col_dims, where):
    if not isinstance(raw, dict):
        raise FormatError(f"{where}: expected an object of blocks")
    out = {}
    for key, val in raw.items():
        i, j = _parse_key(key, n, where)
        try:
            arr = np.array(val, dtype=float)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}[{key}]: not a numeric matrix") from exc
        if arr.ndim == 1 and col_dims[j] == 0:
            arr = arr.reshape(row_dims[i], 0)
        if arr.shape != (row_dims[i], col_dims[j]):
            raise FormatError(
                f"{where}[{key}]: shape {arr.shape}, expected {(row_dims[i], col_dims[j])}")
        out[(i, j)] = arr
    return out


def block_map_to_json(mat: BlockMatrix):
    return {_key(i, j): blk.tolist() for (i, j), blk in sorted(mat.to_dict().items())}


def system_from_dict(d) -> NetworkedSystem:
    if not isinstance(d, dict):
        raise FormatError("system: expected a JSON object")
    n = d.get("N")
    if not isinstance(n, int) or n < 1:
        raise FormatError("N: expected a positive integer")
    dims = d.get("dims")
    if not isinstance(dims, dict):
        raise FormatError("dims: expected an object")
    x = _dims_entry(dims.get("x"), n, "x", True)
    u = _dims_entry(dims.get("u"), n, "u", False)
    w = _dims_entry(dims.get("w"), n, "w", False)
    y = _dims_entry(dims.get("y"), n, "y", False)
    parts = {"A": (x, x), "B": (x, u), "C": (y, x), "D": (y, u), "E": (x, w), "F": (y, w),
             "K": (u, x)}
    blocks = {}
    for name, (r, c) in parts.items():
        if name in d:
            blocks[name] = block_map_from_json(d[name], n, r, c, name)
    edges = d.get("edges", [])
    if not isinstance(edges, list):
        raise FormatError("edges: expected a list of [i, j] pairs")
    pairs = []
    for k, e in enumerate(edges):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise FormatError(f"edges[{k}]: expected [i, j]")
        if not (1 <= e[0] <= n and 1 <= e[1] <= n) or e[0] == e[1]:
            raise FormatError(f"edges[{k}]: invalid pair {e}")
        pairs.append((e[0] - 1, e[1] - 1))
    try:
        sys = NetworkedSystem.from_blocks(x, u, w, y, edges=pairs, **blocks)
    except StructureError as exc:
        raise FormatError(str(exc)) from exc
    for i, j in sys.vacuous_edges():
        warnings.warn(f"vacuous edge: {j + 1} is listed in E_{i + 1} but all blocks are zero",
                      stacklevel=2)
    return sys


def system_to_dict(sys: NetworkedSystem) -> dict:
    out = {
        "N": sys.N,
        "dims": {"x": list(sys.state_dims), "u": list(sys.input_dims),
                 "w": list(sys.disturbance_dims), "y": list(sys.output_dims)},
        "edges": [[i + 1, j + 1] for i, j in sys.edges()],
    }
    for name in MATRIX_NAMES:
        out[name] = block_map_to_json(getattr(sys, name))
    if sys.K is not None:
        out["K"] = block_map_to_json(sys.K)
    return out


def load_system(path) -> NetworkedSystem:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return system_from_dict(raw)


def save_system(sys: NetworkedSystem, path, extra=None):
    """Write the canonical JSON form; ``extra`` keys are appended verbatim."""
    d = system_to_dict(sys)
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1) + "\n")


def _pair_list(raw, n, where):
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise FormatError(f"{where}: expected a list of [i, j] pairs")
    out = []
    for k, e in enumerate(raw):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise FormatError(f"{where}[{k}]: expected [i, j]")
        if not (1 <= e[0] <= n and 1 <= e[1] <= n):
            raise FormatError(f"{where}[{k}]: out of range")
        out.append((e[0] - 1, e[1] - 1))
    return out


def design_spec_from_dict(d, system: NetworkedSystem) -> DesignSpec:
    if not isinstance(d, dict):
        raise FormatError("design spec: expected a JSON object")
    n = system.N
    des = {}
    for key, kind in (("designable", Designation.DESIGNABLE), ("removable", Designation.REMOVABLE)):
        for i, j in _pair_list(d.get(key), n, key):
            if i == j:
                raise FormatError(f"{key}: diagonal pair ({i + 1},{j + 1}) is not allowed")
            des[(i, j)] = kind
    ref = block_map_from_json(d.get("reference", {}), n, system.state_dims, system.state_dims,
                              "reference")
    costs = CostModel.from_dict(d.get("costs", {"kind": "fixed"}))
    kw = {}
    if "removal_factor" in d:
        kw["removal_factor"] = float(d["removal_factor"])
    intrinsic = d.get("intrinsic", {})
    return DesignSpec(
        des, ref, costs,
        input_pairs=frozenset(_pair_list(d.get("designable_inputs"), n, "designable_inputs")),
        disturbance_pairs=frozenset(
            _pair_list(d.get("designable_disturbances"), n, "designable_disturbances")),
        intrinsic_C=frozenset(k - 1 for k in intrinsic.get("C", [])),
        intrinsic_D=frozenset(k - 1 for k in intrinsic.get("D", [])),
        **kw,
    ).check(system)


def design_spec_to_dict(spec: DesignSpec) -> dict:
    def pairs(kind):
        return [[i + 1, j + 1] for (i, j), d in sorted(spec.designations.items()) if d is kind]

    out = {"designable": pairs(Designation.DESIGNABLE), "removable": pairs(Designation.REMOVABLE),
           "reference": {_key(i, j): np.asarray(b).tolist() for (i, j), b in sorted(spec.reference.items())},
           "costs": spec.costs.to_dict(), "removal_factor": spec.removal_factor}
    if spec.input_pairs:
        out["designable_inputs"] = [[i + 1, j + 1] for i, j in sorted(spec.input_pairs)]
    if spec.disturbance_pairs:
        out["designable_disturbances"] = [[i + 1, j + 1] for i, j in sorted(spec.disturbance_pairs)]
    if spec.intrinsic_C or spec.intrinsic_D:
        out["intrinsic"] = {"C": sorted(k + 1 for k in spec.intrinsic_C),
                            "D": sorted(k + 1 for k in spec.intrinsic_D)}
    return out


def load_design_spec(path, system) -> DesignSpec:
    return design_spec_from_dict(json.loads(Path(path).read_text()), system)


def qsr_from_dict(d, output_dims, input_dims) -> QsrSpec:
    """Supply rate from ``{"type": ...}`` shorthands or explicit Q/S/R blocks."""
    if not isinstance(d, dict):
        raise FormatError("qsr: expected a JSON object")
    kind = d.get("type", "explicit")
    try:
        if kind == "passive":
            return QsrSpec.passive(output_dims, d.get("delta", 1e-3))
        if kind == "strictly_passive":
            return QsrSpec.strictly_passive(output_dims, d["nu"], d["rho"])
        if kind == "l2_gain":
            return QsrSpec.l2_gain(output_dims, input_dims, d["gamma"])
        if kind == "sector":
            return QsrSpec.sector(output_dims, d["a"], d["b"])
    except KeyError as exc:
        raise FormatError(f"qsr: missing parameter {exc}") from exc
    if kind != "explicit":
        raise FormatError(f"qsr: unknown type {kind!r}")
    n = len(output_dims)
    mats = {}
    for name, (r, c) in {"Q": (output_dims, output_dims), "S": (output_dims, input_dims),
                         "R": (input_dims, input_dims)}.items():
        mats[name] = BlockMatrix.from_blocks(block_map_from_json(d.get(name, {}), n, r, c, name), r, c)
    return QsrSpec(**mats)


def load_qsr(path, output_dims, input_dims) -> QsrSpec:
    return qsr_from_dict(json.loads(Path(path).read_text()), output_dims, input_dims)


def block_matrix_from_dict(d) -> BlockMatrix:
    """Symmetric block matrix ``{"dims": [...], "blocks": {"i,j": ...}}``.

    Missing ``(j, i)`` blocks are mirrored from ``(i, j)``.
    """
    if not isinstance(d, dict):
        raise FormatError("block matrix: expected a JSON object")
    unknown = set(d) - {"dims", "blocks"}
    if unknown:
        raise FormatError(f"block matrix: unknown keys {sorted(unknown)}")
    dims = d.get("dims")
    if not isinstance(dims, list) or not all(isinstance(v, int) and v > 0 for v in dims):
        raise FormatError("dims: expected a list of positive integers")
    n = len(dims)
    blocks = block_map_from_json(d.get("blocks", {}), n, dims, dims, "blocks")
    for (i, j), b in list(blocks.items()):
        blocks.setdefault((j, i), b.T)
    return BlockMatrix.from_blocks(blocks, dims)


def case_study_blocks() -> dict:
    """Six published blocks (0-based keys) of a five-subsystem, three-state case study."""
    return {
        (1, 1): np.array([[-2.06, 1.43, -1.83], [-1.79, -2.01, 1.78], [1.50, -2.08, -2.00]]),
        (1, 2): np.array([[-1.35, -1.62, -8.97], [1.51, -1.40, -13.70], [8.99, 13.68, -1.43]]),
        (1, 3): np.array([[-2.96, 0.12, 2.47], [1.94, -4.44, 0.11], [1.53, 1.94, -2.98]]),
        (4, 4): np.array([[-2.86, -0.56, -1.64], [-0.56, -2.20, -1.06], [-1.64, -1.06, -4.93]]),
        (4, 1): np.array([[-2.54, 1.13, -0.13], [-0.02, -1.56, 1.40], [1.14, 0.83, -1.78]]),
        (4, 3): np.array([[-1.42, 0.09, -0.61], [0.09, -0.30, -0.18], [-0.61, -0.18, -0.86]]),
    }


def case_study_partial_system() -> NetworkedSystem:
    """A 5 x (3-state) system holding only the published blocks (others zero)."""
    return NetworkedSystem.from_blocks([3] * 5, A=case_study_blocks())
