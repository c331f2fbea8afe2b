"""Decentralized interconnection-topology synthesis.

Four modes share one sequential engine.  With ``X`` the block-diagonal
certificate (``P`` or ``M``) the centralized condition is a symmetric network
matrix ``W > 0``:

* stability:         ``W = -A^T P - P A``
* stabilizability:   ``W = -A M - M A^T - B L - L^T B^T`` and ``K = L M^{-1}``
* dissipativity:     ``W = BEW([[-A^T P - P A, -P B + C^T S, C^T],
                                  [.,  D^T S + S^T D + R, D^T], [C, D, -Q^{-1}]])``
* dissipativation:   the same with ``A M + B L`` in place of ``P A``, ``E`` in
                     place of ``P B`` and ``F`` in place of ``D``, scaled by ``M``.

Subsystem ``i`` is processed once.  Its cells ``W_ij`` toward already
processed ``j`` are affine in its own unknowns once the bilinear products
are renamed (``Q_ij = P_ii A_ij`` etc.), and the step imposes

    [[W_ii, W_i], [W_i^T, A D A^T]] >= margin * I,

where ``A D A^T`` is the frozen principal block of ``W`` for the earlier
subsystems.  That matrix *is* the leading principal block of ``W`` after
step ``i``, so the final ``W`` has ``lambda_min >= margin`` by construction.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysis import (check_dissipativity_centralized, dissipativity_matrix,
                       eigen_stability_oracle, simulate_dissipation)
from .blockmat import BlockMatrix, min_eigenvalue
from .decomp import (CertificateArchive, ProtocolTrace, decompose_step, message_for,
                     neighbor_sets, schur_linearized_constraint)
from .errors import (ConfigError, DiagnosticError, SimulationError, SpecError, StepInfeasible,
                     StructureError)
from .lmi import (DEFAULT_MARGIN, AffineExpr, LmiProblem, SolveOptions, Status, as_expr, bmat,
                  solve)
from .sysmodel import (CostModel, DesignSpec, EdgeDiff, NetworkedSystem, cost_matrix,
                       deviation_and_nominal_cost, edge_diff)

log = logging.getLogger(__name__)

# default pivot floor where the certificate scale is pinned by I <= X
HOMOGENEOUS_FLOOR = 1e-2


class Mode(enum.Enum):
    STABILITY = "stability"
    STABILIZABILITY = "stabilizability"
    DISSIPATIVITY = "dissipativity"
    DISSIPATIVATION = "dissipativation"

    @property
    def uses_m(self):
        return self in (Mode.STABILIZABILITY, Mode.DISSIPATIVATION)

    @property
    def dissipative(self):
        return self in (Mode.DISSIPATIVITY, Mode.DISSIPATIVATION)


@dataclass
class SynthesisOptions:
    margin: float = DEFAULT_MARGIN
    step_floor: float | None = None
    cert_bound: float = 1e3
    regularization: float = 1e-3
    decay: float = 1e-5
    prune_tol: float = 1e-6
    beta: float | None = None
    order: Sequence[int] | None = None
    feedback: str = "penalized"
    screen: bool = True
    simulate: bool = True
    sim_trials: int = 100
    sim_seed: int = 0
    solve: SolveOptions | None = None

    def __post_init__(self):
        if not self.margin > 0:
            raise ConfigError("margin must be positive")
        if self.decay < 0 or self.prune_tol < 0:
            raise ConfigError("decay and prune_tol must be non-negative")
        if self.feedback not in ("penalized", "neighbors"):
            raise ConfigError("feedback must be 'penalized' or 'neighbors'")

    def solver_options(self):
        return self.solve or SolveOptions(margin=self.margin)


@dataclass
class StepRecord:
    step: int
    subsystem: int
    status: str
    objective: float | None = None
    margin: float | None = None
    pivot_min_eig: float | None = None
    pruned: int = 0

    def to_dict(self):
        return {"step": self.step + 1, "subsystem": self.subsystem + 1, "status": self.status,
                "objective": self.objective, "margin": self.margin,
                "pivot_min_eig": self.pivot_min_eig, "pruned": self.pruned}


@dataclass
class SynthesisResult:
    mode: Mode
    initial: NetworkedSystem
    system: NetworkedSystem | None
    certificate: BlockMatrix | None
    steps: list
    order: list
    success: bool
    failing: int | None = None
    W: BlockMatrix | None = None
    archive: CertificateArchive | None = None
    trace: ProtocolTrace | None = None
    costs: np.ndarray | None = None
    J_dev: float | None = None
    J_nom: float | None = None
    edges: EdgeDiff | None = None
    verdicts: dict = field(default_factory=dict)
    L: BlockMatrix | None = None

    @property
    def K(self):
        return None if self.system is None else self.system.K

    @property
    def status(self):
        if self.success:
            return "success"
        return "infeasible" if self.failing is not None else "unverified"

    def to_report(self) -> dict:
        cert_norms = None
        if self.certificate is not None:
            cert_norms = [float(np.linalg.norm(self.certificate.block(k, k)))
                          for k in range(self.certificate.nblocks[0])]
        return {
            "mode": self.mode.value,
            "status": self.status,
            "failing_subsystem": None if self.failing is None else self.failing + 1,
            "order": [k + 1 for k in self.order],
            "steps": [s.to_dict() for s in self.steps],
            "J_dev": self.J_dev,
            "J_nom": self.J_nom,
            "certificate_norms": cert_norms,
            "edges": None if self.edges is None else self.edges.to_dict(),
            "verdicts": self.verdicts,
        }


# ---------------------------------------------------------------------------
# Step engine
# ---------------------------------------------------------------------------

_DIRECT, _PRODUCT = "direct", "product"


class _Values:
    """Current numeric blocks, updated as steps complete."""

    def __init__(self, sys: NetworkedSystem):
        n = sys.N
        self.n = n
        self.mats = {}
        for name in ("A", "B", "C", "D", "E", "F"):
            mat = getattr(sys, name)
            self.mats[name] = {(i, j): np.array(mat.block(i, j)) for i in range(n) for j in range(n)}
        self.mats["L"] = {}
        self.X = {}


class _Ctx:
    """Block provider for step ``cur``: numbers for frozen blocks, variables for unknowns.

    ``direct[(name, a, b)]`` is a variable standing for block ``name_ab``;
    ``product[(name, a, b)]`` stands for ``X_a name_ab`` (certificate-first
    modes) or ``name_ab X_b`` (``M`` modes) after the change of variables.
    """

    def __init__(self, values: _Values, cur, x_cur, direct=None, product=None):
        self.v = values
        self.cur = cur
        self.x_cur = x_cur
        self.direct = direct or {}
        self.product = product or {}

    def x(self, a):
        return self.x_cur if a == self.cur else self.v.X[a]

    def blk(self, name, a, b):
        key = (name, a, b)
        if key in self.direct:
            return self.direct[key]
        if name == "L":
            return self.v.mats["L"].get((a, b), None)
        return self.v.mats[name][(a, b)]

    def xm(self, name, a, b):
        """``X_a name_ab``."""
        key = (name, a, b)
        if key in self.product:
            return self.product[key]
        return self.x(a) @ self.blk(name, a, b)

    def mx(self, name, a, b):
        """``name_ab X_b``."""
        key = (name, a, b)
        if key in self.product:
            return self.product[key]
        return self.blk(name, a, b) @ self.x(b)

    def bl(self, a, b):
        """``B_aa L_ab`` (zero when the gain block is absent)."""
        lab = self.blk("L", a, b)
        baa = self.v.mats["B"][(a, a)]
        if lab is None:
            return np.zeros((baa.shape[0], self.v.mats["A"][(b, b)].shape[0]))
        return baa @ lab


def _cell(mode: Mode, ctx: _Ctx, qsr, i, j, decay):
    """Network-matrix cell ``W_ij`` (affine in the step unknowns)."""
    mats = ctx.v.mats
    if mode is Mode.STABILITY:
        w = -ctx.xm("A", i, j) - ctx.xm("A", j, i).T
        if i == j:
            w = w - 2 * decay * ctx.x(i)
        return w
    if mode is Mode.STABILIZABILITY:
        w = -ctx.mx("A", i, j) - ctx.mx("A", j, i).T - ctx.bl(i, j) - ctx.bl(j, i).T
        if i == j:
            w = w - 2 * decay * ctx.x(i)
        return w
    q, s, r = qsr.Q, qsr.S, qsr.R
    if mode is Mode.DISSIPATIVITY:
        ci, cj = ctx.blk("C", i, i), ctx.blk("C", j, j)
        di, dj = ctx.blk("D", i, i), ctx.blk("D", j, j)
        n_i, n_j = mats["A"][(i, i)].shape[0], mats["A"][(j, j)].shape[0]
        p_i, p_j = mats["B"][(i, i)].shape[1], mats["B"][(j, j)].shape[1]
        m_i, m_j = mats["C"][(i, i)].shape[0], mats["C"][(j, j)].shape[0]
        w11 = -ctx.xm("A", i, j) - ctx.xm("A", j, i).T
        if i == j:
            w11 = w11 - 2 * decay * ctx.x(i)
        w12 = -ctx.xm("B", i, j) + ci.T @ s.block(i, j)
        w21 = -ctx.xm("B", j, i).T + s.block(j, i).T @ cj
        w22 = di.T @ s.block(i, j) + s.block(j, i).T @ dj + r.block(i, j)
        if i == j:
            grid = [[w11, w12, ci.T], [w21, w22, di.T], [ci, di, -np.linalg.inv(q.block(i, i))]]
        else:
            grid = [[w11, w12, None], [w21, w22, None], [None, None, None]]
        return _assemble(grid, [n_i, p_i, m_i], [n_j, p_j, m_j])
    # dissipativation: D = 0, disturbance channel w -> y under u = K x
    ci, cj = mats["C"][(i, i)], mats["C"][(j, j)]
    fi, fj = mats["F"][(i, i)], mats["F"][(j, j)]
    n_i, n_j = mats["A"][(i, i)].shape[0], mats["A"][(j, j)].shape[0]
    q_i, q_j = mats["E"][(i, i)].shape[1], mats["E"][(j, j)].shape[1]
    m_i, m_j = ci.shape[0], cj.shape[0]
    w11 = -ctx.mx("A", i, j) - ctx.mx("A", j, i).T - ctx.bl(i, j) - ctx.bl(j, i).T
    if i == j:
        w11 = w11 - 2 * decay * ctx.x(i)
    w12 = -ctx.blk("E", i, j) + ctx.x(i) @ (ci.T @ s.block(i, j))
    w21 = -ctx.blk("E", j, i).T + (s.block(j, i).T @ cj) @ ctx.x(j)
    w22 = fi.T @ s.block(i, j) + s.block(j, i).T @ fj + r.block(i, j)
    if i == j:
        grid = [[w11, w12, ctx.x(i) @ ci.T], [w21, w22, fi.T],
                [ci @ ctx.x(i), fi, -np.linalg.inv(q.block(i, i))]]
    else:
        grid = [[w11, w12, None], [w21, w22, None], [None, None, None]]
    return _assemble(grid, [n_i, q_i, m_i], [n_j, q_j, m_j])


def _assemble(grid, rdims, cdims):
    expr = bmat(grid, rdims, cdims)
    return expr.const if expr.is_constant else expr


def _trace(x, n):
    eye = np.eye(n)
    return sum((eye[k:k + 1, :] @ x @ eye[:, k:k + 1] for k in range(n)), as_expr(np.zeros((1, 1))))


def _numeric(x):
    if isinstance(x, AffineExpr):
        if not x.is_constant:
            raise StructureError("expected a numeric block")
        return x.const
    return np.asarray(x, dtype=float)


def _cell_dims(mode, sys, i):
    if mode is Mode.DISSIPATIVITY:
        return sys.state_dims[i] + sys.input_dims[i] + sys.output_dims[i]
    if mode is Mode.DISSIPATIVATION:
        return sys.state_dims[i] + sys.disturbance_dims[i] + sys.output_dims[i]
    return sys.state_dims[i]


# ---------------------------------------------------------------------------
# Preconditions
# ---------------------------------------------------------------------------

def _stabilizable(a, b, shift):
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real >= -shift:
            m = np.hstack([a - lam * np.eye(n), b.astype(complex)])
            if np.linalg.matrix_rank(m, tol=1e-9 * max(1.0, np.linalg.norm(m))) < n:
                return False
    return True


def _check_preconditions(mode, sys: NetworkedSystem, qsr, options):
    n = sys.N
    if mode.uses_m and not sys.B.is_block_diagonal():
        raise SpecError("B must be block diagonal for feedback synthesis")
    if mode is Mode.DISSIPATIVITY:
        if not sys.C.is_block_diagonal() or not sys.D.is_block_diagonal():
            raise SpecError("C and D must be block diagonal for dissipativity synthesis")
    if mode is Mode.DISSIPATIVATION:
        if not sys.C.is_block_diagonal() or not sys.F.is_block_diagonal():
            raise SpecError("C and F must be block diagonal for dissipativation synthesis")
        if np.any(sys.D.data):
            raise SpecError("dissipativation synthesis requires D = 0")
    if mode.dissipative:
        if qsr is None:
            raise SpecError(f"{mode.value} synthesis needs a supply rate")
        inputs = sys.input_dims if mode is Mode.DISSIPATIVITY else sys.disturbance_dims
        qsr.validate(sys.output_dims, inputs)
    if not options.screen:
        return
    for i in range(n):
        a = sys.A.block(i, i)
        if mode.uses_m:
            if not _stabilizable(a, sys.B.block(i, i), options.decay):
                raise DiagnosticError(
                    f"(A_{i + 1}{i + 1}, B_{i + 1}{i + 1}) is not stabilizable; no local "
                    "certificate M_ii can exist", i)
        else:
            verdict = eigen_stability_oracle(a)
            if verdict.max_re >= -options.decay:
                raise DiagnosticError(
                    f"A_{i + 1}{i + 1} is not Hurwitz (max Re lambda = {verdict.max_re:.4g}); a "
                    "block-diagonal certificate needs -A_ii^T P_ii - P_ii A_ii > 0", i)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

class _Designer:
    def __init__(self, mode, sys, spec, qsr, cmat, options):
        self.mode, self.sys, self.spec, self.qsr = mode, sys, spec, qsr
        self.cmat = cmat
        self.opt = options
        self.values = _Values(sys)
        self.neighbors = neighbor_sets(sys.in_neighbors)
        self.archive = CertificateArchive()
        self.rows = {}
        self.beta = 1.0 if options.beta is None else options.beta

    # -- which blocks are unknown at step i -------------------------------
    def _pair_cost(self, a, b):
        return self.spec.pair_cost(a, b, self.cmat)

    def _variable_pairs(self, name, i, earlier):
        """(in_pairs, out_pairs) designable at step ``i`` for matrix ``name``."""
        if name == "A":
            test = self.spec.is_variable
        elif name == "B":
            test = lambda a, b: (a, b) in self.spec.input_pairs  # noqa: E731
        else:
            test = lambda a, b: (a, b) in self.spec.disturbance_pairs  # noqa: E731
        ins = [(i, j) for j in earlier if test(i, j)]
        outs = [(j, i) for j in earlier if test(j, i)]
        return ins, outs

    def _reference(self, name, a, b):
        if name == "A":
            return self.spec.reference_block(self.sys.A, a, b)
        return np.array(getattr(self.sys, name).block(a, b))

    def _weight(self, name, a, b):
        if name == "A":
            return self._pair_cost(a, b)
        return float(self.cmat[a, b])

    def _gain_allowed(self, a, b):
        return a == b or b in self.sys.in_neighbors[a]

    # -- one step ---------------------------------------------------------
    def step(self, s, i, earlier):
        mode, sys, opt = self.mode, self.sys, self.opt
        prob = LmiProblem(f"{mode.value}-step-{s + 1}")
        ni = sys.state_dims[i]
        x_var = prob.symmetric(f"X{i}", ni)
        if mode.dissipative:
            prob.add_psd(x_var, margin=opt.margin, label="certificate")
        else:
            # homogeneous in (X, L): fix the scale and bound the conditioning
            prob.add_psd(x_var - np.eye(ni), label="certificate")
            prob.add_psd(opt.cert_bound * np.eye(ni) - x_var, label="certificate-bound")
        direct, product = {}, {}
        terms = []  # (weight, expr)

        names = ["A"]
        if mode is Mode.DISSIPATIVITY:
            names.append("B")
        if mode is Mode.DISSIPATIVATION:
            names.append("E")
        for name in names:
            ins, outs = self._variable_pairs(name, i, earlier)
            mat = getattr(sys, name)
            for a, b in ins:  # block a=i <- b=j
                shape = mat.block(a, b).shape
                if 0 in shape:
                    continue
                ref = self._reference(name, a, b)
                w = self._weight(name, a, b)
                if mode.uses_m:
                    v = prob.variable(f"{name}{a}_{b}", shape)
                    direct[(name, a, b)] = v
                    terms.append((self.beta * w, v - ref))
                else:
                    v = prob.variable(f"X{name}{a}_{b}", shape)
                    product[(name, a, b)] = v
                    terms.append((w, v - x_var @ ref))
            for a, b in outs:  # block a=j <- b=i
                shape = mat.block(a, b).shape
                if 0 in shape:
                    continue
                ref = self._reference(name, a, b)
                w = self._weight(name, a, b)
                if mode.uses_m and name == "A":
                    v = prob.variable(f"{name}{a}_{b}X", shape)
                    product[(name, a, b)] = v
                    terms.append((w, v - ref @ x_var))
                else:
                    v = prob.variable(f"{name}{a}_{b}", shape)
                    direct[(name, a, b)] = v
                    terms.append((self.beta * w, v - ref))

        if mode.uses_m:
            gain_pairs = [(i, i)] + [(i, j) for j in earlier] + [(j, i) for j in earlier]
            for a, b in gain_pairs:
                shape = (sys.input_dims[a], sys.state_dims[b])
                if 0 in shape:
                    continue
                allowed = self._gain_allowed(a, b)
                if not allowed and self.opt.feedback == "neighbors":
                    continue
                v = prob.variable(f"L{a}_{b}", shape)
                direct[("L", a, b)] = v
                if not allowed:
                    terms.append((float(self.cmat[a, b]), as_expr(v)))

        if mode is Mode.DISSIPATIVITY:
            for name, flags in (("C", self.spec.intrinsic_C), ("D", self.spec.intrinsic_D)):
                if i in flags:
                    ref = np.array(getattr(sys, name).block(i, i))
                    if ref.size == 0:
                        continue
                    v = prob.variable(f"{name}{i}_{i}", ref.shape)
                    direct[(name, i, i)] = v
                    terms.append((self.beta * self.spec.intrinsic_cost, v - ref))

        ctx = _Ctx(self.values, i, x_var, direct, product)
        w_ii = _cell(mode, ctx, self.qsr, i, i, opt.decay)
        w_i = [_cell(mode, ctx, self.qsr, i, j, opt.decay) for j in earlier]
        con = schur_linearized_constraint(w_ii, w_i, self.archive, i=len(earlier))
        prob.add_psd(con, margin=self._step_margin(), label="step")
        top = max((w for w, _ in terms), default=0.0)
        for w, e in terms:
            prob.add_norm(w / top, e)
        if opt.regularization:
            # a light pull toward small certificates keeps later steps well scaled;
            # where the gain is K = L X^{-1} the pull goes on L instead
            if mode is Mode.DISSIPATIVATION:
                for (name, _, _), v in direct.items():
                    if name == "L":
                        prob.add_norm(opt.regularization, as_expr(v))
            else:
                prob.add_linear(opt.regularization / ni, _trace(x_var, ni))

        sol = solve(prob, opt.solver_options())
        if sol.status is Status.INFEASIBLE:
            return StepRecord(s, i, sol.status.value), None, None
        snapshot = self._snapshot()
        objective = float(sum(w * np.linalg.norm(as_expr(e).realize(sol.values)) for w, e in terms))

        designed = self._recover(i, sol, direct, product, x_var)
        pruned = self._prune(designed)
        row, margin = self._numeric_row(i, earlier)
        if pruned and margin < opt.margin / 2:
            self._restore(designed)
            pruned = 0
            row, margin = self._numeric_row(i, earlier)
        if margin < opt.margin / 2:
            # an inaccurate solve whose point does not verify counts as a failure
            self._rollback(snapshot)
            return StepRecord(s, i, sol.status.value, objective, margin), None, None
        res = decompose_step(row, self.archive, label=i)
        rec = StepRecord(s, i, sol.status.value if res.verdict else "numerical", objective,
                         margin, res.min_eig, pruned)
        self.rows[i] = row
        self.beta = float(np.linalg.norm(self.values.X[i])) if opt.beta is None else opt.beta
        aux = {"X": self.values.X[i]}
        for (name, a, b), val in sorted(designed.items()):
            aux[f"{name}[{a + 1},{b + 1}]"] = val[1]
        return rec, (res if res.verdict else None), aux

    def _recover(self, i, sol, direct, product, x_var):
        """Store solved values; returns ``{(name, a, b): (old, new)}`` for designed blocks."""
        vals = self.values
        xi = sol[x_var]
        vals.X[i] = xi
        designed = {}
        for (name, a, b), v in product.items():
            val = sol[v]
            if self.mode.uses_m:
                new = np.linalg.solve(xi.T, val.T).T  # A_ab = (A_ab X_b) X_b^{-1}
            else:
                new = np.linalg.solve(xi, val)        # A_ab = X_a^{-1} (X_a A_ab)
            designed[(name, a, b)] = (vals.mats[name][(a, b)], new)
            vals.mats[name][(a, b)] = new
        for (name, a, b), v in direct.items():
            new = sol[v]
            if name == "L":
                vals.mats["L"][(a, b)] = new
                if not self._gain_allowed(a, b):
                    designed[(name, a, b)] = (None, new)
                continue
            designed[(name, a, b)] = (vals.mats[name][(a, b)], new)
            vals.mats[name][(a, b)] = new
        return designed

    def _step_margin(self):
        # the frozen block is part of the constraint: never ask more of it than it has
        target = self.opt.step_floor
        if target is None:
            target = self.opt.margin if self.mode.dissipative else HOMOGENEOUS_FLOOR
        if len(self.archive) == 0:
            return target
        lead = min_eigenvalue(self.archive.leading_block())
        return min(target, lead * (1 - 1e-6))

    def _snapshot(self):
        return ({name: dict(blocks) for name, blocks in self.values.mats.items()},
                dict(self.values.X))

    def _rollback(self, snap):
        self.values.mats, self.values.X = snap

    def _prune(self, designed):
        count = 0
        for (name, a, b), (_, new) in designed.items():
            if a != b and 0 < np.linalg.norm(new) <= self.opt.prune_tol:
                self.values.mats[name][(a, b)] = np.zeros_like(new)
                count += 1
        return count

    def _restore(self, designed):
        for (name, a, b), (_, new) in designed.items():
            self.values.mats[name][(a, b)] = new

    def _numeric_row(self, i, earlier):
        ctx = _Ctx(self.values, i, self.values.X[i])
        w_ii = _numeric(_cell(self.mode, ctx, self.qsr, i, i, self.opt.decay))
        w_i = [_numeric(_cell(self.mode, ctx, self.qsr, i, j, self.opt.decay)) for j in earlier]
        con = schur_linearized_constraint(w_ii, w_i, self.archive).const
        return [*w_i, w_ii], min_eigenvalue(0.5 * (con + con.T))

    # -- assembly ---------------------------------------------------------
    def assemble(self, order):
        sys, vals, n = self.sys, self.values, self.sys.N
        mats = {name: BlockMatrix.from_blocks(vals.mats[name], getattr(sys, name).row_dims,
                                              getattr(sys, name).col_dims)
                for name in ("A", "B", "C", "D", "E", "F")}
        k = sys.K
        lmat = None
        if self.mode.uses_m:
            l_blocks = {key: v for key, v in vals.mats["L"].items() if v is not None}
            lmat = BlockMatrix.from_blocks(l_blocks, sys.input_dims, sys.state_dims)
            k_blocks = {(a, b): np.linalg.solve(vals.X[b].T, v.T).T for (a, b), v in l_blocks.items()}
            k = BlockMatrix.from_blocks(k_blocks, sys.input_dims, sys.state_dims)
        new_sys = sys.with_matrices(**mats, K=k)
        cert = BlockMatrix.block_diag([vals.X[a] for a in range(n)])
        dims = [_cell_dims(self.mode, sys, a) for a in range(n)]
        pos = {lab: s for s, lab in enumerate(order)}
        blocks = {}
        for i, row in self.rows.items():
            earlier = order[:pos[i]]
            for j, blk in zip(earlier, row[:-1]):
                blocks[(i, j)] = blk
                blocks[(j, i)] = blk.T
            blocks[(i, i)] = row[-1]
        w = BlockMatrix.from_blocks(blocks, dims)
        return new_sys, cert, w, lmat


def _verify(mode, result: SynthesisResult, qsr, options):
    sys, cert = result.system, result.certificate
    x = cert.data
    v = {}
    if mode is Mode.STABILITY:
        a = sys.A.data
        v["certificate_margin"] = min_eigenvalue(-a.T @ x - x @ a)
        oracle = eigen_stability_oracle(a)
    elif mode is Mode.STABILIZABILITY:
        acl = sys.closed_loop_A().data
        v["certificate_margin"] = min_eigenvalue(-acl @ x - x @ acl.T)
        oracle = eigen_stability_oracle(acl)
        if result.L is not None:
            v["gain_residual"] = float(np.linalg.norm(result.L.data - sys.K.data @ x))
    elif mode is Mode.DISSIPATIVITY:
        psi = dissipativity_matrix(sys.A, sys.B, sys.C, sys.D, qsr, x)
        v["certificate_margin"] = min_eigenvalue(psi)
        oracle = eigen_stability_oracle(sys.A)
    else:
        acl = sys.closed_loop_A().data
        c, e, f = sys.C.data, sys.E.data, sys.F.data
        q, s, r = qsr.Q.data, qsr.S.data, qsr.R.data
        psi_m = np.block([
            [-acl @ x - x @ acl.T, -e + x @ c.T @ s, x @ c.T],
            [-e.T + s.T @ c @ x, f.T @ s + s.T @ f + r, f.T],
            [c @ x, f, -np.linalg.inv(q)],
        ])
        v["certificate_margin"] = min_eigenvalue(psi_m)
        oracle = eigen_stability_oracle(acl)
    v["max_re"] = oracle.max_re
    v["hurwitz"] = bool(oracle.max_re < -1e-6)
    ok = v["certificate_margin"] >= options.margin / 2 and v["hurwitz"]
    if mode.dissipative:
        if mode is Mode.DISSIPATIVITY:
            a, b, c, d = sys.A, sys.B, sys.C, sys.D
            p = x
        else:
            a, b, c, d = sys.closed_loop_A(), sys.E, sys.C, sys.F
            p = np.linalg.inv(x)
            p = 0.5 * (p + p.T)
        v["lemma_margin"] = min_eigenvalue(dissipativity_matrix(a, b, c, d, qsr, p))
        check = check_dissipativity_centralized(a, b, c, d, qsr, strict=False,
                                                options=options.solver_options())
        v["centralized_feasible"] = bool(check.feasible)
        ok = ok and check.feasible
        if options.simulate:
            try:
                sim = simulate_dissipation(a, b, c, d, qsr, p, trials=options.sim_trials,
                                           seed=options.sim_seed)
                v["simulation_violation"] = sim.max_violation
                ok = ok and sim.max_violation <= 1e-6
            except SimulationError as exc:
                v["simulation_violation"] = None
                v["simulation_error"] = str(exc)
                ok = False
    v = {key: (float(val) if isinstance(val, (np.floating, float)) else val) for key, val in v.items()}
    return ok, v


def synthesize(mode: Mode, sys: NetworkedSystem, spec: DesignSpec | None = None, qsr=None,
               costs=None, options: SynthesisOptions | None = None,
               raise_on_infeasible=True) -> SynthesisResult:
    """Run the sequential synthesis in ``mode``.

    ``costs`` overrides the spec's cost model (a :class:`CostModel` or an
    ``N x N`` array).  Infeasibility at a step raises :class:`StepInfeasible`
    carrying the partial result, unless ``raise_on_infeasible`` is false.
    """
    options = options or SynthesisOptions()
    spec = spec or DesignSpec()
    spec.check(sys)
    _check_preconditions(mode, sys, qsr, options)
    if costs is None:
        costs = spec.costs
    cmat = cost_matrix(costs, sys.in_neighbors) if isinstance(costs, CostModel) \
        else np.asarray(costs, dtype=float)
    if cmat.shape != (sys.N, sys.N):
        raise ConfigError(f"cost matrix must be {sys.N} x {sys.N}")
    order = list(range(sys.N)) if options.order is None else [int(k) for k in options.order]
    if sorted(order) != list(range(sys.N)):
        raise ConfigError("order must be a permutation of the subsystems")

    designer = _Designer(mode, sys, spec, qsr, cmat, options)
    trace = ProtocolTrace(meta={"mode": mode.value, "order": [k + 1 for k in order]})
    steps = []
    for s, i in enumerate(order):
        rec, res, aux = designer.step(s, i, order[:s])
        steps.append(rec)
        if res is None:
            log.info("step %d (subsystem %d): %s", s + 1, i + 1, rec.status)
            partial = SynthesisResult(mode, sys, None, None, steps, order, False, failing=i,
                                      archive=designer.archive, trace=trace, costs=cmat)
            if raise_on_infeasible:
                raise StepInfeasible(i, s, rec.status, partial)
            return partial
        trace.messages.append(message_for(res, order, designer.neighbors, aux))

    new_sys, cert, w, lmat = designer.assemble(order)
    result = SynthesisResult(mode, sys, new_sys, cert, steps, order, False, W=w,
                             archive=designer.archive, trace=trace, costs=cmat, L=lmat)
    result.J_dev, result.J_nom = deviation_and_nominal_cost(sys, new_sys, cmat)
    result.edges = edge_diff(sys, new_sys, options.prune_tol)
    ok, verdicts = _verify(mode, result, qsr, options)
    verdicts["assembled_margin"] = float(min_eigenvalue(w))
    result.verdicts = verdicts
    result.success = bool(ok)
    return result


def synthesize_stability(sys, spec=None, costs=None, options=None, **kw):
    return synthesize(Mode.STABILITY, sys, spec, None, costs, options, **kw)


def synthesize_stabilizability(sys, spec=None, costs=None, options=None, **kw):
    return synthesize(Mode.STABILIZABILITY, sys, spec, None, costs, options, **kw)


def synthesize_dissipativity(sys, spec=None, qsr=None, costs=None, options=None, **kw):
    return synthesize(Mode.DISSIPATIVITY, sys, spec, qsr, costs, options, **kw)


def synthesize_dissipativation(sys, spec=None, qsr=None, costs=None, options=None, **kw):
    return synthesize(Mode.DISSIPATIVATION, sys, spec, qsr, costs, options, **kw)


def local_objective(mode: Mode, sys, spec, i, earlier, cmat, beta=1.0):
    """Weighted norm terms of step ``i`` as ``[(weight, description)]`` (for inspection)."""
    designer = _Designer(mode, sys, spec, None, cmat, SynthesisOptions(screen=False))
    designer.beta = beta
    out = []
    for name in ["A"] + (["B"] if mode is Mode.DISSIPATIVITY else []) + \
            (["E"] if mode is Mode.DISSIPATIVATION else []):
        ins, outs = designer._variable_pairs(name, i, earlier)
        for a, b in ins:
            w = designer._weight(name, a, b)
            out.append(((designer.beta * w) if mode.uses_m else w, f"{name}[{a + 1},{b + 1}]"))
        for a, b in outs:
            w = designer._weight(name, a, b)
            scaled = mode.uses_m and name == "A"
            out.append((w if scaled else designer.beta * w, f"{name}[{a + 1},{b + 1}]"))
    return out
