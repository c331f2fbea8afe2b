"""Dissipativity-based centralized topology baseline and method comparison.

Each subsystem is wrapped as ``dx_i = A_ii x_i + u_i, y_i = x_i + eps u_i``
and summarized by passivity indices ``(nu_i, rho_i)``, i.e. it is
``(Q_i, S_i, R_i) = (-rho_i I, I/2, -nu_i I)``-dissipative.  The couplings
become a static interconnection ``u = M y`` with ``M_ij = A_ij`` off the
diagonal.  With weights ``p_i`` and ``L = R_p M`` the network is stable if

    [[-R_p, L], [L^T, -(L^T X + X L + Q_p)]] >= eps I,
    R_p = diag(-p_i nu_i I), Q_p = diag(-p_i rho_i I), X = diag(-I / (2 nu_i)).

The Schur complement of that matrix is
``-(Q_p + S_p M + M^T S_p^T + M^T R_p M)``, the standard network
dissipativity condition.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (Precision, PassivityIndices, check_dissipativity_centralized,
                       check_passivity_indices, eigen_stability_oracle,
                       estimate_passivity_indices)
from .blockmat import BlockMatrix
from .errors import NetsynError, PreconditionError, SpecError, VerificationError
from .lmi import LmiProblem, SolveOptions, Status, as_expr, bmat, scaled_identity, solve
from .synthesis import SynthesisOptions, synthesize_stability
from .sysmodel import (CostModel, DesignSpec, NetworkedSystem, QsrSpec, cost_matrix,
                       deviation_and_nominal_cost, edge_diff, to_dot)

log = logging.getLogger(__name__)

DEFAULT_EPS = 0.01


@dataclass
class DitsInstance:
    system: NetworkedSystem
    eps: float
    indices: list
    reference: BlockMatrix
    costs: np.ndarray
    certified: list = field(default_factory=list)

    @property
    def N(self):
        return self.system.N

    @property
    def dims(self):
        return self.system.state_dims

    @property
    def nu(self):
        return np.array([ix.nu for ix in self.indices])

    @property
    def rho(self):
        return np.array([ix.rho for ix in self.indices])


def index_supply(ix: PassivityIndices, n) -> QsrSpec:
    eye = np.eye(n)
    return QsrSpec(BlockMatrix(-ix.rho * eye, [n]), BlockMatrix(0.5 * eye, [n], [n]),
                   BlockMatrix(-ix.nu * eye, [n]))


def wrap_subsystems(sys: NetworkedSystem, eps=DEFAULT_EPS, mode=Precision.STRONG, spec=None,
                    costs=None, indices=None, weak_factor=0.5, options=None) -> DitsInstance:
    """Wrap every subsystem and attach indices, reference couplings and costs.

    ``indices`` may supply precomputed :class:`PassivityIndices`; otherwise
    they are estimated.  Each index pair is checked against its wrapped
    subsystem with a centralized dissipativity LMI (``certified``).
    """
    n = sys.N
    if any(d == 0 for d in sys.state_dims):
        raise SpecError("every subsystem needs a nonempty state")
    if indices is not None and len(indices) != n:
        raise SpecError(f"expected {n} index pairs, got {len(indices)}")
    spec = spec or DesignSpec()
    if indices is None:
        indices = [estimate_passivity_indices(sys.A.block(i, i), eps, mode, weak_factor,
                                              options=options) for i in range(n)]
    certified = []
    for i, ix in enumerate(indices):
        d = sys.state_dims[i]
        eye = np.eye(d)
        if ix.rho > 0:
            cert = check_dissipativity_centralized(sys.A.block(i, i), eye, eye, eps * eye,
                                                   index_supply(ix, d), options=options)
        else:  # Q = -rho I is not negative definite, so use the direct inequality
            cert = check_passivity_indices(sys.A.block(i, i), eps, ix, options)
        certified.append(bool(cert.feasible))
    ref = {}
    for i in range(n):
        for j in range(n):
            if i != j:
                ref[(i, j)] = spec.reference_block(sys.A, i, j) if spec.is_variable(i, j) \
                    else np.array(sys.A.block(i, j))
    reference = BlockMatrix.from_blocks(ref, sys.state_dims)
    costs = spec.costs if costs is None else costs
    cmat = cost_matrix(costs, sys.in_neighbors) if isinstance(costs, CostModel) \
        else np.asarray(costs, dtype=float)
    cmat = np.array([[spec.pair_cost(i, j, cmat) if spec.is_variable(i, j) else cmat[i, j]
                      for j in range(n)] for i in range(n)])
    return DitsInstance(sys, float(eps), list(indices), reference, cmat, certified)


@dataclass
class DitsResult:
    M: BlockMatrix
    p: np.ndarray
    L: BlockMatrix
    system: NetworkedSystem
    status: str
    verdicts: dict
    objective: float
    solver_status: str = "optimal"

    def to_dict(self):
        return {"status": self.status, "solver_status": self.solver_status,
                "p": [float(v) for v in self.p], "objective": self.objective,
                "verdicts": self.verdicts}


def network_condition(instance: DitsInstance, m, p):
    """``Q_p + S_p M + M^T S_p^T + M^T R_p M`` (negative definite when certified)."""
    dims = instance.dims
    m = m.data if isinstance(m, BlockMatrix) else np.asarray(m)
    rep = lambda v: np.concatenate([np.full(d, x) for d, x in zip(dims, v)])  # noqa: E731
    q_p = np.diag(rep(-p * instance.rho))
    s_p = np.diag(rep(0.5 * p))
    r_p = np.diag(rep(-p * instance.nu))
    return q_p + s_p @ m + m.T @ s_p.T + m.T @ r_p @ m


def synthesize_dits(instance: DitsInstance, costs=None, margin=1e-6,
                    options: SolveOptions | None = None) -> DitsResult:
    """Centralized synthesis of ``M``; raises on infeasibility or failed verification."""
    n, dims = instance.N, instance.dims
    nu, rho = instance.nu, instance.rho
    bad = [i for i in range(n) if not nu[i] > 0]
    if bad:
        raise PreconditionError(
            "input passivity index must be positive for subsystems "
            + ", ".join(str(i + 1) for i in bad)
            + "; increase the feedthrough regularization")
    cmat = instance.costs if costs is None else np.asarray(costs, dtype=float)
    cmat = cmat / max(float(np.max(cmat, initial=0.0)), 1e-300)  # same optimum, better scaling

    prob = LmiProblem("dits")
    p = [prob.scalar(f"p{i}") for i in range(n)]
    for pi in p:
        prob.add_psd(pi - 1.0)
    lgrid, obj = [], []
    for i in range(n):
        lrow, orow = [], []
        for j in range(n):
            if i == j:
                lrow.append(None)
                orow.append(None)
                continue
            v = prob.variable(f"L{i}_{j}", (dims[i], dims[j]))
            lrow.append(v)
            # L_ij - p_i R_i Abar_ij with R_i = -nu_i I
            target = scaled_identity(p[i], dims[i]) @ (-nu[i] * instance.reference.block(i, j))
            orow.append(cmat[i, j] * (v - target))
        lgrid.append(lrow)
        obj.append(orow)
    lexpr = bmat(lgrid, dims, dims)
    blocks_rp = [[scaled_identity(p[i], dims[i]) * float(nu[i]) if i == j else None
                  for j in range(n)] for i in range(n)]
    neg_rp = bmat(blocks_rp, dims, dims)
    blocks_qp = [[scaled_identity(p[i], dims[i]) * float(rho[i]) if i == j else None
                  for j in range(n)] for i in range(n)]
    neg_qp = bmat(blocks_qp, dims, dims)
    xmat = np.diag(np.concatenate([np.full(d, -0.5 / nu[i]) for i, d in enumerate(dims)]))
    lower = -(lexpr.T @ xmat) - xmat @ lexpr + neg_qp
    tot = sum(dims)
    prob.add_psd(bmat([[neg_rp, lexpr], [lexpr.T, lower]], [tot, tot], [tot, tot]),
                 margin=margin, label="network")
    if n > 1:
        prob.add_norm(1.0, bmat(obj, dims, dims))
    sol = solve(prob, options or SolveOptions(margin=margin))
    if sol.status is Status.INFEASIBLE:
        return _failed(instance, sol.status.value)
    # an inaccurate point is still judged by the post-hoc checks below

    p_val = np.array([sol[pi][0, 0] for pi in p])
    l_val = as_expr(lexpr).realize(sol.values)
    rp_inv = np.diag(np.concatenate([np.full(d, -1.0 / (p_val[i] * nu[i]))
                                     for i, d in enumerate(dims)]))
    m_val = rp_inv @ l_val
    m_bm = BlockMatrix(m_val, dims)
    spectral = float(np.max(np.linalg.eigvalsh(network_condition(instance, m_bm, p_val))))
    a_new = BlockMatrix.block_diag([instance.system.A.block(i, i) for i in range(n)]).data + m_val
    oracle = eigen_stability_oracle(a_new)
    verdicts = {"spectral_max": spectral, "spectral_ok": bool(spectral <= -margin / 2),
                "max_re": float(oracle.max_re), "hurwitz": bool(oracle.max_re < -1e-6),
                "indices_certified": bool(all(instance.certified))}
    new_sys = instance.system.with_matrices(A=BlockMatrix(a_new, dims))
    res = DitsResult(m_bm, p_val, BlockMatrix(l_val, dims), new_sys, "success", verdicts,
                     float(sol.objective), sol.status.value)
    if not (verdicts["spectral_ok"] and verdicts["hurwitz"]):
        res.status = "unverified"
        err = VerificationError(
            f"post-hoc verification failed (spectral max {spectral:.3g}, "
            f"max Re lambda {oracle.max_re:.3g})")
        err.result = res
        raise err
    return res


def _failed(instance, status):
    err = NetsynError(f"network LMI is {status}")
    err.status = status
    raise err


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

METHODS = ("dets", "dits-weak", "dits-strong")
COST_KINDS = {"fixed": CostModel.fixed, "distance": CostModel.distance}


def _run_method(method, sys, spec, costs, eps, options):
    if method == "dets":
        res = synthesize_stability(sys, spec, costs, options or SynthesisOptions(),
                                   raise_on_infeasible=False)
        if not res.success:
            return {"status": res.status, "failing_subsystem":
                    None if res.failing is None else res.failing + 1}, None
        return {"status": "success", "max_re": res.verdicts["max_re"]}, res.system
    mode = Precision.WEAK if method == "dits-weak" else Precision.STRONG
    inst = wrap_subsystems(sys, eps, mode, spec, costs)
    try:
        res = synthesize_dits(inst)
    except PreconditionError as exc:
        return {"status": "precondition", "detail": str(exc)}, None
    except VerificationError as exc:
        return {"status": "unverified", "detail": str(exc)}, None
    except NetsynError as exc:
        return {"status": getattr(exc, "status", "error"), "detail": str(exc)}, None
    return {"status": "success", "max_re": res.verdicts["max_re"],
            "spectral_max": res.verdicts["spectral_max"],
            "indices": [[ix.nu, ix.rho] for ix in inst.indices]}, res.system


def compare_methods(sys: NetworkedSystem, spec: DesignSpec | None = None, methods=METHODS,
                    cost_kinds=("fixed", "distance"), eps=DEFAULT_EPS, out_dir=None,
                    options: SynthesisOptions | None = None) -> dict:
    """Run every method under every cost model; optionally write report, DOT and CSV files."""
    spec = spec or DesignSpec()
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise SpecError(f"unknown methods: {sorted(unknown)}")
    rows = []
    dots = {}
    for kind in cost_kinds:
        model = COST_KINDS[kind]() if isinstance(kind, str) else kind
        label = kind if isinstance(kind, str) else model.kind.value
        cmat = cost_matrix(model, sys.in_neighbors)
        for method in methods:
            log.info("compare: %s with %s costs", method, label)
            row, new_sys = _run_method(method, sys, spec, model, eps, options)
            row = {"method": method, "costs": label, **row}
            if new_sys is not None:
                j_dev, j_nom = deviation_and_nominal_cost(sys, new_sys, cmat)
                diff = edge_diff(sys, new_sys)
                row.update(J_dev=j_dev, J_nom=j_nom, edges=diff.to_dict())
                dots[f"{method}_{label}"] = to_dot(new_sys, diff, f"{method} ({label})",
                                                   (j_dev, j_nom))
            rows.append(row)
    report = {"N": sys.N, "eps": eps, "rows": rows}
    if out_dir is not None:
        write_comparison(report, dots, out_dir)
    report["dot"] = dots
    return report


def write_comparison(report, dots, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    for name, text in dots.items():
        (out / f"{name}.dot").write_text(text)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "costs", "status", "J_dev", "J_nom", "max_re"])
        for r in report["rows"]:
            w.writerow([r["method"], r["costs"], r["status"], r.get("J_dev", ""),
                        r.get("J_nom", ""), r.get("max_re", "")])
