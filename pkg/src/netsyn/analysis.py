"""Centralized stability and (Q,S,R)-dissipativity certificates, and their oracles.

The LMI answers here are never trusted alone: every certificate can be
re-checked with :func:`certificate_margin` (dense eigenvalues) and, for
dissipativity, with :func:`simulate_dissipation` (trajectories).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .blockmat import BlockMatrix, min_eigenvalue
from .errors import ConfigError, SimulationError, SpecError, StructureError
from .lmi import (DEFAULT_MARGIN, LmiProblem, SolveOptions, Status, bmat, scaled_identity,
                  solve)
from .sysmodel import QsrSpec

FEASIBILITY_TOL = 1e-7


def _dense(m):
    return m.data if isinstance(m, BlockMatrix) else np.atleast_2d(np.asarray(m, dtype=float))


# ---------------------------------------------------------------------------
# Eigenvalue oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenVerdict:
    max_re: float
    hurwitz: bool


def eigen_stability_oracle(a, tol=1e-12) -> EigenVerdict:
    """Dense eigenvalues; Hurwitz iff ``max Re(lambda) < -tol``."""
    a = _dense(a)
    if a.shape[0] != a.shape[1]:
        raise StructureError("stability oracle needs a square matrix")
    if a.size == 0:
        return EigenVerdict(-np.inf, True)
    m = float(np.max(np.linalg.eigvals(a).real))
    return EigenVerdict(m, m < -tol)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    feasible: bool
    P: np.ndarray | None
    margin: float
    strict: bool
    status: Status = Status.OPTIMAL


def stability_matrix(a, p):
    a, p = _dense(a), _dense(p)
    return -a.T @ p - p @ a


def check_stability_centralized(a, strict=True, margin=DEFAULT_MARGIN, options=None) -> Certificate:
    """Search ``P >= I`` maximizing ``t <= 1`` with ``-A^T P - P A >= t I``.

    The normalization ``P >= I`` is harmless (the inequality is homogeneous
    in ``P``).  Strict feasibility means ``t >= margin``; non-strict means
    ``t >= -tol``.
    """
    a = _dense(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise StructureError("A must be square")
    prob = LmiProblem("stability")
    p = prob.symmetric("P", n)
    t = prob.scalar("t")
    prob.add_psd(p - np.eye(n))
    prob.add_psd(-(a.T @ p) - p @ a - scaled_identity(t, n))
    prob.add_psd(1.0 - t)
    prob.add_linear(-1.0, t)
    sol = solve(prob, options or SolveOptions(margin=margin))
    if sol.status is Status.INFEASIBLE:
        return Certificate(False, None, -np.inf, strict, sol.status)
    pv = sol["P"]
    achieved = min_eigenvalue(stability_matrix(a, pv))
    ok = achieved >= margin if strict else achieved >= -FEASIBILITY_TOL
    return Certificate(bool(ok), pv, achieved, strict, sol.status)


# ---------------------------------------------------------------------------
# Dissipativity
# ---------------------------------------------------------------------------

def _qsr_dense(qsr: QsrSpec):
    return qsr.Q.data, qsr.S.data, qsr.R.data


def _check_qsr(qsr: QsrSpec, m, p):
    q, s, r = _qsr_dense(qsr)
    if q.shape != (m, m) or s.shape != (m, p) or r.shape != (p, p):
        raise SpecError(f"supply rate has shapes Q{q.shape} S{s.shape} R{r.shape}, "
                        f"system needs Q({m},{m}) S({m},{p}) R({p},{p})")
    if np.max(np.abs(q - q.T), initial=0.0) > 1e-9 or np.max(np.abs(r - r.T), initial=0.0) > 1e-9:
        raise SpecError("Q and R must be symmetric")
    if m and np.linalg.eigvalsh(-q)[0] <= 0:
        raise SpecError("-Q must be positive definite")


def dissipativity_matrix(a, b, c, d, qsr: QsrSpec, p):
    """The 3x3 block matrix whose positive semidefiniteness certifies dissipativity."""
    a, b, c, d, p = (_dense(x) for x in (a, b, c, d, p))
    q, s, r = _qsr_dense(qsr)
    return np.block([
        [-a.T @ p - p @ a, -p @ b + c.T @ s, c.T],
        [-b.T @ p + s.T @ c, d.T @ s + s.T @ d + r, d.T],
        [c, d, -np.linalg.inv(q)],
    ])


def check_dissipativity_centralized(a, b, c, d, qsr: QsrSpec, strict=False,
                                    margin=DEFAULT_MARGIN, options=None) -> Certificate:
    """Search ``P >= margin I`` maximizing ``t <= 1`` with the 3x3 LMI ``>= t I``.

    Non-strict feasibility (``t >= -tol``) matches the ``>= 0`` of the
    dissipativity lemma; ``strict=True`` requires ``t >= margin``.
    """
    a, b, c, d = (_dense(x) for x in (a, b, c, d))
    n, pdim, m = a.shape[0], b.shape[1], c.shape[0]
    if b.shape[0] != n or c.shape[1] != n or d.shape != (m, pdim):
        raise StructureError("inconsistent A, B, C, D shapes")
    _check_qsr(qsr, m, pdim)
    q, s, r = _qsr_dense(qsr)
    prob = LmiProblem("dissipativity")
    pv = prob.symmetric("P", n)
    t = prob.scalar("t")
    lmi = bmat([
        [-(a.T @ pv) - pv @ a, -(pv @ b) + c.T @ s, c.T],
        [-(b.T @ pv) + s.T @ c, d.T @ s + s.T @ d + r, d.T],
        [c, d, -np.linalg.inv(q)],
    ], [n, pdim, m], [n, pdim, m])
    prob.add_psd(pv, margin=margin)
    prob.add_psd(lmi - scaled_identity(t, n + pdim + m))
    prob.add_psd(1.0 - t)
    prob.add_linear(-1.0, t)
    sol = solve(prob, options or SolveOptions(margin=margin))
    if sol.status is Status.INFEASIBLE:
        return Certificate(False, None, -np.inf, strict, sol.status)
    p_val = sol["P"]
    achieved = min_eigenvalue(dissipativity_matrix(a, b, c, d, qsr, p_val))
    ok = achieved >= margin if strict else achieved >= -FEASIBILITY_TOL
    return Certificate(bool(ok), p_val, achieved, strict, sol.status)


def check_system_dissipativity(sys, qsr: QsrSpec, channel="u", strict=False, **kw) -> Certificate:
    """Dissipativity of a networked system, open loop ``u -> y`` or closed loop ``w -> y``."""
    if channel == "u":
        return check_dissipativity_centralized(sys.A, sys.B, sys.C, sys.D, qsr, strict, **kw)
    if channel == "w":
        return check_dissipativity_centralized(sys.closed_loop_A(), sys.E, sys.C, sys.F, qsr,
                                               strict, **kw)
    raise ConfigError(f"unknown channel {channel!r}")


def certificate_margin(matrix) -> float:
    """``lambda_min`` of a realized certificate matrix (symmetric part)."""
    m = _dense(matrix)
    return min_eigenvalue(0.5 * (m + m.T))


# ---------------------------------------------------------------------------
# Trajectory oracle
# ---------------------------------------------------------------------------

@dataclass
class SimulationReport:
    max_violation: float
    dt: float
    horizon: float
    trials: int


def _time_constant(a):
    return 1.0 / max(np.linalg.norm(a, 2), 1e-3)


def simulate_dissipation(a, b, c, d, qsr: QsrSpec, p, trials=100, seed=0, horizon=None,
                         dt=None, segments=10, guard=1e12) -> SimulationReport:
    """Worst violation of ``V(t1) - V(t0) <= int_{t0}^{t1} supply`` over random runs.

    ``V = x^T P x``.  Each trial draws ``x(0)`` and a piecewise-constant input
    with ``segments`` pieces, then integrates the state together with the
    supply integral by RK4.  With ``g = V - int supply`` the violation is
    ``max_{t0 <= t1} g(t1) - g(t0)``, found with a running minimum.
    The default step is ``1e-3`` time constants and the horizon ten, the
    time constant being ``1 / ||A||_2``.
    """
    a, b, c, d, p = (_dense(x) for x in (a, b, c, d, p))
    q, s, r = _qsr_dense(qsr)
    n, pdim = b.shape
    tau = _time_constant(a)
    horizon = 10.0 * tau if horizon is None else float(horizon)
    dt = 1e-3 * tau if dt is None else float(dt)
    steps = max(int(round(horizon / dt)), segments)
    steps -= steps % segments
    dt = horizon / steps
    per_seg = steps // segments
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((trials, n))
    u_all = rng.standard_normal((segments, trials, pdim))
    z = np.zeros(trials)

    def rhs(xx, uu):
        y = xx @ c.T + uu @ d.T
        sup = np.einsum("ti,ij,tj->t", y, q, y) + 2 * np.einsum("ti,ij,tj->t", y, s, uu) \
            + np.einsum("ti,ij,tj->t", uu, r, uu)
        return xx @ a.T + uu @ b.T, sup

    def g_of(xx, zz):
        return np.einsum("ti,ij,tj->t", xx, p, xx) - zz

    g = g_of(x, z)
    running_min = g.copy()
    worst = np.zeros(trials)
    for k in range(steps):
        u = u_all[k // per_seg]
        k1x, k1z = rhs(x, u)
        k2x, k2z = rhs(x + 0.5 * dt * k1x, u)
        k3x, k3z = rhs(x + 0.5 * dt * k2x, u)
        k4x, k4z = rhs(x + dt * k3x, u)
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        z = z + dt / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > guard:
            raise SimulationError(f"trajectory diverged at t = {(k + 1) * dt:.4g}")
        g = g_of(x, z)
        worst = np.maximum(worst, g - running_min)
        running_min = np.minimum(running_min, g)
    return SimulationReport(float(np.max(worst)), dt, horizon, trials)


def simulate_trace(a, b, c, d, p, u, dt, x0=None):
    """One RK4 run with a per-step input array ``u`` (steps x p).

    Returns ``(t, x, y, V)``.
    """
    a, b, c, d, p = (_dense(v) for v in (a, b, c, d, p))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = a.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    xs = [x]
    for uk in u:
        f = lambda xx: a @ xx + b @ uk  # noqa: E731
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs.append(x)
    xs = np.array(xs)
    uu = np.vstack([u, u[-1:]]) if len(u) else np.zeros((1, b.shape[1]))
    ys = xs @ c.T + uu @ d.T
    v = np.einsum("ti,ij,tj->t", xs, p, xs)
    return np.arange(len(xs)) * dt, xs, ys, v


def export_trace_csv(path, t, x, u, y, v):
    """Write ``t, x*, u*, y*, V`` columns."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    u = np.atleast_2d(u)
    if len(u) == len(t) - 1:
        u = np.vstack([u, u[-1:]])
    header = (["t"] + [f"x{k + 1}" for k in range(x.shape[1])] + [f"u{k + 1}" for k in range(u.shape[1])]
              + [f"y{k + 1}" for k in range(y.shape[1])] + ["V"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(t)):
            w.writerow([f"{t[k]:.10g}", *(f"{val:.10g}" for val in (*x[k], *u[k], *y[k])),
                        f"{v[k]:.10g}"])


# ---------------------------------------------------------------------------
# Passivity indices
# ---------------------------------------------------------------------------

class Precision(enum.Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class PassivityIndices:
    nu: float
    rho: float
    mode: Precision = Precision.STRONG

    @property
    def shortage(self) -> bool:
        return self.rho < 0

    def weakened(self, factor=0.5) -> "PassivityIndices":
        """Scale toward less informative values; negative indices grow in magnitude."""
        if not 0 < factor <= 1:
            raise ConfigError("weak-mode factor must lie in (0, 1]")

        def shrink(v):
            return v * factor if v >= 0 else v / factor
        return PassivityIndices(shrink(self.nu), shrink(self.rho), Precision.WEAK)


def _wrapped(a, eps):
    n = a.shape[0]
    return np.eye(n), np.eye(n), eps * np.eye(n)


def passivity_lmi(a, eps, pv, nu, rho):
    """Direct dissipation inequality for ``dx = Ax + u, y = x + eps u`` under
    ``Q = -rho I, S = I/2, R = -nu I``; affine in ``P``, ``nu`` and ``rho``.

    ``nu``/``rho`` may be numbers or scalar expressions.
    """
    n = a.shape[0]
    b, c, d = _wrapped(a, eps)
    eye = np.eye(n)
    rho_i = rho * eye if np.isscalar(rho) else scaled_identity(rho, n)
    nu_i = nu * eye if np.isscalar(nu) else scaled_identity(nu, n)
    m11 = -(a.T @ pv) - pv @ a - c.T @ c @ rho_i
    m12 = -(pv @ b) + 0.5 * c.T - (c.T @ rho_i) @ d
    m22 = 0.5 * (d + d.T) - nu_i - (d.T @ rho_i) @ d
    return bmat([[m11, m12], [m12.T, m22]], [n, n], [n, n])


def max_input_index(a, eps, rho, options=None):
    """Largest ``nu`` certifying the wrapped subsystem at fixed ``rho`` (``-inf`` if none)."""
    a = _dense(a)
    n = a.shape[0]
    prob = LmiProblem("input-index")
    pv = prob.symmetric("P", n)
    nu = prob.scalar("nu")
    prob.add_psd(pv, margin=1e-8)
    prob.add_psd(passivity_lmi(a, eps, pv, nu, float(rho)))
    prob.add_linear(-1.0, nu)
    # nu is bounded above by the (2,2) block; keep the search box finite anyway
    prob.add_psd(10.0 * (1.0 + abs(rho)) * (1.0 + np.linalg.norm(a)) - nu)
    sol = solve(prob, options)
    if sol.status is Status.INFEASIBLE:
        return -np.inf
    return float(sol["nu"][0, 0])


def check_passivity_indices(a, eps, indices, options=None) -> Certificate:
    """Certify given indices for ``dx = A x + u, y = x + eps u`` (any sign of ``rho``).

    Searches ``P >= 1e-8 I`` maximizing ``t <= 1`` with the direct dissipation
    inequality ``>= t I``; feasible when the realized margin is ``>= -tol``.
    """
    a = _dense(a)
    n = a.shape[0]
    prob = LmiProblem("index-check")
    pv = prob.symmetric("P", n)
    t = prob.scalar("t")
    prob.add_psd(pv, margin=1e-8)
    prob.add_psd(passivity_lmi(a, eps, pv, float(indices.nu), float(indices.rho))
                 - scaled_identity(t, 2 * n))
    prob.add_psd(1.0 - t)
    prob.add_linear(-1.0, t)
    sol = solve(prob, options)
    if sol.status is Status.INFEASIBLE:
        return Certificate(False, None, -np.inf, False, sol.status)
    p_val = sol["P"]
    achieved = min_eigenvalue(passivity_lmi(a, eps, p_val, float(indices.nu),
                                            float(indices.rho)).const)
    return Certificate(bool(achieved >= -FEASIBILITY_TOL), p_val, achieved, False, sol.status)


def estimate_passivity_indices(a, eps=0.0, mode=Precision.STRONG, weak_factor=0.5,
                               bracket=10.0, rho_tol=1e-3, feas_tol=FEASIBILITY_TOL,
                               options=None) -> PassivityIndices:
    """Passivity indices of ``dx = A x + u, y = x + eps u``.

    ``nu_target = max(nu_max(0), 0) / 2`` is the input index we insist on
    keeping; ``rho`` is the largest output index (bisection on
    ``[-bracket, bracket] * ||A||``) for which ``nu_max(rho) >= nu_target``,
    and the reported ``nu`` is ``nu_max`` at that ``rho``.  Weak mode scales
    the strong pair by ``weak_factor``.
    """
    a = _dense(a)
    if a.shape[0] != a.shape[1]:
        raise StructureError("A_ii must be square")
    if eps < 0:
        raise ConfigError("feedthrough regularization must be non-negative")
    scale = max(np.linalg.norm(a, 2), 1e-6)
    lo, hi = -bracket * scale, bracket * scale
    nu0 = max_input_index(a, eps, 0.0, options)
    target = 0.5 * max(nu0, 0.0)

    def ok(r):
        return max_input_index(a, eps, r, options) >= target - feas_tol

    if ok(hi):
        rho = hi
    elif not ok(lo):
        rho = lo
    else:
        while hi - lo > rho_tol:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        rho = lo
    nu = max_input_index(a, eps, rho, options)
    if abs(nu) < feas_tol:
        nu = 0.0  # solver noise around the boundary value
    strong = PassivityIndices(float(nu), float(rho), Precision.STRONG)
    return strong if mode is Precision.STRONG else strong.weakened(weak_factor)
