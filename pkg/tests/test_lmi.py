import numpy as np
import pytest
from hypothesis import given, strategies as st

from netsyn.errors import ConfigError, StructureError
from netsyn.lmi import (LmiProblem, SolveOptions, Status, as_expr, bmat, default_tolerance,
                        scaled_identity, solve, strictify)


def test_scalar_lyapunov_feasible():
    prob = LmiProblem()
    p = prob.scalar("p")
    prob.add_psd(p, margin=1e-6)
    prob.add_psd(2.0 * p, margin=1e-6)
    sol = solve(prob)
    assert sol.status is Status.OPTIMAL
    assert sol["p"][0, 0] > 0


def test_unstable_scalar_infeasible():
    prob = LmiProblem()
    p = prob.scalar("p")
    prob.add_psd(p, margin=1e-6)
    prob.add_psd(-2 * 0.5 * p, margin=1e-6)
    assert solve(prob).status is Status.INFEASIBLE


def test_norm_objective_hits_unconstrained_optimum():
    prob = LmiProblem()
    q = prob.scalar("q")
    prob.add_psd(q - 1.0)
    prob.add_norm(1.0, q - 3.0)
    sol = solve(prob)
    assert sol["q"][0, 0] == pytest.approx(3.0, abs=1e-6)
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("expr,eps,feasible", [
    (np.eye(2), 0.5, True),
    (np.zeros((2, 2)), 1e-6, False),
    (np.diag([1.0, 1e-3]), 1e-3, True),
    (np.diag([1.0, 1e-3]), 2e-3, False),
])
def test_strictify_on_constants(expr, eps, feasible):
    prob = LmiProblem()
    t = prob.scalar("t")
    prob.add_psd(strictify(expr, eps))
    prob.add_psd(t)  # a variable keeps the problem non-trivial
    sol = solve(prob)
    assert (sol.status is not Status.INFEASIBLE) == feasible


def test_strictify_rejects_non_positive_margin():
    with pytest.raises(ConfigError):
        strictify(np.eye(1), 0.0)


def test_symmetric_variable_and_realize():
    prob = LmiProblem()
    x = prob.symmetric("X", 2)
    a = np.array([[-1.0, 2.0], [0.0, -3.0]])
    lyap = -(a.T @ x) - x @ a
    prob.add_psd(x - np.eye(2))
    prob.add_psd(lyap, margin=1e-3)
    sol = solve(prob)
    assert sol.ok
    xv = sol["X"]
    np.testing.assert_allclose(lyap.realize(sol.values), -a.T @ xv - xv @ a, atol=1e-12)
    assert np.linalg.eigvalsh(-a.T @ xv - xv @ a)[0] >= 1e-3 - 1e-7


@given(st.integers(0, 2 ** 31 - 1))
def test_affine_expression_algebra(seed):
    rng = np.random.default_rng(seed)
    prob = LmiProblem()
    x = prob.variable("X", (2, 3))
    y = prob.symmetric("Y", 3)
    left, right = rng.standard_normal((4, 2)), rng.standard_normal((3, 3))
    c = rng.standard_normal((4, 3))
    expr = left @ x @ right + c - 2.0 * (left @ x)
    vals = {"X": rng.standard_normal((2, 3)), "Y": rng.standard_normal((3, 3))}
    np.testing.assert_allclose(expr.realize(vals),
                               left @ vals["X"] @ right + c - 2 * left @ vals["X"], atol=1e-12)
    np.testing.assert_allclose(expr.T.realize(vals), expr.realize(vals).T, atol=1e-12)
    block = bmat([[y, x.T], [x, None]], [3, 2], [3, 2])
    full = block.realize(vals)
    np.testing.assert_array_equal(full[:3, :3], vals["Y"])
    np.testing.assert_array_equal(full[3:, :3], vals["X"])
    np.testing.assert_array_equal(full[3:, 3:], np.zeros((2, 2)))


def test_scaled_identity_and_shape_errors():
    prob = LmiProblem()
    t = prob.scalar("t")
    np.testing.assert_array_equal(scaled_identity(t, 3).realize({"t": np.array([[2.0]])}),
                                  2 * np.eye(3))
    with pytest.raises(StructureError):
        scaled_identity(as_expr(np.ones((2, 2))), 2)
    with pytest.raises(StructureError):
        prob.add_psd(as_expr(np.ones((2, 3))))


def test_foreign_variable_is_rejected():
    other = LmiProblem().scalar("t")
    prob = LmiProblem()
    with pytest.raises(StructureError):
        prob.add_psd(other)


def test_negative_norm_weight_is_rejected():
    prob = LmiProblem()
    t = prob.scalar("t")
    with pytest.raises(ConfigError):
        prob.add_norm(-1.0, t)


def test_solver_tolerance_environment(monkeypatch):
    monkeypatch.setenv("NETSYN_SOLVER_TOL", "1e-7")
    assert default_tolerance() == 1e-7
    assert SolveOptions().tol == 1e-7
    monkeypatch.setenv("NETSYN_SOLVER_TOL", "abc")
    with pytest.raises(ConfigError):
        default_tolerance()
