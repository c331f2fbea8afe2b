import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsyn.analysis import check_dissipativity_centralized, dissipativity_matrix
from netsyn.errors import DiagnosticError, SpecError, StepInfeasible
from netsyn.synthesis import (Mode, SynthesisOptions, local_objective, synthesize,
                              synthesize_dissipativation, synthesize_dissipativity,
                              synthesize_stability, synthesize_stabilizability)
from netsyn.sysmodel import (CostModel, Designation, DesignSpec, NetworkedSystem, QsrSpec,
                             mark_refinable)

from oracles import bew_by_loops, gain_below, hurwitz_2x2, is_pd

ONE = np.ones((1, 1))


def scalar_network(a, **kw):
    n = len(a)
    blocks = {(i, j): np.array([[a[i][j]]]) for i in range(n) for j in range(n) if a[i][j] != 0}
    return NetworkedSystem.from_blocks([1] * n, A=blocks, **kw)


def two_by_two():
    return scalar_network([[-1.0, 3.0], [3.0, -1.0]])


# -- stability ----------------------------------------------------------------

def test_decoupled_nothing_designable():
    sys = scalar_network([[-1.0, 0.0], [0.0, -2.0]])
    res = synthesize_stability(sys)
    assert res.success and res.J_dev == 0.0
    np.testing.assert_array_equal(res.system.A.data, sys.A.data)


def test_unstable_pair_with_removable_couplings():
    sys = two_by_two()
    assert not hurwitz_2x2(sys.A.data)
    spec = DesignSpec.all_pairs(sys, Designation.REMOVABLE, reference="initial")
    res = synthesize_stability(sys, spec)
    a = res.system.A.data
    assert res.success
    assert a[0, 1] * a[1, 0] < 1.0
    assert hurwitz_2x2(a)
    assert is_pd(-a.T @ res.certificate.data - res.certificate.data @ a)


def test_non_hurwitz_local_block_is_diagnosed():
    sys = scalar_network([[0.5]])
    with pytest.raises(DiagnosticError) as info:
        synthesize_stability(sys)
    assert info.value.subsystem == 0


def test_removable_in_edge_is_removed():
    sys = two_by_two()
    res = synthesize_stability(sys, mark_refinable(DesignSpec(), sys, (1, 0), remove=True))
    assert res.success
    assert np.linalg.norm(res.system.A.block(1, 0)) < 1e-6
    assert (1, 0) in res.edges.removed


def test_refine_on_feasible_system_keeps_reference():
    sys = scalar_network([[-2.0, 0.5], [0.5, -2.0]])
    spec = mark_refinable(DesignSpec(costs=CostModel.fixed(1.0, 1.0)), sys, (1, 0))
    res = synthesize_stability(sys, spec)
    assert res.success
    assert res.system.A.block(1, 0)[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_refining_a_vacuous_edge_is_a_no_op():
    sys = NetworkedSystem.from_blocks([1, 1], edges=[(1, 0)], A={(0, 0): -ONE, (1, 1): -ONE})
    res = synthesize_stability(sys, mark_refinable(DesignSpec(), sys, (1, 0)))
    assert res.success
    assert abs(res.system.A.block(1, 0)[0, 0]) < 1e-6


def test_assembled_matrix_is_the_centralized_condition():
    sys = two_by_two()
    spec = DesignSpec.all_pairs(sys, Designation.REMOVABLE, reference="initial")
    res = synthesize_stability(sys, spec, options=SynthesisOptions(decay=0.0))
    a, p = res.system.A.data, res.certificate.data
    np.testing.assert_allclose(res.W.data, -a.T @ p - p @ a, atol=1e-8)
    np.testing.assert_array_equal(res.W.data, res.W.data.T)


def test_infeasible_step_reports_the_subsystem():
    sys = scalar_network([[-1.0, 3.0], [3.0, -1.0]])
    with pytest.raises(StepInfeasible) as info:
        synthesize_stability(sys)
    assert info.value.subsystem == 1
    partial = synthesize_stability(sys, raise_on_infeasible=False)
    assert partial.status == "infeasible" and partial.failing == 1 and partial.system is None


def test_processing_order_is_respected():
    sys = two_by_two()
    spec = DesignSpec.all_pairs(sys, Designation.REMOVABLE, reference="initial")
    res = synthesize_stability(sys, spec, options=SynthesisOptions(order=[1, 0]))
    assert res.order == [1, 0] and res.success
    assert [s.subsystem for s in res.steps] == [1, 0]


# -- stabilizability ----------------------------------------------------------

def test_scalar_pole_placement():
    sys = NetworkedSystem.from_blocks([1], input_dims=[1], A={(0, 0): 0.5 * ONE},
                                      B={(0, 0): ONE})
    res = synthesize_stabilizability(sys)
    assert res.success
    assert res.K.data[0, 0] < -0.5


def test_feedback_alone_handles_fixed_coupling():
    a = two_by_two()
    sys = NetworkedSystem.from_blocks([1, 1], input_dims=[1, 1],
                                      A=a.A.to_dict(), B={(0, 0): ONE, (1, 1): ONE})
    res = synthesize_stabilizability(sys)
    assert res.success and res.J_dev == 0.0
    acl = sys.A.data + sys.B.data @ res.K.data
    assert hurwitz_2x2(acl)


def test_zero_input_matches_stability_mode():
    base = scalar_network([[-1.0, 0.4], [0.4, -1.0]])
    sys = NetworkedSystem.from_blocks([1, 1], input_dims=[1, 1], A=base.A.to_dict())
    assert synthesize_stabilizability(sys).success == synthesize_stability(base).success
    worse = scalar_network([[-1.0, 3.0], [3.0, -1.0]])
    sys = NetworkedSystem.from_blocks([1, 1], input_dims=[1, 1], A=worse.A.to_dict())
    assert (synthesize_stabilizability(sys, raise_on_infeasible=False).success
            == synthesize_stability(worse, raise_on_infeasible=False).success)


def test_non_block_diagonal_input_is_rejected():
    sys = NetworkedSystem.from_blocks([1, 1], input_dims=[1, 1],
                                      A={(0, 0): -ONE, (1, 1): -ONE, (1, 0): ONE},
                                      B={(0, 0): ONE, (1, 0): ONE})
    with pytest.raises(SpecError):
        synthesize_stabilizability(sys)


def test_unstabilizable_pair_is_diagnosed():
    sys = NetworkedSystem.from_blocks([1], input_dims=[1], A={(0, 0): ONE})
    with pytest.raises(DiagnosticError):
        synthesize_stabilizability(sys)


def test_gain_relation():
    sys = NetworkedSystem.from_blocks(
        [2, 1], input_dims=[1, 1],
        A={(0, 0): np.array([[0.2, 1.0], [0.0, -1.0]]), (1, 1): 0.3 * ONE,
           (1, 0): np.array([[1.0, 0.5]])},
        B={(0, 0): np.array([[0.0], [1.0]]), (1, 1): ONE})
    res = synthesize_stabilizability(sys)
    assert res.success
    np.testing.assert_allclose(res.L.data, res.K.data @ res.certificate.data, atol=1e-8)
    assert np.max(np.linalg.eigvals(sys.closed_loop_A().data if sys.K else
                                    sys.A.data + sys.B.data @ res.K.data).real) < 0


# -- dissipativity ------------------------------------------------------------

def passive_lag():
    return NetworkedSystem.from_blocks([1], input_dims=[1], output_dims=[1], A={(0, 0): -ONE},
                                       B={(0, 0): ONE}, C={(0, 0): ONE}, D={(0, 0): 0.5 * ONE})


def test_passive_subsystem_unchanged():
    sys = passive_lag()
    res = synthesize_dissipativity(sys, qsr=QsrSpec.passive([1]))
    assert res.success
    np.testing.assert_array_equal(res.system.A.data, sys.A.data)


def coupled_pair():
    rng = np.random.default_rng(11)
    return NetworkedSystem.from_blocks(
        [2, 2], input_dims=[1, 1], output_dims=[1, 1],
        A={(0, 0): np.array([[-1.5, 0.4], [-0.3, -1.2]]), (1, 1): np.array([[-2.0, 1.0],
                                                                             [0.0, -1.0]]),
           (0, 1): rng.standard_normal((2, 2)), (1, 0): rng.standard_normal((2, 2))},
        B={(0, 0): np.array([[1.0], [0.0]]), (1, 1): np.array([[0.0], [1.0]])},
        C={(0, 0): np.array([[1.0, 0.0]]), (1, 1): np.array([[0.5, 0.5]])})


def test_l2_gain_target():
    sys = coupled_pair()
    spec = DesignSpec.all_pairs(sys, Designation.DESIGNABLE)
    qsr = QsrSpec.l2_gain([1, 1], [1, 1], 2.0)
    res = synthesize_dissipativity(sys, spec, qsr)
    assert res.success
    s = res.system
    assert check_dissipativity_centralized(s.A, s.B, s.C, s.D, qsr).feasible
    assert gain_below(s.A.data, s.B.data, s.C.data, 2.0)


def test_unreachable_gain_is_infeasible():
    sys = coupled_pair()
    spec = DesignSpec.all_pairs(sys, Designation.DESIGNABLE)
    with pytest.raises(StepInfeasible):
        synthesize_dissipativity(sys, spec, QsrSpec.l2_gain([1, 1], [1, 1], 0.01))


def test_dissipativity_matrix_is_bew_of_the_lemma():
    sys = coupled_pair()
    spec = DesignSpec.all_pairs(sys, Designation.DESIGNABLE)
    qsr = QsrSpec.l2_gain([1, 1], [1, 1], 2.0)
    res = synthesize_dissipativity(sys, spec, qsr, options=SynthesisOptions(decay=0.0,
                                                                            simulate=False))
    s = res.system
    psi = dissipativity_matrix(s.A, s.B, s.C, s.D, qsr, res.certificate)
    parts = [list(s.state_dims), list(s.input_dims), list(s.output_dims)]
    off = np.concatenate([[0], np.cumsum([sum(p) for p in parts])])
    cells = [[psi[off[k]:off[k + 1], off[l]:off[l + 1]] for l in range(3)] for k in range(3)]
    np.testing.assert_allclose(res.W.data, bew_by_loops(cells, parts), atol=1e-8)


def test_dissipativity_requires_block_diagonal_output():
    sys = NetworkedSystem.from_blocks([1, 1], input_dims=[1, 1], output_dims=[1, 1],
                                      A={(0, 0): -ONE, (1, 1): -ONE, (1, 0): ONE},
                                      B={(0, 0): ONE, (1, 1): ONE},
                                      C={(0, 0): ONE, (1, 1): ONE, (1, 0): ONE})
    with pytest.raises(SpecError):
        synthesize_dissipativity(sys, qsr=QsrSpec.l2_gain([1, 1], [1, 1], 5.0))
    with pytest.raises(SpecError):
        synthesize_dissipativity(passive_lag())


# -- dissipativation ----------------------------------------------------------

def actuated(e=1.0, f=0.0):
    return NetworkedSystem.from_blocks(
        [1], input_dims=[1], disturbance_dims=[1], output_dims=[1], A={(0, 0): 0.5 * ONE},
        B={(0, 0): ONE}, E={(0, 0): e * ONE}, C={(0, 0): ONE}, F={(0, 0): f * ONE})


def test_local_feedback_reaches_passivity():
    res = synthesize_dissipativation(actuated(f=0.5), qsr=QsrSpec.passive([1]))
    assert res.success
    s = res.system
    p = np.linalg.inv(res.certificate.data)
    assert check_dissipativity_centralized(s.closed_loop_A(), s.E, s.C, s.F,
                                           QsrSpec.passive([1])).feasible
    assert is_pd(p)


def test_no_disturbance_gives_a_stabilizing_gain():
    qsr = QsrSpec.strictly_passive([1], 0.1, 0.1)
    res = synthesize_dissipativation(actuated(e=0.0, f=1.0), qsr=qsr)
    assert res.success
    assert np.max(np.linalg.eigvals(res.system.closed_loop_A().data).real) < 0


def test_indefinite_middle_block_is_infeasible():
    from netsyn.blockmat import BlockMatrix
    qsr = QsrSpec(BlockMatrix(-ONE, [1]), BlockMatrix(-5 * ONE, [1]), BlockMatrix(ONE, [1]))
    with pytest.raises(StepInfeasible):
        synthesize_dissipativation(actuated(f=1.0), qsr=qsr)


def test_dissipativation_requires_zero_feedthrough():
    sys = NetworkedSystem.from_blocks([1], input_dims=[1], disturbance_dims=[1], output_dims=[1],
                                      A={(0, 0): -ONE}, B={(0, 0): ONE}, C={(0, 0): ONE},
                                      D={(0, 0): ONE})
    with pytest.raises(SpecError):
        synthesize_dissipativation(sys, qsr=QsrSpec.passive([1]))


# -- objective ----------------------------------------------------------------

def test_local_objective_terms():
    sys = two_by_two()
    cmat = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert local_objective(Mode.STABILITY, sys, DesignSpec(), 1, [0], cmat) == []
    spec = DesignSpec({(1, 0): Designation.DESIGNABLE})
    assert local_objective(Mode.STABILITY, sys, spec, 1, [0], cmat) == [(1.0, "A[2,1]")]
    assert local_objective(Mode.STABILITY, sys, spec, 0, [], cmat) == []


def test_single_in_edge_objective_is_the_product_norm():
    sys = two_by_two()
    spec = DesignSpec({(1, 0): Designation.DESIGNABLE}, reference={(1, 0): np.zeros((1, 1))})
    res = synthesize_stability(sys, spec, costs=np.array([[0.0, 1.0], [1.0, 0.0]]),
                               options=SynthesisOptions(regularization=0.0))
    x1 = res.certificate.block(1, 1)
    a10 = res.system.A.block(1, 0)
    assert res.steps[1].objective == pytest.approx(float(np.linalg.norm(x1 @ a10)), abs=1e-6)


@given(st.integers(0, 2 ** 31 - 1), st.floats(1.5, 20.0))
@settings(max_examples=8)
def test_raising_a_cost_never_lowers_the_objective(seed, factor):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 3.0, size=2)
    sys = scalar_network([[-1.0, a[0]], [a[1], -1.0]])
    spec = DesignSpec({(0, 1): Designation.DESIGNABLE, (1, 0): Designation.DESIGNABLE},
                      reference={(0, 1): np.array([[a[0]]]), (1, 0): np.array([[a[1]]])})
    c = np.array([[0.0, 1.0], [1.0, 0.0]])
    opts = SynthesisOptions(regularization=0.0)
    low = synthesize_stability(sys, spec, costs=c, options=opts, raise_on_infeasible=False)
    high_c = c.copy()
    high_c[1, 0] *= factor
    high = synthesize_stability(sys, spec, costs=high_c, options=opts, raise_on_infeasible=False)
    if low.steps[-1].objective is None or high.steps[-1].objective is None:
        return
    assert high.steps[-1].objective >= low.steps[-1].objective - 1e-6 * (1 + factor)


def test_report_shape():
    sys = two_by_two()
    spec = DesignSpec.all_pairs(sys, Designation.REMOVABLE, reference="initial")
    rep = synthesize(Mode.STABILITY, sys, spec).to_report()
    assert rep["status"] == "success" and rep["order"] == [1, 2]
    assert [s["subsystem"] for s in rep["steps"]] == [1, 2]
    assert rep["failing_subsystem"] is None and len(rep["certificate_norms"]) == 2
