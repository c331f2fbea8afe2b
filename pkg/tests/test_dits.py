import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsyn.analysis import PassivityIndices, Precision
from netsyn.errors import PreconditionError, SpecError
from netsyn.dits import (compare_methods, network_condition, synthesize_dits,
                         wrap_subsystems)
from netsyn.sysmodel import (CostModel, Designation, DesignSpec, NetworkedSystem,
                             case_study_blocks, case_study_partial_system)

ONE = np.ones((1, 1))


def scalar_network(a):
    n = len(a)
    return NetworkedSystem.from_blocks(
        [1] * n, A={(i, j): np.array([[a[i][j]]]) for i in range(n) for j in range(n)
                    if a[i][j] != 0})


def condition_by_supply(nu, rho, m, p):
    """Sum over subsystems of ``p_i`` times the supply ``[y_i; u_i]`` evaluated on ``u = M y``."""
    n = len(nu)
    total = np.zeros((n, n))
    for i in range(n):
        e = np.zeros((1, n))
        e[0, i] = 1.0
        u_i = m[i:i + 1, :]
        # supply y^T Q y + 2 y^T S u + u^T R u with Q = -rho, S = 1/2, R = -nu
        total += p[i] * (-rho[i] * e.T @ e + 0.5 * (e.T @ u_i + u_i.T @ e) - nu[i] * u_i.T @ u_i)
    return total


def test_reference_of_a_decoupled_system_is_zero():
    sys = scalar_network([[-2.0, 0.0], [0.0, -3.0]])
    inst = wrap_subsystems(sys)
    np.testing.assert_array_equal(inst.reference.data, np.zeros((2, 2)))
    assert all(inst.certified)


def test_reference_follows_fixed_couplings():
    sys = scalar_network([[-2.0, 0.7], [0.0, -3.0]])
    inst = wrap_subsystems(sys)
    np.testing.assert_array_equal(inst.reference.data, [[0.0, 0.7], [0.0, 0.0]])
    spec = DesignSpec({(0, 1): Designation.REMOVABLE})
    assert wrap_subsystems(sys, spec=spec).reference.block(0, 1)[0, 0] == 0.0


def test_case_study_reference_cells():
    sys = case_study_partial_system()
    inst = wrap_subsystems(sys, indices=[PassivityIndices(0.1, 0.1)] * 5)
    for (i, j), block in case_study_blocks().items():
        if i != j:
            np.testing.assert_array_equal(inst.reference.block(i, j), block)


def test_single_subsystem_needs_no_coupling():
    sys = scalar_network([[-2.0]])
    res = synthesize_dits(wrap_subsystems(sys))
    assert res.status == "success"
    np.testing.assert_array_equal(res.M.data, np.zeros((1, 1)))
    assert res.verdicts["hurwitz"]


def test_two_strictly_passive_subsystems_keep_the_reference():
    sys = scalar_network([[-2.0, 0.1], [0.1, -2.0]])
    spec = DesignSpec.all_pairs(sys, Designation.DESIGNABLE, reference="initial",
                                costs=CostModel.fixed(0.1, 0.1))
    inst = wrap_subsystems(sys, spec=spec)
    assert min(inst.nu) > 0 and min(inst.rho) > 0
    res = synthesize_dits(inst)
    np.testing.assert_allclose(res.M.data, [[0.0, 0.1], [0.1, 0.0]], atol=1e-4)
    a = res.system.A.data
    assert np.max(np.linalg.eigvals(a).real) < 0
    cond = condition_by_supply(inst.nu, inst.rho, res.M.data, res.p)
    assert np.max(np.linalg.eigvalsh(cond)) < 0


def test_zero_input_index_is_rejected():
    sys = scalar_network([[-2.0, 0.1], [0.1, -2.0]])
    inst = wrap_subsystems(sys, indices=[PassivityIndices(0.0, 1.0),
                                         PassivityIndices(0.1, 1.0)])
    with pytest.raises(PreconditionError, match="1"):
        synthesize_dits(inst)


def test_index_count_must_match():
    sys = scalar_network([[-2.0, 0.1], [0.1, -2.0]])
    with pytest.raises(SpecError):
        wrap_subsystems(sys, indices=[PassivityIndices(0.1, 1.0)])


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10.0))
@settings(max_examples=40)
def test_condition_matches_the_supply_sum_and_scales_with_p(seed, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    nu, rho = rng.uniform(0.01, 1.0, n), rng.uniform(-1.0, 1.0, n)
    m = rng.standard_normal((n, n))
    np.fill_diagonal(m, 0.0)
    p = rng.uniform(1.0, 5.0, n)
    sys = NetworkedSystem.from_blocks([1] * n, A={(i, i): -ONE for i in range(n)})
    inst = wrap_subsystems(sys, indices=[PassivityIndices(a, b) for a, b in zip(nu, rho)])
    got = network_condition(inst, m, p)
    np.testing.assert_allclose(got, condition_by_supply(nu, rho, m, p), atol=1e-12)
    np.testing.assert_allclose(network_condition(inst, m, alpha * p), alpha * got,
                               rtol=1e-12, atol=1e-12)


def test_weak_indices_are_more_conservative():
    sys = scalar_network([[-2.0, 0.1], [0.1, -2.0]])
    strong = wrap_subsystems(sys, mode=Precision.STRONG)
    weak = wrap_subsystems(sys, mode=Precision.WEAK)
    assert np.all(weak.rho <= strong.rho) and np.all(weak.nu <= strong.nu)
    assert all(weak.certified)


def test_compare_on_a_stable_network(tmp_path):
    sys = scalar_network([[-2.0, 0.2], [0.1, -2.0]])
    rep = compare_methods(sys, out_dir=tmp_path)
    assert len(rep["rows"]) == 6
    for row in rep["rows"]:
        assert row["status"] == "success"
        assert row["J_dev"] == pytest.approx(0.0, abs=1e-3)
    assert (tmp_path / "comparison.json").exists() and (tmp_path / "summary.csv").exists()
    assert len(list(tmp_path.glob("*.dot"))) == 6


def test_compare_rejects_unknown_methods():
    with pytest.raises(SpecError):
        compare_methods(scalar_network([[-1.0]]), methods=("magic",))
