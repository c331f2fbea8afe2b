import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netsyn.analysis import check_dissipativity_centralized
from netsyn.errors import ConfigError
from netsyn.generator import Target, draw_edges, generate, generate_system, local_hurwitz
from netsyn.sysmodel import system_to_dict

from oracles import gain_below, lyapunov_certificate


def max_re(a):
    return float(np.max(np.linalg.eigvals(a).real))


def test_single_stable_subsystem():
    sys = generate_system(1, 3, 0.0, Target.STABLE, seed=1)
    assert sys.N == 1 and max_re(sys.A.data) < 0


def test_unstable_network_has_stable_parts():
    sys = generate_system(5, 3, 0.4, Target.UNSTABLE, seed=2)
    assert max_re(sys.A.data) > 0
    for i in range(5):
        assert max_re(sys.A.block(i, i)) < 0


def test_same_seed_same_system():
    a = generate(4, 2, 0.5, Target.STABLE, seed=7)
    b = generate(4, 2, 0.5, Target.STABLE, seed=7)
    assert system_to_dict(a.system) == system_to_dict(b.system) and a.extra() == b.extra()


@given(st.integers(2, 7), st.floats(0.0, 1.0), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=40)
def test_edge_count(n, density, seed):
    edges = draw_edges(np.random.default_rng(seed), n, density)
    assert len(edges) == int(round(density * n * (n - 1)))
    assert len(set(edges)) == len(edges) and all(i != j for i, j in edges)


@given(st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=40)
def test_local_blocks_are_hurwitz(n, seed):
    assert max_re(local_hurwitz(np.random.default_rng(seed), n)) < -0.5 + 1e-9


@pytest.mark.parametrize("kwargs", [dict(n=0, dims=1, density=0.1),
                                    dict(n=2, dims=0, density=0.1),
                                    dict(n=2, dims=[1], density=0.1),
                                    dict(n=2, dims=1, density=1.5)])
def test_bad_configurations(kwargs):
    with pytest.raises(ConfigError):
        generate(**kwargs)


def test_certified_stable_target():
    g = generate(4, 2, 0.5, Target.STABLE, seed=3)
    a = g.system.A.data
    assert max_re(a) < 0
    assert lyapunov_certificate(a) is not None
    p = g.certificate.data
    assert np.linalg.eigvalsh(-a.T @ p - p @ a)[0] > 0


def test_certified_stabilizable_target():
    g = generate(3, 2, 0.5, Target.STABILIZABLE, seed=4)
    s = g.system
    assert max_re(s.closed_loop_A().data) < 0


def test_certified_dissipative_target():
    g = generate(3, 2, 0.5, Target.DISSIPATIVE, seed=5)
    s = g.system
    assert check_dissipativity_centralized(s.A, s.B, s.C, s.D, g.qsr).feasible
    assert gain_below(s.A.data, s.B.data, s.C.data, 10.0)


def test_certified_dissipativatable_target():
    g = generate(3, 2, 0.5, Target.DISSIPATIVATABLE, seed=6)
    s = g.system
    acl = s.closed_loop_A()
    assert max_re(acl.data) < 0
    assert gain_below(acl.data, s.E.data, s.C.data, 10.0)
