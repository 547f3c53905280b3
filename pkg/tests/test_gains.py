import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from impulsive_abstraction.certificates import LocalAsfParams
from impulsive_abstraction.errors import SmallGainError
from impulsive_abstraction.gains import (GainMatrix, bellman_ford, build_gain_matrix, check_small_gain,
                                         compose_asf_value, compose_parameters, compute_scalings, cycle_product)
from impulsive_abstraction.pipeline import analyse_gains, certify
from impulsive_abstraction.abstraction import AbstractionConfig

from oracles import simple_cycles


def gm(rows, ids=None):
    g = np.array(rows, dtype=float)
    return GainMatrix(g, tuple(ids or range(1, len(g) + 1)))


@pytest.fixture(scope="module")
def ring_gains(ring3):
    bundles = certify(ring3, AbstractionConfig(0.6667), 0.99)
    return bundles, analyse_gains(bundles, ring3)


def test_ring_gain_matrix(ring_gains):
    _, ga = ring_gains
    g = ga.matrix.gamma
    off = sorted(float(v) for i, j, v in ga.matrix.edges())
    assert off == pytest.approx([0.4, 0.5, 0.5])
    # gamma_ij: gain from j into i, edges 3->1, 1->2, 2->3
    assert g[0, 2] == pytest.approx(0.4) and g[1, 0] == pytest.approx(0.5) and g[2, 1] == pytest.approx(0.5)
    assert np.diag(g) == pytest.approx([math.exp(-0.2), math.exp(-0.3), math.exp(-0.4)])
    rep = ga.report
    assert rep.holds and rep.diagonal_ok
    assert rep.worst_product == pytest.approx(0.1, abs=1e-15)
    assert sorted(rep.worst_cycle) == [0, 1, 2]
    assert not ga.max_form.holds
    assert ga.max_form.worst_product > 1


def test_ring_scalings(ring_gains):
    _, ga = ring_gains
    psi = ga.scalings.psi
    assert 0.4 * psi[2] < psi[0] and 0.5 * psi[0] < psi[1] and 0.5 * psi[1] < psi[2]
    assert ga.scalings.verify(ga.matrix)


def test_no_edges_gives_diagonal():
    loc = [LocalAsfParams.from_additive(1.0, s, 0.3, 0.0, 0.1, 0.99) for s in (0.2, 0.5)]
    g = build_gain_matrix(loc, [], (1, 2))
    assert np.array_equal(g.gamma, np.diag([0.2, 0.5]))
    assert compute_scalings(g).psi.tolist() == [1.0, 1.0]


def test_edge_entry_is_max_form_gain_over_alpha():
    loc = [LocalAsfParams.from_additive(1.0, math.exp(-0.2), 0.4, 0.0, 0.1, 0.99),
           LocalAsfParams.from_additive(1.0, 0.5, 0.0, 0.0, 0.1, 0.99)]
    g = build_gain_matrix(loc, [(2, 1)], (1, 2), form="max")
    assert g.gamma[0, 1] == pytest.approx(2.229, abs=1e-3)


def test_single_and_failing_cycles():
    assert check_small_gain(gm([[0.9]])).holds
    rep = check_small_gain(gm([[0.5, 1.1], [1.1, 0.5]]))
    assert not rep.holds
    assert rep.label(rep.witness) == "(1,2)"
    assert rep.witness_product == pytest.approx(1.21)
    with pytest.raises(SmallGainError) as err:
        compute_scalings(gm([[0.5, 1.1], [1.1, 0.5]]))
    assert err.value.product == pytest.approx(1.21)
    assert not check_small_gain(gm([[1.0, 0.0], [0.0, 0.2]])).holds


def test_two_subsystem_scaling():
    g = gm([[0.5, 0.5], [0.0, 0.5]])
    psi = compute_scalings(g).psi
    assert 0.5 * psi[1] < psi[0]


def test_bellman_ford_finds_negative_cycle():
    dist, cyc = bellman_ford(3, [(0, 1, 1.0), (1, 2, -3.0), (2, 0, 1.0)])
    assert sorted(cyc) == [0, 1, 2]
    dist, cyc = bellman_ford(3, [(0, 1, 1.0), (1, 2, -1.0)])
    assert cyc is None and dist == [0.0, 0.0, -1.0]


gains = st.integers(2, 6).flatmap(lambda n: hnp.arrays(
    float, (n, n), elements=st.one_of(st.just(0.0), st.floats(0.05, 2.0))))


@given(gains)
def test_small_gain_agrees_with_cycle_enumeration(g):
    n = g.shape[0]
    edges = {(i, j) for i in range(n) for j in range(n) if i != j and g[i, j] > 0}
    cycles = simple_cycles(n, edges)
    products = [math.prod(g[c[k], c[(k + 1) % len(c)]] for k in range(len(c))) for c in cycles]
    # keep clear of the decision boundary
    if any(abs(p - 1) < 1e-9 for p in products):
        return
    expected = all(g[k, k] < 1 for k in range(n)) and all(p < 1 for p in products)
    rep = check_small_gain(GainMatrix(g, tuple(range(1, n + 1))))
    assert rep.holds == expected
    if products:
        assert rep.worst_product == pytest.approx(max(products), rel=1e-12)
        assert cycle_product(g, rep.worst_cycle) == pytest.approx(max(products), rel=1e-12)
    if not rep.holds:
        assert rep.witness_product >= 1 - 1e-9 or any(g[k, k] >= 1 for k in range(n))
    else:
        s = compute_scalings(GainMatrix(g, tuple(range(1, n + 1))))
        assert s.verify(GainMatrix(g, tuple(range(1, n + 1))))


def test_compose_asf_value_examples():
    assert compose_asf_value([0, 0, 0], [1, 1, 1]) == 0
    assert compose_asf_value([1, 2, 3], [1, 1, 1]) == 3
    assert compose_asf_value([1, 2, 3], [1, 2, 10]) == 1


@given(hnp.arrays(float, 4, elements=st.floats(0, 100)), hnp.arrays(float, 4, elements=st.floats(0.1, 10)),
       st.integers(0, 3), st.floats(0, 10), st.floats(0.01, 100))
def test_compose_asf_value_monotone_and_homogeneous(S, psi, k, bump, lam):
    base = compose_asf_value(S, psi)
    S2 = S.copy()
    S2[k] += bump
    assert compose_asf_value(S2, psi) >= base
    assert compose_asf_value(lam * S, psi) == pytest.approx(lam * base, rel=1e-12, abs=1e-300)


def test_compose_parameters_min_max_rules():
    loc = [LocalAsfParams.from_additive(1.0, 0.5, 0.1, 0.2, 0.3, 0.9),
           LocalAsfParams.from_additive(2.0, 0.8, 0.1, 0.4, 0.1, 0.9)]
    c = compose_parameters(loc, [1.0, 4.0])
    assert c.alpha == pytest.approx(min(1.0, 0.5))
    assert c.sigma == pytest.approx(max(p.sigma for p in loc))
    assert c.rho_u == pytest.approx(max(loc[0].rho_u, loc[1].rho_u / 4))
    assert c.eps == pytest.approx(max(loc[0].eps, loc[1].eps / 4))
