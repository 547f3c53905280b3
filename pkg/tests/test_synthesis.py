import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impulsive_abstraction.abstraction import AbstractionConfig
from impulsive_abstraction.errors import UnsafeRegionError
from impulsive_abstraction.model import Box
from impulsive_abstraction.pipeline import compositional_model, synthesize_model
from impulsive_abstraction.synthesis import ExplicitGame, SafeSet, refine_controller, safety_fixed_point, synthesize

from conftest import small_ring
from oracles import ComposedOracle, largest_invariant_by_subsets, safety_fixed_point as oracle_fixed_point


def explicit(n, n_inputs, branches):
    return ExplicitGame(n, n_inputs, {k: [succ for _, succ in br] for k, br in branches.items()})


def test_self_loops_keep_everything():
    game = ExplicitGame(3, 1, {(s, 0): [{s}] for s in range(3)})
    ctrl = safety_fixed_point(game, np.ones(3, bool))
    assert ctrl.winning.all() and ctrl.iterations == 1 and ctrl.removed == [0]


def test_chain_into_unsafe_state():
    # 0 -> 1 -> 2 -> 3 on input 0; input 1 holds state 1 but is unavailable elsewhere
    br = {(s, 0): [(0, {s + 1})] for s in range(3)}
    br[(3, 0)] = [(0, {3})]
    br[(1, 1)] = [(0, {1})]
    safe = lambda s: s != 3
    game = explicit(4, 2, br)
    ctrl = safety_fixed_point(game, np.array([safe(s) for s in range(4)]))
    assert set(np.nonzero(ctrl.winning)[0]) == {0, 1} == largest_invariant_by_subsets(4, br, safe)
    assert ctrl.policy[0].tolist() == [True, False] and ctrl.policy[1].tolist() == [False, True]
    assert ctrl.removed == [1, 0]


def test_blocked_branch_is_losing():
    game = ExplicitGame(2, 1, {(0, 0): [set()], (1, 0): [{1}]})
    ctrl = safety_fixed_point(game, np.ones(2, bool))
    assert ctrl.winning.tolist() == [False, True]


games = st.integers(2, 7).flatmap(lambda n: st.tuples(
    st.just(n),
    st.dictionaries(st.tuples(st.integers(0, n - 1), st.integers(0, 1)),
                    st.lists(st.frozensets(st.integers(0, n - 1), max_size=3), min_size=1, max_size=2)),
    st.lists(st.booleans(), min_size=n, max_size=n)))


@settings(max_examples=150)
@given(games)
def test_fixed_point_matches_oracles(data):
    n, raw, safe = data
    br = {k: [(e, set(v)) for e, v in enumerate(succ)] for k, succ in raw.items()}
    ctrl = safety_fixed_point(explicit(n, 2, br), np.array(safe))
    got = set(np.nonzero(ctrl.winning)[0].tolist())
    W, policy = oracle_fixed_point(n, br, lambda s: safe[s])
    assert got == W == largest_invariant_by_subsets(n, br, lambda s: safe[s])
    for s in W:
        assert np.nonzero(ctrl.policy[s])[0].tolist() == policy[s]
    assert ctrl.closure_violations() == 0 and ctrl.is_fixed_point()
    again = safety_fixed_point(ctrl.game, ctrl.winning)
    assert np.array_equal(again.winning, ctrl.winning) and again.iterations == 1


def test_composed_controller_matches_oracle():
    net = small_ring(2, box=(-1, 1), z_max=2, a=-2.0, r=0.3, b=0.1, q=0.1, d=1.0, dbar=1.0)
    comp = compositional_model(net, AbstractionConfig(0.25))
    assert comp.arena().exact
    ctrl = synthesize(comp, SafeSet({1: Box([-1], [0.5]), 2: Box([-1], [1])}))
    assert sum(1 for v in ctrl.removed if v) > 2
    oracle = ComposedOracle(net, 0.25)
    br = oracle.branches()

    def is_safe(s):
        parts = [divmod(p, o.zh + 1)[0] for p, o in zip(np.unravel_index(s, oracle.counts), oracle.comp)]
        return oracle.comp[0].X[parts[0]][0] <= 0.5 + 1e-9

    W, policy = oracle_fixed_point(comp.n_states, br, is_safe)
    assert 0 < len(W) < sum(map(is_safe, range(comp.n_states)))
    idx, rows = ctrl.table()
    assert idx.tolist() == sorted(W)
    assert [np.nonzero(r)[0].tolist() for r in rows] == [policy[s] for s in sorted(W)]
    assert ctrl.closure_violations() == 0


@pytest.fixture(scope="module")
def coarse(ring3):
    comp = compositional_model(ring3, AbstractionConfig(2.5))
    return comp, synthesize_model(comp, ring3)


def test_coarse_ring_controller(coarse):
    comp, ctrl = coarse
    arena = comp.arena()
    assert not ctrl.empty
    origin = int(np.ravel_multi_index((2, 2, 2), arena.grid_shape))
    assert ctrl.winning[..., origin].all()
    assert ctrl.is_fixed_point() and ctrl.closure_violations() == 0


def test_refinement_snaps_to_nearest_lattice_point(coarse):
    comp, ctrl = coarse
    pol = refine_controller(ctrl)
    c = (0, 0, 0)
    on = pol.admissible([[0.0], [2.5], [-2.5]], c)
    off = pol.admissible([[0.3 * 2.5], [2.5 - 0.3 * 2.5], [-2.5 + 0.3 * 2.5]], c)
    assert on.tolist() == off.tolist() and len(on)
    assert pol([[0.0], [2.5], [-2.5]], c) == on[0]
    assert [v.tolist() for v in pol.input_values(0, [m.inputs for m in comp.models])] == [[-1.0]] * 3
    with pytest.raises(UnsafeRegionError):
        pol([[6.0], [0.0], [0.0]], c)


def test_empty_winning_set():
    net = small_ring(2, box=(-1, 1), z_max=2, a=2.0, r=1.5)
    comp = compositional_model(net, AbstractionConfig(0.5))
    ctrl = synthesize(comp, SafeSet({1: Box([0], [0]), 2: Box([0], [0])}))
    assert ctrl.empty and ctrl.size == 0
    with pytest.raises(UnsafeRegionError):
        refine_controller(ctrl)
