import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from impulsive_abstraction.integrators import affine_flow_maps, rk4, scalar_affine_solution


def test_decay_to_one_over_e():
    x = rk4(lambda x: -x, [1.0], 1.0, steps=32)
    assert abs(x[0] - math.exp(-1)) < 1e-6


@pytest.mark.parametrize("a", [-1.0, -3.0, 0.7])
def test_rk4_fourth_order(a):
    exact = scalar_affine_solution(a, 0.5, 1.0, 1.0)
    errs = [abs(rk4(lambda x: a * x + 0.5, [1.0], 1.0, steps=s)[0] - exact) for s in (8, 16, 32)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 12 < coarse / fine < 20


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.01, 1.0))
@example(5e-324, 1.0, 0.5)   # a * tau underflows to zero
@example(5e-324, 0.5, 1.0)   # v * expm1(a * tau) underflows
def test_scalar_maps_match_closed_form(a, v, tau):
    Phi, Gam = affine_flow_maps([[a]], tau)
    x0 = 0.7
    assert Phi[0, 0] * x0 + Gam[0, 0] * v == pytest.approx(scalar_affine_solution(a, v, x0, tau), abs=1e-12)


def test_matrix_maps_match_rk4_transfer():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3)) - 2 * np.eye(3)
    v = rng.normal(size=3)
    x0 = rng.normal(size=3)
    Phi, Gam = affine_flow_maps(A, 0.2, steps=16)
    x = rk4(lambda x: A @ x + v, x0, 0.2, steps=16)
    assert np.allclose(Phi @ x0 + Gam @ v, x, atol=1e-13)
    Pe, Ge = affine_flow_maps(A, 0.2)
    assert np.allclose(Pe @ x0 + Ge @ v, x, atol=1e-9)


def test_zero_rate_is_integration():
    Phi, Gam = affine_flow_maps([[0.0]], 0.3)
    assert Phi[0, 0] == 1.0 and Gam[0, 0] == pytest.approx(0.3)
    assert scalar_affine_solution(0.0, 2.0, 1.0, 0.5) == 2.0
