import math

import pytest
from hypothesis import given, strategies as st

from impulsive_abstraction.certificates import (AsfCase, AsfKind, CertificateParams, ComposedAsf, LocalAsfParams,
                                                check_dwell_time, derive_affine_certificate, derive_local_asf,
                                                eval_asf, mismatch_constant, precision_bound, select_asf_case)
from impulsive_abstraction.errors import ConstructionError, NoAsfCaseError, StructureError
from impulsive_abstraction.model import JumpTiming

from conftest import scalar_subsystem

T = JumpTiming(0.2, 1, 10)


def cert(kc, kd, **kw):
    base = dict(alpha_lower=1, alpha_upper=1, kappa_c=kc, kappa_d=kd, rho_wc=0.4, rho_wd=0.4, rho_uc=1, rho_ud=1)
    base.update(kw)
    return CertificateParams(**base)


def test_affine_certificate_of_first_warehouse(ring3):
    c = derive_affine_certificate(ring3.by_id(1))
    assert (c.kappa_c, c.kappa_d, c.rho_wc, c.rho_wd, c.rho_uc, c.rho_ud) == (1, 0.05, 0.4, 0.4, 1, 1)
    c3 = derive_affine_certificate(ring3.by_id(3))
    assert (c3.kappa_c, c3.kappa_d) == (2, 0.08)


def test_zero_dynamics_certificate():
    c = derive_affine_certificate(scalar_subsystem(a=0.0, r=0.0))
    assert c.kappa_c == 0 and c.kappa_d == 0


def test_multidimensional_needs_supplied_certificate():
    from impulsive_abstraction.model import AffineDynamics, Box, ImpulsiveSubsystem
    import numpy as np
    sub = ImpulsiveSubsystem(1, AffineDynamics(-np.eye(2), np.zeros((2, 0)), np.eye(2)),
                             AffineDynamics(0.1 * np.eye(2), np.zeros((2, 0)), np.eye(2)),
                             Box([-1, -1], [1, 1]), Box(np.zeros(0), np.zeros(0)), [[0, 0]], T, {1: np.eye(2)})
    with pytest.raises(StructureError):
        derive_affine_certificate(sub)


def test_dwell_examples():
    rep = check_dwell_time(cert(1, 0.05), T)
    assert rep.holds
    assert rep.values[1] == pytest.approx(math.log(0.05) - 0.2, abs=1e-12)
    assert rep.values[1] == pytest.approx(-3.196, abs=1e-3)
    assert rep.values[10] == pytest.approx(-4.996, abs=1e-3)
    assert not check_dwell_time(cert(0, 1), T).holds
    bad = check_dwell_time(cert(1, 2), T)
    assert not bad.holds and bad.values[1] == pytest.approx(0.493, abs=1e-3)


@given(st.floats(0.01, 5), st.floats(0.01, 3), st.floats(0.01, 1), st.floats(0.0, 2))
def test_dwell_monotone_in_tau(kc, kd, tau, extra):
    c = cert(kc, kd)
    if check_dwell_time(c, JumpTiming(tau, 1, 10)).holds:
        assert check_dwell_time(c, JumpTiming(tau + extra, 1, 10)).holds


def test_case_selection():
    assert select_asf_case(cert(1, 0.05), T).kind is AsfKind.STABLE_STABLE
    assert select_asf_case(cert(0.5, 1.2), T).kind is AsfKind.UNSTABLE_JUMP
    assert select_asf_case(cert(-0.5, 0.5), T).kind is AsfKind.UNSTABLE_FLOW
    with pytest.raises(NoAsfCaseError, match="no applicable ASF case"):
        select_asf_case(cert(-0.5, 1.5), T)
    with pytest.raises(StructureError):
        select_asf_case(cert(1, 0.05), T, epsilon=1.0)
    with pytest.raises(StructureError):
        select_asf_case(cert(1, 0.05), T, delta=10)
    case = select_asf_case(cert(1, 0.05), T)
    assert case.epsilon == 0.5 and case.delta == 11


def test_asf_values():
    stable = AsfCase(AsfKind.STABLE_STABLE)
    assert eval_asf(0.7, stable, 4, cert(1, 0.05), T) == 0.7
    jump = AsfCase(AsfKind.UNSTABLE_JUMP, 0.5)
    assert eval_asf(1.0, jump, 3, cert(1, 1.2), T) == pytest.approx(math.exp(0.3), abs=1e-12)
    assert eval_asf(1.0, jump, 3, cert(1, 1.2), T) == pytest.approx(1.3499, abs=1e-4)
    for case in (stable, jump, AsfCase(AsfKind.UNSTABLE_FLOW, 0.5, 11)):
        assert eval_asf(2.5, case, 0, cert(1, 0.5), T) == 2.5


@given(st.floats(0, 100), st.integers(0, 10), st.floats(0.01, 4), st.floats(0.01, 0.99), st.floats(1.01, 5))
def test_asf_dominates_v_where_divisors_are_at_most_one(v, c, kc, eps, kd_big):
    assert eval_asf(v, AsfCase(AsfKind.STABLE_STABLE), c, cert(kc, 0.5), T) >= v
    assert eval_asf(v, AsfCase(AsfKind.UNSTABLE_JUMP, eps), c, cert(kc, kd_big), T) >= v
    # the unstable-flow weight kd^(c/delta) is below one
    assert eval_asf(v, AsfCase(AsfKind.UNSTABLE_FLOW, eps, 11), c, cert(-kc, 0.5), T) <= v


def test_additive_to_max_conversion_examples():
    p = LocalAsfParams.from_additive(1.0, 0.0, 0.0, 0.0, 0.0, 0.7)
    assert p.sigma == pytest.approx(0.7, abs=1e-15)
    sb = math.exp(-0.2)
    p = LocalAsfParams.from_additive(1.0, sb, 0.4, 0.0, 0.0, 0.99)
    assert p.sigma == pytest.approx(0.99819, abs=1e-5)
    assert p.rho_w == pytest.approx(0.4 / ((1 - sb) * 0.99), rel=1e-12)
    assert p.rho_w == pytest.approx(2.229, abs=1e-3)
    with pytest.raises(ConstructionError):
        LocalAsfParams.from_additive(1.0, 1.0, 0.4, 0.0, 0.0, 0.99)
    with pytest.raises(StructureError):
        LocalAsfParams.from_additive(1.0, 0.5, 0.4, 0.0, 0.0, 1.0)


def test_local_asf_of_first_warehouse(ring3):
    c = derive_affine_certificate(ring3.by_id(1), phi=2.6)
    loc = derive_local_asf(c, select_asf_case(c, T), T, 0.6667, 0.6667, 0.0, 0.99)
    assert loc.sigma_bar == pytest.approx(math.exp(-0.2), rel=1e-12)
    assert loc.rho_w_bar == pytest.approx(0.4, rel=1e-12)
    assert loc.alpha == 1.0
    g = (1 - math.exp(-0.2))
    assert loc.phi_hat == pytest.approx(0.6667 + max(g * 0.4 * (2.6 + 0.6667), 0.4 * 0.6667), rel=1e-12)
    assert loc.eps_bar == loc.phi_hat
    assert loc.eps_bar == pytest.approx(0.93338, abs=1e-5)


def test_mismatch_constant_zero_rate_limit():
    c = cert(0.0, 0.5, phi=1.0)
    t = JumpTiming(0.5, 1, 3)
    assert mismatch_constant(c, t, 0.1, 0.2, 0.0) == pytest.approx(0.1 + max(0.5 * 0.4 * 1.2, 0.4 * 0.2))


def test_precision_bound_examples():
    assert precision_bound(ComposedAsf(1.0, 0.5, 0.0, 0.3), 0.0).eps_hat == pytest.approx(0.3)
    assert precision_bound(ComposedAsf(2.0, 0.5, 0.5, 0.3), 2.0).eps_hat == pytest.approx(0.5)
    assert precision_bound(ComposedAsf(4.0, 0.5, 7.0, 0.3), 0.0).eps_hat == pytest.approx(0.3 / 4)
    with pytest.raises(StructureError):
        precision_bound(ComposedAsf(0.0, 0.5, 0.5, 0.3), 1.0)


def test_unstable_cases_build_contractive_parameters():
    t = JumpTiming(0.2, 5, 10)
    c = cert(2.0, 1.2)
    loc = derive_local_asf(c, select_asf_case(c, t), t, 0.1, 0.1)
    assert 0 < loc.sigma_bar < 1
    c = cert(-0.2, 0.1)
    loc = derive_local_asf(c, select_asf_case(c, t), t, 0.1, 0.1)
    assert 0 < loc.sigma_bar < 1
    c = cert(0.01, 5.0)
    with pytest.raises(ConstructionError):
        derive_local_asf(c, select_asf_case(c, T), T, 0.1, 0.1)
