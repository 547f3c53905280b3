"""Incremental stability constants and local simulation-function parameters.

Every comparison function is a linear gain and is stored as its coefficient.
The local simulation function of a subsystem is ``V(x, xh) = ||x - xh||_inf``
reweighted by a counter-dependent factor (see :class:`AsfCase`).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np

from .errors import ConstructionError, NoAsfCaseError, StructureError
from .model import ImpulsiveSubsystem, JumpTiming


@dataclass(frozen=True)
class CertificateParams:
    alpha_lower: float
    alpha_upper: float
    kappa_c: float
    kappa_d: float
    rho_wc: float
    rho_wd: float
    rho_uc: float
    rho_ud: float
    gamma_hat: float = 1.0
    lipschitz_L: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        if self.alpha_lower > self.alpha_upper:
            raise StructureError("alpha_lower must not exceed alpha_upper")
        gains = ("alpha_lower", "alpha_upper", "rho_wc", "rho_wd", "rho_uc", "rho_ud",
                 "gamma_hat", "lipschitz_L", "phi", "kappa_d")
        for name in gains:
            if getattr(self, name) < 0:
                raise StructureError(f"{name} must be nonnegative")

    @classmethod
    def from_mapping(cls, data: Mapping, phi: float = 0.0) -> "CertificateParams":
        data = dict(data)
        data.setdefault("phi", phi)
        return cls(**{k: float(v) for k, v in data.items()})


def derive_affine_certificate(sub: ImpulsiveSubsystem, phi: float = 0.0) -> CertificateParams:
    """Constants for ``V = |x - x'|`` on a scalar affine subsystem.

    Gains on vector-valued internal or external inputs use the induced
    infinity norm (absolute row sums), which reduces to ``|b|`` etc. for
    scalar inputs.  Multidimensional subsystems must carry a hand-entered
    certificate.
    """
    if sub.state_dim != 1:
        if sub.certificate is not None:
            return CertificateParams.from_mapping(sub.certificate, phi)
        raise StructureError(f"subsystem {sub.id}: certificate must be user-supplied for n > 1")
    f, g = sub.flow, sub.jump
    row = lambda m: float(np.abs(m).sum()) if m.size else 0.0
    return CertificateParams(
        alpha_lower=1.0, alpha_upper=1.0,
        kappa_c=-float(f.A[0, 0]), kappa_d=abs(float(g.A[0, 0])),
        rho_wc=row(f.B), rho_wd=row(g.B), rho_uc=row(f.D), rho_ud=row(g.D),
        gamma_hat=1.0, lipschitz_L=sub.output_lipschitz(), phi=phi)


@dataclass(frozen=True)
class DwellReport:
    values: dict           # counter -> ln(kappa_d) - kappa_c * tau * c
    holds: bool
    trivial: bool = False

    def __str__(self):
        if self.trivial:
            return "kappa_d = 0: dwell-time condition trivially satisfied"
        body = ", ".join(f"c={c}: {v:.6g}" for c, v in self.values.items())
        return f"{body} -> {'holds' if self.holds else 'fails'}"


def check_dwell_time(cert: CertificateParams, timing: JumpTiming) -> DwellReport:
    if cert.kappa_d == 0:
        return DwellReport({}, True, trivial=True)
    counters = sorted({timing.z_min, timing.z_max})
    values = {c: math.log(cert.kappa_d) - cert.kappa_c * timing.tau * c for c in counters}
    return DwellReport(values, all(v < 0 for v in values.values()))


class AsfKind(enum.Enum):
    STABLE_STABLE = "stable-stable"      # kappa_d < 1, kappa_c > 0
    UNSTABLE_JUMP = "unstable-jump"      # kappa_d >= 1, kappa_c > 0
    UNSTABLE_FLOW = "unstable-flow"      # kappa_d < 1, kappa_c <= 0


@dataclass(frozen=True)
class AsfCase:
    kind: AsfKind
    epsilon: float = 0.5
    delta: float = 11.0


def select_asf_case(cert: CertificateParams, timing: JumpTiming, epsilon: float = 0.5,
                    delta: Optional[float] = None) -> AsfCase:
    delta = timing.z_max + 1.0 if delta is None else float(delta)
    if not 0 < epsilon < 1:
        raise StructureError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not delta > timing.z_max:
        raise StructureError(f"delta must exceed z_max={timing.z_max}, got {delta}")
    kc, kd = cert.kappa_c, cert.kappa_d
    if kd < 1 and kc > 0:
        kind = AsfKind.STABLE_STABLE
    elif kd >= 1 and kc > 0:
        kind = AsfKind.UNSTABLE_JUMP
    elif kd < 1 and kc <= 0:
        kind = AsfKind.UNSTABLE_FLOW
    else:
        raise NoAsfCaseError(f"no applicable ASF case for kappa_c={kc}, kappa_d={kd}")
    return AsfCase(kind, float(epsilon), delta)


def asf_weight(case: AsfCase, c: int, cert: CertificateParams, timing: JumpTiming) -> float:
    """Factor multiplying V at counter c (the reciprocal of the divisor)."""
    if case.kind is AsfKind.STABLE_STABLE:
        return 1.0
    if case.kind is AsfKind.UNSTABLE_JUMP:
        return math.exp(cert.kappa_c * timing.tau * case.epsilon * c)
    if c == 0:
        return 1.0
    return cert.kappa_d ** (c / case.delta)


def eval_asf(v: float, case: AsfCase, c: int, cert: CertificateParams, timing: JumpTiming) -> float:
    if v < 0:
        raise StructureError("V must be nonnegative")
    if not 0 <= c <= timing.z_max:
        raise StructureError(f"counter {c} outside [0, {timing.z_max}]")
    if case.kind is AsfKind.STABLE_STABLE:
        return v
    if case.kind is AsfKind.UNSTABLE_JUMP:
        return v / math.exp(-cert.kappa_c * timing.tau * case.epsilon * c)
    if c == 0:
        return v
    return v / cert.kappa_d ** (-c / case.delta)


@dataclass(frozen=True)
class LocalAsfParams:
    alpha: float
    sigma_bar: float
    rho_w_bar: float
    rho_u_bar: float
    eps_bar: float
    psi_lemma: float
    sigma: float
    rho_w: float
    rho_u: float
    eps: float
    phi_hat: float = 0.0

    @classmethod
    def from_additive(cls, alpha, sigma_bar, rho_w_bar, rho_u_bar, eps_bar, psi_lemma, phi_hat=0.0):
        """Convert additive-form parameters to the max form (additive-to-max lemma)."""
        if not 0 < psi_lemma < 1:
            raise StructureError(f"psi must lie in (0, 1), got {psi_lemma}")
        if not 0 <= sigma_bar < 1:
            raise ConstructionError(
                f"construction fails: contraction lost at chosen tau/epsilon/delta (sigma_bar={sigma_bar:.6g})")
        k = (1.0 - sigma_bar) * psi_lemma
        return cls(alpha=alpha, sigma_bar=sigma_bar, rho_w_bar=rho_w_bar, rho_u_bar=rho_u_bar,
                   eps_bar=eps_bar, psi_lemma=psi_lemma,
                   sigma=1.0 - (1.0 - psi_lemma) * (1.0 - sigma_bar),
                   rho_w=rho_w_bar / k, rho_u=rho_u_bar / k, eps=eps_bar / k, phi_hat=phi_hat)

    def with_eps_bar(self, eps_bar: float) -> "LocalAsfParams":
        return LocalAsfParams.from_additive(self.alpha, self.sigma_bar, self.rho_w_bar, self.rho_u_bar,
                                            eps_bar, self.psi_lemma, self.phi_hat)


def flow_gain(kappa_c: float, tau: float) -> float:
    """``(1 - exp(-kappa_c tau)) / kappa_c``, with limit ``tau`` at ``kappa_c = 0``."""
    if abs(kappa_c * tau) < 1e-12:
        return tau
    return -math.expm1(-kappa_c * tau) / kappa_c


def mismatch_constant(cert: CertificateParams, timing: JumpTiming, eta_x: float, eta_w: float,
                      eta_u: float) -> float:
    """Quantization-induced slack per step, used as the additive offset.

    ``gamma_hat(eta_x) + max(flow mismatch, jump mismatch)`` where the flow part
    integrates the internal-input variation ``phi + eta_w`` and the input
    quantization over one period.
    """
    flow = flow_gain(cert.kappa_c, timing.tau) * (cert.rho_wc * (cert.phi + eta_w) + cert.rho_uc * eta_u)
    jump = cert.rho_wd * eta_w + cert.rho_ud * eta_u
    return cert.gamma_hat * eta_x + max(flow, jump)


def derive_local_asf(cert: CertificateParams, case: AsfCase, timing: JumpTiming, eta_x: float,
                     eta_w: float, eta_u: float = 0.0, psi_lemma: float = 0.99) -> LocalAsfParams:
    if min(eta_x, eta_w, eta_u) < 0 or eta_x <= 0:
        raise StructureError("quantization parameters must be positive")
    kc, kd, tau = cert.kappa_c, cert.kappa_d, timing.tau
    phi_hat = mismatch_constant(cert, timing, eta_x, eta_w, eta_u)
    rho_w_bar = max(cert.rho_wc * max(1.0, flow_gain(kc, tau)), cert.rho_wd)
    alpha = cert.alpha_lower / cert.lipschitz_L if cert.lipschitz_L > 0 else cert.alpha_lower
    jump_counters = range(timing.z_min, timing.z_max + 1)
    eps = case.epsilon
    if case.kind is AsfKind.STABLE_STABLE:
        sigma_bar = max(math.exp(-kc * tau), kd)
        eps_bar = phi_hat
    elif case.kind is AsfKind.UNSTABLE_JUMP:
        # weight exp(kc tau eps c): a flow step gains exp(kc tau eps) against exp(-kc tau),
        # a jump from counter c resets the weight to 1
        sigma_bar = max(math.exp(-kc * tau * (1 - eps)),
                        max(kd * math.exp(-kc * tau * eps * c) for c in jump_counters))
        growth = math.exp(kc * tau * eps * (timing.z_max + 1))
        eps_bar = growth * phi_hat
        rho_w_bar *= growth
    else:
        # weight kd**(c/delta) <= 1
        d = case.delta
        sigma_bar = max(math.exp(-kc * tau) * kd ** (1 / d),
                        max(kd ** ((d - c) / d) for c in jump_counters))
        eps_bar = phi_hat
        alpha *= kd ** (timing.z_max / d)
    if alpha <= 0:
        raise ConstructionError("simulation-function lower bound degenerates to zero")
    return LocalAsfParams.from_additive(alpha, sigma_bar, rho_w_bar, 0.0, eps_bar, psi_lemma, phi_hat)


@dataclass(frozen=True)
class ComposedAsf:
    """Linear-gain parameters of a simulation function for the whole network."""

    alpha: float
    sigma: float
    rho_u: float
    eps: float


@dataclass(frozen=True)
class PrecisionBound:
    input_bound: float
    eps_hat: float


def precision_bound(composed: ComposedAsf, input_bound: float) -> PrecisionBound:
    """``eps_hat = alpha^-1(max(rho_u(r), eps))`` for linear gains."""
    if not composed.alpha > 0:
        raise StructureError("alpha coefficient must be positive to invert")
    if input_bound < 0:
        raise StructureError("input bound must be nonnegative")
    return PrecisionBound(float(input_bound), max(composed.rho_u * input_bound, composed.eps) / composed.alpha)


@dataclass(frozen=True)
class CertificateBundle:
    """Everything certified about one subsystem."""

    subsystem_id: int
    params: CertificateParams
    dwell: DwellReport
    case: AsfCase
    local: LocalAsfParams
    timing: JumpTiming

    def value(self, v: float, c: int) -> float:
        return eval_asf(v, self.case, c, self.params, self.timing)

    def with_eps_bar(self, eps_bar: float) -> "CertificateBundle":
        return replace(self, local=self.local.with_eps_bar(eps_bar))
