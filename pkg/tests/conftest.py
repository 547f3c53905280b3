import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from impulsive_abstraction.model import AffineDynamics, Box, ImpulsiveSubsystem, JumpTiming, NetworkModel, \
    ring_network, warehouses

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE = {}


def scalar_subsystem(sid=1, a=-1.0, b=0.0, d=1.0, r=0.05, q=0.0, dbar=1.0, box=(-5.0, 5.0), w_box=None,
                     inputs=(-1.0, 1.0), tau=0.2, z_min=1, z_max=10, outputs=None, instants=None, bias=0.0):
    lo, hi = box
    if w_box is None:
        wb = Box(np.zeros(0), np.zeros(0))
        B = np.zeros((1, 0))
        Q = np.zeros((1, 0))
    else:
        wb = Box.from_intervals(w_box)
        B = np.reshape(b, (1, -1))
        Q = np.reshape(q, (1, -1))
    return ImpulsiveSubsystem(
        sid, AffineDynamics([[a]], B, [[d]], [bias]), AffineDynamics([[r]], Q, [[dbar]]),
        Box([lo], [hi]), wb, [[v] for v in inputs], JumpTiming(tau, z_min, z_max, instants),
        outputs or {sid: [[1.0]]})


def small_ring(n=2, box=(-1.0, 1.0), z_max=2, z_min=1, inputs=(-1.0, 1.0), **over):
    params = []
    base = [dict(a=-1.0, b=0.3, d=0.5, r=0.1, q=0.2, dbar=0.5),
            dict(a=-1.5, b=0.2, d=0.4, r=0.2, q=0.3, dbar=0.4),
            dict(a=-0.8, b=0.25, d=0.3, r=0.05, q=0.1, dbar=0.6)]
    for k in range(n):
        p = dict(base[k % 3])
        p.update(over)
        params.append(p)
    return ring_network(params, state_box=box, z_min=z_min, z_max=z_max, inputs=inputs)


@pytest.fixture(scope="session")
def ring3():
    return warehouses(3)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
