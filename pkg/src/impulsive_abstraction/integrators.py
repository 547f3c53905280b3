"""Flow maps for affine ODEs and a fixed-step RK4 integrator."""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def affine_flow_maps(A, tau: float, steps: int = 0):
    """Return ``(Phi, Gamma)`` with ``x(tau) = Phi x0 + Gamma v`` for ``x' = A x + v``, v constant.

    ``steps == 0`` uses the matrix exponential of the augmented system.
    ``steps > 0`` returns the exact transfer of ``steps`` classical RK4 steps,
    which is what :func:`rk4` would produce on the same ODE.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if n == 1 and steps <= 0:
        a = float(A[0, 0])
        gam = tau if a * tau == 0 else float(np.expm1(a * tau) / a)
        return np.array([[np.exp(a * tau)]]), np.array([[gam]])
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    if steps <= 0:
        E = expm(M * tau)
    else:
        hM = M * (tau / steps)
        step = np.eye(2 * n)
        term = np.eye(2 * n)
        for k in range(1, 5):
            term = term @ hM / k
            step = step + term
        E = np.linalg.matrix_power(step, steps)
    return E[:n, :n], E[:n, n:]


def rk4(rhs, x0, tau: float, steps: int = 32):
    """Integrate ``x' = rhs(x)`` over ``[0, tau]`` with ``steps`` RK4 steps."""
    x = np.array(x0, dtype=float)
    h = tau / steps
    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def scalar_affine_solution(a: float, v: float, x0: float, t: float) -> float:
    """Exact solution of ``x' = a x + v`` at time t."""
    if a * t == 0:
        return x0 + v * t
    e = np.exp(a * t)
    return float(e * x0 + v * (np.expm1(a * t) / a))
