"""Independent reference computations from the integral definitions."""

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm


def decay_horizon(A, tol=1e-12):
    t = 1.0
    while np.linalg.norm(expm(A * t), 2) >= tol:
        t *= 2
    return t


def gramian_quadrature(A, M):
    """``int_0^inf e^{At} M e^{A^T t} dt`` truncated where ``|e^{At}|`` < 1e-12."""
    t_end = decay_horizon(A)

    def f(t):
        E = expm(A * t)
        return E @ M @ E.T

    val, _ = quad_vec(f, 0.0, t_end, epsabs=1e-14, epsrel=1e-11, limit=2000)
    return val


def output_energy_quadrature(A, C, y):
    """``int_0^inf |C e^{At} y|^2 dt``."""
    t_end = decay_horizon(A)
    val, _ = quad_vec(lambda t: np.sum((C @ expm(A * t) @ y) ** 2), 0.0, t_end, epsabs=1e-14, epsrel=1e-11)
    return float(val)
