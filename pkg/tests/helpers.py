"""Shared harnesses for the test modules."""

import math

import numpy as np

from asdtrack.engine import rk4_step


def primary_loop_error(law, drift, b, x_p0, r, rdot, d, ddot, horizon=10.0, dt=1e-3):
    """``y_p - r`` for the primary loop with exact ``d_new`` and derivatives.

    ``x_p' = drift(x_p) + b u_p``, ``u_p = law(x_p, r, r', d, d')``,
    ``y_p = x_p + d``. Returns ``(t, e)``.
    """
    def f(t, x, _):
        up = law(x[0], r(t), rdot(t), d(t), ddot(t))
        return np.array([drift(x[0]) + b * up])

    n = int(round(horizon / dt))
    x = np.array([x_p0])
    e = np.empty(n + 1)
    for k in range(n + 1):
        t = k * dt
        e[k] = x[0] + d(t) - r(t)
        if k < n:
            x = rk4_step(f, x, t, dt)
    return dt * np.arange(n + 1), e


def d_smooth(t):
    return 0.3 + 0.2 * math.sin(0.5 * t)


def d_smooth_dot(t):
    return 0.1 * math.cos(0.5 * t)
