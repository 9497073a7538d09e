"""Tracking laws, input realization and the integrated controller.

The controller keeps two open-loop copies of the nominal model (the full one
driven by ``u`` and the primary one driven by ``u_p``), a tracking law that
produces ``u_p`` from the primary estimate and the lumped disturbance, a
realization ``v`` of ``u_p`` through the inverse of ``C(s)``, and the
saturated input chain producing ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import InputChain, TransformedSystem, integrate_stream, primary_drift
from .engine import DynamicBlock, Signal, SimulationAbort, rk4_step
from .lti import TransferFunction, compose, proper_inverse, realize

__all__ = [
    "ReferenceSignal",
    "ApproxDifferentiator",
    "approx_derivative",
    "rohrs_law",
    "nonlinear_law",
    "scalar_tracking_law",
    "DifferentiatorScheme",
    "InversionScheme",
    "twocart_law",
    "realize_input",
    "ControllerStack",
    "controller_step",
]


@dataclass(frozen=True)
class ReferenceSignal:
    r: Callable[[float], float]
    rdot: Callable[[float], float]
    name: str = "custom"

    def __call__(self, t):
        return self.r(t), self.rdot(t)

    @classmethod
    def step(cls, level=0.5):
        return cls(lambda t: level, lambda t: 0.0, "step")

    @classmethod
    def sine(cls, amplitude=0.5, omega=0.2):
        return cls(lambda t: amplitude * math.sin(omega * t),
                   lambda t: amplitude * omega * math.cos(omega * t), "sine")

    @classmethod
    def zero(cls):
        return cls(lambda t: 0.0, lambda t: 0.0, "zero")


@dataclass(frozen=True)
class ApproxDifferentiator:
    """``s / (T s + 1)`` with state ``w``: ``w' = (x - w)/T``, output ``(x - w)/T``."""

    time_constant: float = 0.1

    def output(self, w, x):
        return (x - w) / self.time_constant

    def derivative(self, w, x):
        return (x - w) / self.time_constant


def approx_derivative(x: Signal, time_constant: float = 0.1) -> Signal:
    """Filter a sampled stream through ``s / (T s + 1)`` from a zero state."""
    diff = ApproxDifferentiator(time_constant)
    w = integrate_stream(lambda t, w, xk: diff.derivative(w, xk), [0.0], x.dt,
                         len(x) - 1, [x])[:, 0]
    return Signal(x.dt, diff.output(w, np.asarray(x.values)), x.start)


def rohrs_law(x_p, r, rdot, d_new, d_new_dot, theta_hat=0.0):
    """``u_p = ((2 + theta_hat) x_p + r + r' - d_new - d_new') / 2``."""
    return 0.5 * ((2.0 + theta_hat) * x_p + r + rdot - d_new - d_new_dot)


def nonlinear_law(x_p, r, rdot, d_new, d_new_dot, theta_hat=0.0):
    """``u_p = (1 + theta_hat) x_p^3 + r' + r - d_new' - d_new``."""
    return (1.0 + theta_hat) * x_p ** 3 + rdot + r - d_new_dot - d_new


def scalar_tracking_law(f_primary, b, t, x_p, r, rdot, d_new, d_new_dot):
    """Law placing ``e = x_p + d_new - r`` on ``e' = -e`` for a scalar primary.

    Both benchmark laws above are instances of this one.
    """
    return (-float(f_primary(t, np.atleast_1d(x_p))[0]) - x_p
            + r + rdot - d_new - d_new_dot) / b


class DifferentiatorScheme:
    """Scalar law plus ``v = C^{-1} u_p`` with filtered derivatives.

    ``d_new'`` and ``u_p'`` come from :class:`ApproxDifferentiator`; ``C``
    must be first order, ``k / (T s + 1)``, so that ``v = (T u_p' + u_p) / k``.
    """

    def __init__(self, law, C: TransferFunction, time_constant: float = 0.1):
        if C.order != 1 or len(C.num) != 1:
            raise ValueError("DifferentiatorScheme needs a first-order all-pole C(s)")
        self.law = law
        self.diff = ApproxDifferentiator(time_constant)
        # C = num0 / (s + p)  ->  C^{-1} = (s + p) / num0
        self.inv_lead = 1.0 / C.num[0]
        self.inv_const = C.den[1] / C.num[0]
        self.state_dim = 2

    def signals(self, t, w, x_p, d_hat, r, rdot):
        ddot = self.diff.output(w[0], d_hat)
        u_p = self.law(t, x_p, r, rdot, d_hat, ddot)
        updot = self.diff.output(w[1], u_p)
        v = self.inv_lead * updot + self.inv_const * u_p
        return u_p, v

    def derivative(self, t, w, d_hat, u_p, r):
        return np.array([self.diff.derivative(w[0], d_hat), self.diff.derivative(w[1], u_p)])


def _lowpass(order=5, base=10.0) -> TransferFunction:
    den = np.array([1.0])
    for k in range(1, order + 1):
        den = np.polymul(den, [1.0 / (base * k), 1.0])
    return TransferFunction([1.0], den)


class InversionScheme:
    """Feedforward inversion of the primary transfer function.

    ``u_p = Q G^{-1} (r - d_new)`` and ``v = Q C^{-1} G^{-1} (r - d_new)``,
    each realized as a single proper transfer function. ``Q`` defaults to the
    fifth-order roll-off ``1 / prod_{k=1..5} (s/(10k) + 1)``.
    """

    def __init__(self, G: TransferFunction, C: TransferFunction, Q: TransferFunction | None = None):
        Q = Q if Q is not None else _lowpass()
        self.G, self.C, self.Q = G, C, Q
        self.tf_up = proper_inverse(G, Q)
        self.tf_v = proper_inverse(compose([C, G], "series"), Q)
        self.ss_up = realize(self.tf_up)
        self.ss_v = realize(self.tf_v)
        self.n_up = self.ss_up.n
        self.state_dim = self.ss_up.n + self.ss_v.n

    def signals(self, t, w, x_p, d_hat, r, rdot):
        e = r - d_hat
        w1, w2 = w[:self.n_up], w[self.n_up:]
        u_p = float(self.ss_up.c_out @ w1) + self.ss_up.d_thru * e
        v = float(self.ss_v.c_out @ w2) + self.ss_v.d_thru * e
        return u_p, v

    def derivative(self, t, w, d_hat, u_p, r):
        e = r - d_hat
        w1, w2 = w[:self.n_up], w[self.n_up:]
        return np.concatenate([self.ss_up.A @ w1 + self.ss_up.b_in * e,
                               self.ss_v.A @ w2 + self.ss_v.b_in * e])


def twocart_law(scheme: InversionScheme, w, r, d_hat) -> float:
    """Compensator output ``u_p`` for compensator state ``w``."""
    return scheme.signals(0.0, w, None, d_hat, r, 0.0)[0]


def realize_input(u_p: Signal, C: TransferFunction, time_constant: float = 0.1) -> Signal:
    """``v = C^{-1}(s) u_p`` for first-order ``C = k/(T s + 1)``.

    The derivative of ``u_p`` is the filtered estimate ``s/(0.1 s + 1) u_p``.
    """
    if C.order != 1 or len(C.num) != 1:
        raise ValueError("realize_input needs a first-order all-pole C(s)")
    updot = approx_derivative(u_p, time_constant)
    v = (np.asarray(updot.values) + C.den[1] * np.asarray(u_p.values)) / C.num[0]
    return Signal(u_p.dt, v, u_p.start)


class ControllerStack:
    """All controller-side state for one closed loop.

    State layout: ``[x_new_hat, x_p_hat, z, scheme state]``, all zero at start.
    The per-instant evaluation order is observer, law, realization, chain.
    """

    def __init__(self, model: TransformedSystem, chain: InputChain, scheme,
                 reference: ReferenceSignal, decomposition: str = "standard", A_primary=None):
        self.model = model
        self.chain = chain
        self.scheme = scheme
        self.reference = reference
        self.f_p = primary_drift(model, decomposition, A_primary)
        n, nz = model.n, chain.nz
        self._sl_new = slice(0, n)
        self._sl_p = slice(n, 2 * n)
        self._sl_z = slice(2 * n, 2 * n + nz)
        self._sl_w = slice(2 * n + nz, 2 * n + nz + scheme.state_dim)
        self.state_dim = 2 * n + nz + scheme.state_dim
        self.state = np.zeros(self.state_dim)
        self.t = 0.0

    def x0(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def signals(self, t, s, y) -> dict:
        xn = s[self._sl_new]
        xp = s[self._sl_p]
        z = s[self._sl_z]
        w = s[self._sl_w]
        d_hat = y - float(self.model.c_out @ xn)
        r, rdot = self.reference(t)
        x_p_scalar = xp[0] if xp.size == 1 else xp
        u_p, v = self.scheme.signals(t, w, x_p_scalar, d_hat, r, rdot)
        chain = self.chain
        sv = chain.sat(v)
        u = float(chain.c_z @ z) + chain.d_z * sv
        for label, val in (("observer", d_hat), ("law", u_p), ("realization", v), ("chain", u)):
            if not math.isfinite(val):
                raise SimulationAbort(f"non-finite value at stage {label!r}, t={t:.6g}",
                                      block="controller", time=t, stage=label)
        return {"u": u, "u_p": u_p, "v": v, "sat_v": sv, "d_new_hat": d_hat, "r": r,
                "x_new_hat": xn, "x_p_hat": xp, "z": z}

    def derivative(self, t, s, sig) -> np.ndarray:
        model, b = self.model, self.model.b_in
        xn = s[self._sl_new]
        xp = s[self._sl_p]
        z = s[self._sl_z]
        w = s[self._sl_w]
        chain = self.chain
        dw = self.scheme.derivative(t, w, sig["d_new_hat"], sig["u_p"], sig["r"])
        return np.concatenate([
            model.f(t, xn) + b * sig["u"],
            self.f_p(t, xp) + b * sig["u_p"],
            chain.A_z @ z + chain.b_z * sig["sat_v"],
            dw,
        ])

    def as_block(self, name="controller", y="y") -> DynamicBlock:
        return DynamicBlock(
            name,
            outputs=("u", "u_p", "v", "sat_v", "d_new_hat", "r", "x_new_hat", "x_p_hat", "z"),
            inputs=(y,),
            output=lambda t, s, sig: self.signals(t, s, sig[y]),
            derivative=self.derivative,
            x0=self.x0(),
            feedthrough=True)

    def step(self, y: float, dt: float) -> dict:
        """Sampled-data use: hold ``y`` over ``[t, t + dt]`` and advance.

        Returns the signals evaluated at the start of the interval, i.e. the
        ``u`` to apply over it.
        """
        t = self.t
        out = self.signals(t, self.state, y)
        f = lambda tt, s, _u: self.derivative(tt, s, self.signals(tt, s, y))
        self.state = rk4_step(f, self.state, t, dt)
        self.t = t + dt
        return out


def controller_step(stack: ControllerStack, y: float, t: float, dt: float) -> dict:
    if abs(stack.t - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"controller clock is at {stack.t}, step requested at {t}")
    return stack.step(y, dt)
