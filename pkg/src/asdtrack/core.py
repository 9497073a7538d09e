"""Input redefinition, the uncertainty-free model and its observers.

The uncertain plant

    x' = f(t, x, theta) + b * u_xi + d,   y = c @ x,   u_xi = H(s) e^{-tau s} u

is driven through a saturated, low-pass input chain ``u = C(s) sat_a(v)`` and
re-expressed as the nominal system

    x_new' = f(t, x_new, theta_hat) + b * u,  x_new(0) = 0,   y = c @ x_new + d_new

whose state is reproduced exactly by an open-loop copy (the observer), so the
lumped disturbance ``d_new = y - c @ x_new`` is available at every instant.
The nominal system is further split into a primary part driven by the
tracking input ``u_p`` and a secondary part driven by ``u - u_p``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .engine import DynamicBlock, Signal, saturate
from .lti import (
    TransferFunction,
    is_minimum_phase,
    realize,
    rk4_linear_map,
    stability_check,
)

__all__ = [
    "UncertainPlant",
    "TransformedSystem",
    "InputChain",
    "GainCertificate",
    "DecompositionTrace",
    "xi_bound",
    "build_input_chain",
    "filter_samples",
    "apply_channel",
    "transform",
    "observe_new",
    "decompose",
    "observe_primary",
    "lyapunov_gamma",
    "integrate_stream",
]


@dataclass
class UncertainPlant:
    """The true system, including everything the controller does not know."""

    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    b_in: np.ndarray
    c_out: np.ndarray
    x0: np.ndarray
    theta: Callable[[float], np.ndarray]
    disturbance: Callable[[float], np.ndarray]
    channel: TransferFunction = field(default_factory=lambda: TransferFunction.constant(1.0))
    delay: float = 0.0
    linear_matrix: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.b_in = np.atleast_1d(np.asarray(self.b_in, dtype=float))
        self.c_out = np.atleast_1d(np.asarray(self.c_out, dtype=float))
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if not (self.b_in.shape == self.c_out.shape == self.x0.shape):
            raise ValueError("b, c and x0 must have the same length")
        if self.delay < 0:
            raise ValueError("input delay must be nonnegative")

    @property
    def n(self) -> int:
        return self.x0.size

    def check(self, times=(0.0, 1.0, 10.0)) -> None:
        """Raise if ``f(t, 0, theta) != 0`` or the channel violates H(0) = 1."""
        zero = np.zeros(self.n)
        for t in times:
            if np.any(np.abs(self.drift(t, zero, self.theta(t))) > 1e-12):
                raise ValueError(f"drift is nonzero at the origin (t={t})")
        H = self.channel
        if not (H.is_proper and stability_check(H)):
            raise ValueError("input channel H(s) must be stable and proper")
        if abs(H.dc_gain - 1.0) > 1e-9:
            raise ValueError(f"input channel must satisfy H(0) = 1, got {H.dc_gain}")

    def derivative(self, t, x, u_xi):
        return self.drift(t, x, self.theta(t)) + self.b_in * u_xi + self.disturbance(t)


@dataclass
class TransformedSystem:
    """Nominal model with frozen parameter estimate; starts at the origin."""

    drift: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    theta_hat: np.ndarray
    b_in: np.ndarray
    c_out: np.ndarray

    @property
    def n(self) -> int:
        return self.b_in.size

    @property
    def x0(self) -> np.ndarray:
        return np.zeros(self.n)

    def f(self, t, x):
        return self.drift(t, x, self.theta_hat)

    def derivative(self, t, x, u):
        return self.drift(t, x, self.theta_hat) + self.b_in * u

    def output(self, x):
        return float(self.c_out @ x)


def transform(plant: UncertainPlant, theta_hat) -> TransformedSystem:
    return TransformedSystem(plant.drift, np.atleast_1d(np.asarray(theta_hat, dtype=float)),
                             plant.b_in.copy(), plant.c_out.copy())


def xi_bound(eps_h: float, eps_tau: float, tau: float, a: float) -> float:
    """Peak bound on the input-channel mismatch: ``(eps_H + tau*eps_tau) * a``."""
    if min(eps_h, eps_tau, tau, a) < 0:
        raise ValueError("xi_bound arguments must be nonnegative")
    return (eps_h + tau * eps_tau) * a


@dataclass
class InputChain:
    """``u = C(s) sat_a(v)`` in state form ``z' = A_z z + b_z sat(v)``."""

    C: TransferFunction
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("saturation level a must be positive")
        C = self.C
        if not C.is_proper:
            raise ValueError("C(s) must be proper")
        if not stability_check(C):
            raise ValueError("C(s) must be stable")
        if not C.is_zero and len(C.num) > 1 and not is_minimum_phase(C):
            raise ValueError("C(s) must be minimum phase")
        if abs(C.dc_gain - 1.0) > 1e-9:
            raise ValueError(f"C(s) must satisfy C(0) = 1, got {C.dc_gain}")
        ss = realize(C)
        self.A_z, self.b_z, self.c_z, self.d_z = ss.A, ss.b_in, ss.c_out, ss.d_thru

    @property
    def nz(self) -> int:
        return self.b_z.size

    def sat(self, v):
        return saturate(v, self.a)

    def derivative(self, t, z, v):
        return self.A_z @ z + self.b_z * saturate(v, self.a)

    def output(self, z, v):
        return float(self.c_z @ z) + self.d_z * saturate(v, self.a)

    def as_block(self, name="chain", v="v", u="u") -> DynamicBlock:
        return DynamicBlock(
            name, outputs=(u,), inputs=(v,),
            output=lambda t, z, sig: {u: self.output(z, sig[v])},
            derivative=lambda t, z, sig: self.derivative(t, z, sig[v]),
            x0=np.zeros(self.nz), feedthrough=self.d_z != 0.0)

    def run(self, v: Signal, split: bool = False):
        """Drive the chain with a sampled ``v``.

        Returns ``u`` and, with ``split``, the saturation decomposition
        ``(z, z_p, z_s, u_zp, u_zs)``: the primary copy sees ``v`` unsaturated
        and the secondary one the clipping error ``sat(v) - v``.
        """
        vs = np.asarray(v.values)
        sv = saturate(vs, self.a)
        z, u = _simulate_linear(self.A_z, self.b_z, self.c_z, self.d_z, sv, v.dt)
        if not split:
            return Signal(v.dt, u)
        zp, uzp = _simulate_linear(self.A_z, self.b_z, self.c_z, self.d_z, vs, v.dt)
        zs, uzs = _simulate_linear(self.A_z, self.b_z, self.c_z, self.d_z, sv - vs, v.dt)
        return Signal(v.dt, u), z, zp, zs, Signal(v.dt, uzp), Signal(v.dt, uzs)


def build_input_chain(C: TransferFunction, a: float) -> InputChain:
    return InputChain(C, a)


def _simulate_linear(A, b, c, d, u, dt):
    """RK4 with linearly interpolated input; ``u`` may be (N,) or (N, trials)."""
    u = np.asarray(u, dtype=float)
    n = b.size
    N = u.shape[0]
    tail = u.shape[1:]
    if n == 0:
        return np.zeros((N, 0) + tail), d * u
    Phi, G0, G1 = rk4_linear_map(A, b, dt)
    g0, g1 = G0[:, 0], G1[:, 0]
    xs = np.empty((N, n) + tail)
    x = np.zeros((n,) + tail)
    xs[0] = x
    for k in range(N - 1):
        x = Phi @ x + np.multiply.outer(g0, u[k]) + np.multiply.outer(g1, u[k + 1])
        xs[k + 1] = x
    y = np.einsum("i,ki...->k...", c, xs) + d * u
    return xs, y


def filter_samples(tf: TransferFunction, u, dt: float) -> np.ndarray:
    """Zero-state response of ``tf`` to samples ``u`` (first axis is time)."""
    ss = realize(tf)
    return _simulate_linear(ss.A, ss.b_in, ss.c_out, ss.d_thru, u, dt)[1]


def _delay_samples(u: np.ndarray, tau: float, dt: float) -> np.ndarray:
    if tau == 0:
        return u
    t = dt * np.arange(u.shape[0]) - tau
    k = np.floor(t / dt + 1e-9).astype(int)
    w = t / dt - k
    out = np.zeros_like(u)
    ok = t >= -1e-12
    kk = np.clip(k, 0, u.shape[0] - 1)
    kn = np.clip(k + 1, 0, u.shape[0] - 1)
    ww = w.reshape((-1,) + (1,) * (u.ndim - 1))
    interp = (1.0 - ww) * u[kk] + ww * u[kn]
    out[ok] = interp[ok]
    return out


def apply_channel(u: Signal, H: TransferFunction, tau: float):
    """Pass ``u`` through ``H(s) e^{-tau s}``; returns ``(u_xi, xi = u_xi - u)``."""
    if not (H.is_proper and stability_check(H)):
        raise ValueError("channel H(s) must be stable and proper")
    if tau < 0:
        raise ValueError("delay must be nonnegative")
    values = np.asarray(u.values)
    u_xi = filter_samples(H, _delay_samples(values, tau, u.dt), u.dt)
    return Signal(u.dt, u_xi, u.start), Signal(u.dt, u_xi - values, u.start)


def integrate_stream(deriv, x0, dt, n_steps, inputs):
    """RK4 over a sampled input stream.

    ``inputs`` is a list of :class:`Signal`; they are interpolated linearly at
    the stage points and passed to ``deriv(t, x, *values)``. Returns the
    ``(n_steps + 1, len(x0))`` state trace.
    """
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    h2 = 0.5 * dt
    arrays = [np.asarray(s.values) for s in inputs]
    for k in range(n_steps):
        t = k * dt
        a0 = [a[k] for a in arrays]
        a1 = [a[k + 1] for a in arrays]
        am = [0.5 * (p + q) for p, q in zip(a0, a1)]
        k1 = deriv(t, x, *a0)
        k2 = deriv(t + h2, x + h2 * k1, *am)
        k3 = deriv(t + h2, x + h2 * k2, *am)
        k4 = deriv(t + dt, x + dt * k3, *a1)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e6:
            raise FloatingPointError(f"observer diverged at t={t + dt:.6g}")
        out[k + 1] = x
    return out


def observe_new(model: TransformedSystem, u: Signal, y: Signal):
    """Open-loop copy of the nominal model; returns ``(x_new_hat, d_new_hat)``.

    ``d_new_hat`` is the residual ``y - c @ x_new_hat`` as a :class:`Signal`.
    """
    n_steps = len(u) - 1
    xs = integrate_stream(model.derivative, model.x0, u.dt, n_steps, [u])
    d_hat = np.asarray(y.values) - xs @ model.c_out
    return xs, Signal(u.dt, d_hat, u.start)


def observe_primary(x_new: np.ndarray, u_p: Signal, model: TransformedSystem):
    """Estimate the primary/secondary split from the nominal state.

    The primary estimate is an open-loop copy driven by ``u_p``; the secondary
    one is whatever remains of ``x_new``.
    """
    xp = integrate_stream(model.derivative, model.x0, u_p.dt, len(u_p) - 1, [u_p])
    return xp, np.asarray(x_new) - xp


@dataclass
class DecompositionTrace:
    x_new: np.ndarray
    x_p: np.ndarray
    x_s: np.ndarray
    y: np.ndarray
    y_p: np.ndarray
    y_s: np.ndarray
    state_residual: float
    output_residual: float
    tolerance: float = 1e-8

    @property
    def ok(self) -> bool:
        return max(self.state_residual, self.output_residual) <= self.tolerance


def primary_drift(model: TransformedSystem, mode: str = "standard", A=None):
    """Drift of the primary system.

    ``"standard"`` reuses the nominal drift so that the secondary system has
    its equilibrium at zero. ``"linear"`` uses the constant matrix ``A``
    instead (the secondary system then absorbs ``f(x) - A x_p``).
    """
    if mode == "standard":
        return model.f
    if mode == "linear":
        if A is None:
            raise ValueError("linear primary decomposition needs a matrix A")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return lambda t, x: A @ x
    raise ValueError(f"unknown decomposition mode {mode!r}")


def decompose(model: TransformedSystem, u: Signal, u_p: Signal, d_new: Signal,
              mode: str = "standard", A=None, tolerance: float = 1e-8) -> DecompositionTrace:
    """Co-simulate the nominal, primary and secondary systems.

    Primary: ``x_p' = f_p(x_p) + b u_p``, ``y_p = c x_p + d_new``.
    Secondary: ``x_s' = f(x_p + x_s) - f_p(x_p) + b (u - u_p)``, ``y_s = c x_s``.
    The sum property ``x_p + x_s = x_new``, ``y_p + y_s = y`` is checked and
    its worst relative violation is stored on the result.
    """
    n = model.n
    fp = primary_drift(model, mode, A)
    b = model.b_in

    def deriv(t, s, uk, upk):
        xn, xp, xs = s[:n], s[n:2 * n], s[2 * n:]
        fpx = fp(t, xp)
        return np.concatenate([
            model.f(t, xn) + b * uk,
            fpx + b * upk,
            model.f(t, xp + xs) - fpx + b * (uk - upk),
        ])

    trace = integrate_stream(deriv, np.zeros(3 * n), u.dt, len(u) - 1, [u, u_p])
    xn, xp, xs = trace[:, :n], trace[:, n:2 * n], trace[:, 2 * n:]
    c = model.c_out
    dn = np.asarray(d_new.values)
    y = xn @ c + dn
    yp = xp @ c + dn
    ys = xs @ c
    scale = 1.0 + np.max(np.abs(xn))
    state_res = float(np.max(np.abs(xp + xs - xn))) / scale
    out_res = float(np.max(np.abs(yp + ys - y))) / (1.0 + np.max(np.abs(y)))
    return DecompositionTrace(xn, xp, xs, y, yp, ys, state_res, out_res, tolerance)


@dataclass(frozen=True)
class GainCertificate:
    """Lyapunov pair and the resulting ISS gain
    ``gamma = 2 lmax(P)^2 / (lmin(P) lmin(Q))``."""

    P: np.ndarray
    Q: np.ndarray
    gamma: float
    residual: float

    def to_json(self) -> str:
        return json.dumps({"P": self.P.tolist(), "Q": self.Q.tolist(),
                           "gamma": self.gamma, "residual": self.residual}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GainCertificate":
        d = json.loads(text)
        return cls(np.array(d["P"]), np.array(d["Q"]), d["gamma"], d["residual"])


def lyapunov_gamma(A, Q=None) -> GainCertificate:
    """Solve ``A^T P + P A = -Q`` (``Q = I`` by default) and return the gain."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    eig = np.linalg.eigvals(A)
    if np.any(eig.real >= -1e-12):
        raise ValueError(f"A is not Hurwitz (eigenvalues {eig}); no quadratic Lyapunov "
                         "function exists")
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    P = linalg.solve_continuous_lyapunov(A.T, -Q)
    P = 0.5 * (P + P.T)
    lp = np.linalg.eigvalsh(P)
    lq = np.linalg.eigvalsh(Q)
    if lp[0] <= 1e-12 or lq[0] <= 1e-12:
        raise ValueError("Lyapunov solution is not positive definite")
    gamma = 2.0 * lp[-1] ** 2 / (lp[0] * lq[0])
    residual = float(np.linalg.norm(A.T @ P + P @ A + Q))
    return GainCertificate(P, Q, float(gamma), residual)
