"""Rational SISO transfer functions, realizations and L1 gains.

Polynomials are stored as coefficient arrays in descending powers of ``s``.
A :class:`TransferFunction` is canonicalised on construction: leading zeros
are stripped and the denominator is made monic.

>>> C = TransferFunction([1], [2, 1])
>>> round(l1_gain(TransferFunction([1, 0], [1]) * C), 3)
1.0
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .engine import rk4_step

__all__ = [
    "TransferFunction",
    "StateSpaceModel",
    "ImpulseTrace",
    "L1Estimate",
    "realize",
    "impulse_response",
    "l1_gain",
    "l1_gain_with_delay",
    "compose",
    "proper_inverse",
    "stability_check",
    "is_minimum_phase",
    "rk4_linear_map",
]

STABILITY_MARGIN = 1e-9
CANCEL_TOL = 1e-9


def _trim(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    scale = np.max(np.abs(p)) if p.size else 0.0
    if scale == 0.0:
        return np.zeros(1)
    nz = np.flatnonzero(np.abs(p) > 1e-14 * scale)
    return p[nz[0]:].copy()


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """``num(s) / den(s)`` with real coefficients, highest power first."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not np.any(den):
            raise ZeroDivisionError("transfer function denominator is zero")
        if not np.any(num):
            num, den = np.zeros(1), np.ones(1)
        lead = den[0]
        num, den = num / lead, den / lead
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def constant(cls, k: float) -> "TransferFunction":
        return cls([k], [1.0])

    # -- structure ---------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not np.any(self.num)

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def relative_degree(self) -> int:
        return (len(self.den) - 1) - (len(self.num) - 1)

    @property
    def is_proper(self) -> bool:
        return self.is_zero or self.relative_degree >= 0

    @property
    def is_strictly_proper(self) -> bool:
        return self.is_zero or self.relative_degree >= 1

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    @property
    def zeros(self) -> np.ndarray:
        return np.roots(self.num) if not self.is_zero else np.zeros(0)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def freqresp(self, w) -> np.ndarray:
        return self(1j * np.asarray(w, dtype=float))

    @property
    def dc_gain(self) -> float:
        return float(np.real(self(0.0)))

    # -- algebra -----------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "TransferFunction":
        if isinstance(other, TransferFunction):
            return other
        if np.isscalar(other):
            return TransferFunction.constant(float(other))
        return NotImplemented

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return compose([self, other], "series")

    __rmul__ = __mul__

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return compose([self, other], "parallel")

    __radd__ = __add__

    def __neg__(self):
        return TransferFunction(-self.num, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def inverse(self) -> "TransferFunction":
        if self.is_zero:
            raise ZeroDivisionError("cannot invert the zero transfer function")
        return TransferFunction(self.den, self.num)

    def allclose(self, other, tol=1e-9) -> bool:
        if len(self.num) != len(other.num) or len(self.den) != len(other.den):
            return False
        return (np.allclose(self.num, other.num, atol=tol, rtol=tol)
                and np.allclose(self.den, other.den, atol=tol, rtol=tol))

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        fmt = lambda p: "[" + ", ".join(f"{c:.17g}" for c in p) + "]"
        return f"num: {fmt(self.num)}; den: {fmt(self.den)}"

    _TEXT = re.compile(r"^\s*num\s*:\s*\[(?P<num>[^\]]*)\]\s*;\s*den\s*:\s*\[(?P<den>[^\]]*)\]\s*$")

    @classmethod
    def from_text(cls, text: str) -> "TransferFunction":
        m = cls._TEXT.match(text)
        if m is None:
            raise ValueError(f"cannot parse transfer function {text!r}; "
                             "expected 'num: [...]; den: [...]'")
        parse = lambda body: [float(tok) for tok in re.split(r"[,\s]+", body.strip()) if tok]
        return cls(parse(m["num"]), parse(m["den"]))

    def __repr__(self):
        return f"TransferFunction({self.num.tolist()}, {self.den.tolist()})"


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    b_in: np.ndarray
    c_out: np.ndarray
    d_thru: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        A = np.atleast_2d(A) if A.size else np.zeros((0, 0))
        b = np.atleast_1d(np.asarray(self.b_in, dtype=float))
        c = np.atleast_1d(np.asarray(self.c_out, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or b.shape != (n,) or c.shape != (n,):
            raise ValueError(f"inconsistent dimensions A{A.shape}, b{b.shape}, c{c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b_in", b)
        object.__setattr__(self, "c_out", c)
        object.__setattr__(self, "d_thru", float(self.d_thru))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def evaluate(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        out = np.full(s.shape, self.d_thru, dtype=complex)
        if self.n:
            eye = np.eye(self.n)
            for i, sk in enumerate(s):
                out[i] += self.c_out @ np.linalg.solve(sk * eye - self.A, self.b_in)
        return out

    def derivative(self, t, x, u):
        return self.A @ x + self.b_in * u

    def output(self, x, u):
        return self.c_out @ x + self.d_thru * u


class ImpulseTrace(NamedTuple):
    dt: float
    samples: np.ndarray
    direct_delta_weight: float

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))


class L1Estimate(NamedTuple):
    value: float
    tail_bound: float
    horizon: float


def _require_proper(tf: TransferFunction):
    if not tf.is_proper:
        raise ValueError(
            f"transfer function is improper (numerator degree {len(tf.num) - 1} > "
            f"denominator degree {len(tf.den) - 1}); it has no state-space realization")


def realize(tf: TransferFunction) -> StateSpaceModel:
    """Observable canonical realization of a proper transfer function.

    The direct term is split off by polynomial division, so ``d_thru`` is
    nonzero exactly when ``tf`` is biproper.
    """
    _require_proper(tf)
    n = tf.order
    if n == 0 or tf.is_zero:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros(0), np.zeros(0),
                               tf.num[0] / tf.den[0])
    num = np.concatenate([np.zeros(n + 1 - len(tf.num)), tf.num])
    d = num[0]
    rem = num[1:] - d * tf.den[1:]
    A = np.zeros((n, n))
    A[:, 0] = -tf.den[1:]
    A[:-1, 1:] = np.eye(n - 1)
    c = np.zeros(n)
    c[0] = 1.0
    return StateSpaceModel(A, rem, c, d)


def rk4_linear_map(A: np.ndarray, B: np.ndarray, dt: float):
    """Exact one-step matrices of RK4 on ``x' = A x + B u``.

    With ``u`` linear between samples the step is
    ``x+ = Phi x + G0 u_k + G1 u_{k+1}``. The matrices are obtained by pushing
    basis vectors through :func:`rk4_step`, so they agree with the engine.
    """
    A = np.atleast_2d(A)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    f = lambda t, x, u: A @ x + B @ u
    zero_u = np.zeros(m)
    Phi = np.column_stack([rk4_step(f, e, 0.0, dt, lambda t: zero_u) for e in np.eye(n)]) \
        if n else np.zeros((0, 0))
    G0 = np.zeros((n, m))
    G1 = np.zeros((n, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        ramp_down = lambda t, e=e: e * (1.0 - t / dt)
        ramp_up = lambda t, e=e: e * (t / dt)
        G0[:, j] = rk4_step(f, np.zeros(n), 0.0, dt, ramp_down)
        G1[:, j] = rk4_step(f, np.zeros(n), 0.0, dt, ramp_up)
    return Phi, G0, G1


def stability_check(tf: TransferFunction) -> bool:
    """True iff every pole has real part below ``-1e-9``."""
    if tf.order == 0:
        return True
    return bool(np.all(tf.poles.real < -STABILITY_MARGIN))


def is_minimum_phase(tf: TransferFunction) -> bool:
    z = tf.zeros
    return bool(np.all(z.real < -STABILITY_MARGIN))


def _slowest_time_constant(tf: TransferFunction) -> float:
    if tf.order == 0:
        return 0.0
    return 1.0 / np.min(-tf.poles.real)


def impulse_response(tf: TransferFunction, dt: float = 1e-3, horizon: float | None = None) -> ImpulseTrace:
    """Samples of the impulse response on ``[0, horizon]``.

    The strictly proper part is obtained as the free response of its
    realization from ``x(0) = b`` under RK4; a biproper direct term is
    reported separately as the weight of the Dirac component.
    """
    _require_proper(tf)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not stability_check(tf):
        raise ValueError("impulse response requested for an unstable transfer function; "
                         "its L1 gain is undefined")
    if horizon is None:
        horizon = 10.0 * _slowest_time_constant(tf) or dt
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ss = realize(tf)
    n_samples = int(round(horizon / dt)) + 1
    if ss.n == 0:
        return ImpulseTrace(dt, np.zeros(n_samples), ss.d_thru)
    Phi, _, _ = rk4_linear_map(ss.A, ss.b_in, dt)
    x = ss.b_in.copy()
    g = np.empty(n_samples)
    c = ss.c_out
    for k in range(n_samples):
        g[k] = c @ x
        x = Phi @ x
    return ImpulseTrace(dt, g, ss.d_thru)


def _tail_bound(g: np.ndarray, dt: float, tau_slow: float) -> float:
    if tau_slow == 0.0:
        return 0.0
    window = max(2, int(round(tau_slow / dt)))
    return float(np.max(np.abs(g[-window:]))) * tau_slow


_MAX_EXTENSIONS = 12


def _check_tail(tail, tail_tol, horizon, tau_slow, adaptive):
    """Next horizon when the default is adaptive; otherwise a diagnostic."""
    suggested = horizon + tau_slow * np.log(tail / tail_tol) + tau_slow
    if not adaptive:
        raise ValueError(f"horizon {horizon:g} s leaves an estimated tail of {tail:.2e} "
                         f"> {tail_tol:.1e}; try horizon >= {suggested:.3g} s")
    return suggested


def l1_gain(tf: TransferFunction, dt: float = 1e-3, horizon: float | None = None,
            tail_tol: float = 1e-3, full_output: bool = False):
    """``|D| + integral of |g(t)|``, the L1 (peak-to-peak) gain of ``tf``.

    The integral is a trapezoid rule over the RK4 impulse response. The
    neglected tail past ``horizon`` is bounded with the envelope of the slowest
    pole. The default horizon starts at ten slowest time constants and is
    extended until that bound is below ``tail_tol``; an explicit horizon that
    leaves a larger tail raises a ``ValueError`` suggesting a longer one.
    With ``full_output`` an :class:`L1Estimate` is returned.
    """
    tau_slow = _slowest_time_constant(tf) if stability_check(tf) else None
    if tau_slow is None:
        raise ValueError("L1 gain is only defined for stable transfer functions")
    adaptive = horizon is None
    if adaptive:
        horizon = 10.0 * tau_slow or dt
    for _ in range(_MAX_EXTENSIONS):
        trace = impulse_response(tf, dt, horizon)
        g = trace.samples
        tail = _tail_bound(g, dt, tau_slow)
        if tail <= tail_tol:
            break
        horizon = _check_tail(tail, tail_tol, horizon, tau_slow, adaptive)
    value = abs(trace.direct_delta_weight) + float(trapezoid(np.abs(g), dx=dt))
    if full_output:
        return L1Estimate(value, tail, horizon)
    return value


def l1_gain_with_delay(tf: TransferFunction, tau: float, subtract: TransferFunction | None = None,
                       dt: float = 1e-3, horizon: float | None = None,
                       tail_tol: float = 1e-3, full_output: bool = False):
    """L1 gain of ``tf * e^{-tau s} - subtract``.

    ``tau`` is rounded to a whole number of steps; the two impulse responses
    are sampled on the same grid and the delayed one is shifted before the
    difference is integrated.
    """
    subtract = subtract if subtract is not None else TransferFunction.constant(0.0)
    if tau < 0:
        raise ValueError("delay must be nonnegative")
    shift = int(round(tau / dt))
    if abs(shift * dt - tau) > 1e-9 * max(1.0, tau):
        raise ValueError(f"delay {tau} is not a multiple of dt {dt}")
    taus = [_slowest_time_constant(g) if stability_check(g) else None for g in (tf, subtract)]
    if None in taus:
        raise ValueError("L1 gain is only defined for stable transfer functions")
    tau_slow = max(taus)
    adaptive = horizon is None
    if adaptive:
        horizon = 10.0 * tau_slow + tau
    for _ in range(_MAX_EXTENSIONS):
        g1 = impulse_response(tf, dt, horizon)
        g2 = impulse_response(subtract, dt, horizon)
        shifted = np.concatenate([np.zeros(shift), g1.samples[:len(g1.samples) - shift]])
        diff = shifted - g2.samples
        tail = _tail_bound(diff, dt, tau_slow)
        if tail <= tail_tol:
            break
        horizon = _check_tail(tail, tail_tol, horizon, tau_slow, adaptive)
    if shift:
        direct = abs(g1.direct_delta_weight) + abs(g2.direct_delta_weight)
    else:
        direct = abs(g1.direct_delta_weight - g2.direct_delta_weight)
    # the shifted response may jump at t = tau: integrate each side separately
    left = diff[:shift + 1].copy()
    if shift:
        left[-1] = -g2.samples[shift]
    value = direct + float(trapezoid(np.abs(left), dx=dt) + trapezoid(np.abs(diff[shift:]), dx=dt))
    if full_output:
        return L1Estimate(value, tail, horizon)
    return value


def _cancel_common(num: np.ndarray, den: np.ndarray, tol: float = CANCEL_TOL):
    """Remove factors shared by ``num`` and ``den``.

    A candidate root pair is only cancelled when dividing both polynomials by
    the corresponding real factor leaves remainders below ``tol`` (relative).
    """
    while len(num) > 1 and len(den) > 1:
        zr, pr = np.roots(num), np.roots(den)
        done = True
        for z in zr:
            p = pr[np.argmin(np.abs(pr - z))]
            if abs(z - p) > 1e-6 * (1.0 + abs(p)):
                continue
            r = 0.5 * (z + p)
            if abs(r.imag) > 1e-12 * (1.0 + abs(r)):
                factor = np.array([1.0, -2.0 * r.real, abs(r) ** 2])
            else:
                factor = np.array([1.0, -r.real])
            qn, rn = np.polydiv(num, factor)
            qd, rd = np.polydiv(den, factor)
            if (np.max(np.abs(rn)) <= tol * np.max(np.abs(num))
                    and np.max(np.abs(rd)) <= tol * np.max(np.abs(den))):
                num, den = qn, qd
                done = False
                break
        if done:
            break
    return num, den


def compose(tfs: Sequence[TransferFunction], mode: str = "series") -> TransferFunction:
    """Series (product) or parallel (sum) connection of transfer functions."""
    tfs = list(tfs)
    if not tfs:
        raise ValueError("compose needs at least one transfer function")
    if mode not in ("series", "parallel"):
        raise ValueError(f"mode must be 'series' or 'parallel', got {mode!r}")
    num, den = tfs[0].num, tfs[0].den
    for g in tfs[1:]:
        if mode == "series":
            num, den = np.polymul(num, g.num), np.polymul(den, g.den)
        else:
            num = np.polyadd(np.polymul(num, g.den), np.polymul(g.num, den))
            den = np.polymul(den, g.den)
    num, den = _trim(num), _trim(den)
    if not np.any(num):
        return TransferFunction.constant(0.0)
    num, den = _cancel_common(num, den / den[0] if den[0] else den)
    return TransferFunction(num, den)


def proper_inverse(g: TransferFunction, q: TransferFunction) -> TransferFunction:
    """``q / g`` for minimum-phase ``g``, with ``q`` supplying the roll-off."""
    if g.is_zero:
        raise ValueError("cannot invert the zero transfer function")
    if not is_minimum_phase(g):
        raise ValueError(f"g has zeros {g.zeros} outside the open left half plane; "
                         "its inverse would be unstable")
    if q.relative_degree < g.relative_degree:
        raise ValueError(f"q has relative degree {q.relative_degree}; at least "
                         f"{g.relative_degree} is required to make q/g proper")
    return compose([q, g.inverse()], "series")
