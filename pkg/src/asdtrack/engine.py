"""Fixed-step simulation engine.

Everything here integrates with the classical fourth-order Runge-Kutta
scheme on a fixed clock. A simulation is a set of :class:`DynamicBlock`
objects exchanging named scalar (or vector) signals, optionally through
:class:`DelayLine` transport delays and exogenous time functions.

Within one RK4 step every block is evaluated at the four stage points on the
shared clock, so coupled blocks see each other's stage values rather than
step-held ones. Delay lines are the exception: they read their history at
``t - tau`` and therefore require ``tau == 0`` or ``tau >= dt``.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "SimConfig",
    "Signal",
    "DynamicBlock",
    "DelayLine",
    "Network",
    "SimulationAbort",
    "AlgebraicLoopError",
    "CausalityError",
    "rk4_step",
    "delayed_sample",
    "saturate",
    "colored_noise_step",
    "colored_noise",
    "run_network",
    "traces_to_csv",
]


class SimulationAbort(RuntimeError):
    """A non-finite value appeared during integration."""

    def __init__(self, message, *, block=None, time=None, stage=None):
        super().__init__(message)
        self.block = block
        self.time = time
        self.stage = stage


class AlgebraicLoopError(ValueError):
    pass


class CausalityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 60.0
    rng_seed: int = 42

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ValueError(f"horizon {self.horizon} shorter than dt {self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled trace; ``values[k]`` is the sample at ``start + k*dt``."""

    dt: float
    values: np.ndarray
    start: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not self.dt > 0:
            raise ValueError("Signal dt must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("Signal contains non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def t(self) -> np.ndarray:
        return self.start + self.dt * np.arange(len(self.values))

    def at(self, t: float):
        """Linear interpolation; clamps outside the sampled range."""
        pos = (t - self.start) / self.dt
        n = len(self.values)
        if pos <= 0:
            return self.values[0]
        if pos >= n - 1:
            return self.values[-1]
        k = int(pos)
        w = pos - k
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]

    @classmethod
    def from_function(cls, fn, dt, horizon, start=0.0):
        n = int(round(horizon / dt)) + 1
        t = start + dt * np.arange(n)
        return cls(dt, np.array([fn(tk) for tk in t]), start)


def rk4_step(block, x, t, dt, input_sampler=None):
    """Advance ``x`` by one classical RK4 step.

    ``block`` is either a :class:`DynamicBlock`-like object with a
    ``derivative(t, x, u)`` method or a plain callable with that signature.
    ``input_sampler(t)`` supplies ``u`` at ``t``, ``t + dt/2`` and ``t + dt``;
    without one, ``u`` is ``None``.
    """
    f = getattr(block, "derivative", block)
    if input_sampler is None:
        def input_sampler(_t):
            return None
    h2 = 0.5 * dt
    u0 = input_sampler(t)
    um = input_sampler(t + h2)
    u1 = input_sampler(t + dt)
    k1 = f(t, x, u0)
    k2 = f(t + h2, x + h2 * k1, um)
    k3 = f(t + h2, x + h2 * k2, um)
    k4 = f(t + dt, x + dt * k3, u1)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise SimulationAbort(f"non-finite state at t={t + dt:.6g}", time=t + dt)
    return x_next


def saturate(v, a):
    """``sign(v) * min(|v|, a)``."""
    if not a > 0:
        raise ValueError(f"saturation level must be positive, got {a}")
    return np.clip(v, -a, a) if isinstance(v, np.ndarray) else max(-a, min(a, v))


class DelayLine:
    """Transport delay ``e^{-tau s}`` backed by a buffer of written samples.

    Reads at ``t`` return the linearly interpolated value at ``t - tau``.
    Anything before the first written sample returns ``prehistory``.
    """

    def __init__(self, tau: float, source: str | None = None, name: str | None = None,
                 prehistory: float = 0.0, capacity: int | None = None):
        if tau < 0:
            raise ValueError("delay must be nonnegative")
        self.tau = float(tau)
        self.source = source
        self.name = name
        self.prehistory = prehistory
        self._capacity = capacity
        self._times: list[float] = []
        self._values: list = []

    def push(self, t: float, value) -> None:
        if self._times and t <= self._times[-1]:
            raise CausalityError(f"delay line write at t={t} is not after {self._times[-1]}")
        self._times.append(t)
        self._values.append(value)
        cap = self._capacity
        if cap is not None and len(self._times) > 2 * cap:
            drop = len(self._times) - cap
            del self._times[:drop]
            del self._values[:drop]

    def read(self, t: float):
        tq = t - self.tau
        times = self._times
        if not times or tq < times[0]:
            return self.prehistory
        last = times[-1]
        if tq > last:
            if tq - last <= 1e-12 * max(1.0, abs(last)):
                return self._values[-1]
            raise CausalityError(
                f"delay read at t-tau={tq:.9g} beyond last written sample {last:.9g}")
        k = bisect.bisect_right(times, tq) - 1
        if k + 1 == len(times) or times[k] == tq:
            return self._values[k]
        t0, t1 = times[k], times[k + 1]
        w = (tq - t0) / (t1 - t0)
        return (1.0 - w) * self._values[k] + w * self._values[k + 1]


def delayed_sample(line: DelayLine, t: float):
    return line.read(t)


def colored_noise_step(state, dt, rng, *, pole=0.1, gain=0.1, intensity=1.0):
    """One step of ``gain/(s + pole)`` driven by white noise of given intensity.

    The white input is a Gaussian sample of variance ``intensity/dt`` held over
    the step and the filter is discretised exactly for that held input, so the
    stationary output variance is ``gain**2 * intensity / (2 * pole)`` up to
    O(dt) terms.
    """
    w = rng.normal(0.0, math.sqrt(intensity / dt))
    phi = math.exp(-pole * dt)
    nxt = phi * state + (gain / pole) * (1.0 - phi) * w
    return nxt, nxt


def colored_noise(n, dt, seed, **kwargs) -> np.ndarray:
    """``n + 1`` samples of the colored process starting from a zero state."""
    rng = np.random.default_rng(seed)
    out = np.empty(n + 1)
    out[0] = state = 0.0
    for k in range(n):
        state, out[k + 1] = colored_noise_step(state, dt, rng, **kwargs)
    return out


@dataclass
class DynamicBlock:
    """A continuous-time subsystem of a :class:`Network`.

    ``output(t, x, sig)`` returns a dict of the block's output signals and
    ``derivative(t, x, sig)`` the state rate; ``sig`` holds every signal
    evaluated so far at the current stage. Blocks without instantaneous
    input-to-output coupling should set ``feedthrough=False`` so that they
    can close feedback loops.
    """

    name: str
    outputs: Sequence[str]
    output: Callable
    inputs: Sequence[str] = ()
    derivative: Callable | None = None
    x0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    feedthrough: bool = True

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        if self.x0.size and self.derivative is None:
            raise ValueError(f"block {self.name!r} has state but no derivative")

    @property
    def state_dim(self) -> int:
        return self.x0.size


class Network:
    """Wired set of blocks, delay lines and exogenous sources.

    Evaluation order is resolved once at construction; a cycle through
    feedthrough blocks (or zero delays) raises :class:`AlgebraicLoopError`.
    """

    def __init__(self, blocks: Sequence[DynamicBlock],
                 sources: Mapping[str, Callable[[float], float]] | None = None,
                 delays: Sequence[DelayLine] = ()):
        self.blocks = list(blocks)
        self.sources = dict(sources or {})
        self.delays = list(delays)

        producer: dict[str, object] = {}

        def claim(sig, owner):
            if sig in producer:
                raise ValueError(f"signal {sig!r} produced twice")
            producer[sig] = owner

        for name in self.sources:
            claim(name, "source")
        for line in self.delays:
            if line.source is None or line.name is None:
                raise ValueError("network delay lines need source and name")
            claim(line.name, line)
        for blk in self.blocks:
            for sig in blk.outputs:
                claim(sig, blk)
        for blk in self.blocks:
            for sig in blk.inputs:
                if sig not in producer:
                    raise ValueError(f"input {sig!r} of block {blk.name!r} is not wired")
        for line in self.delays:
            if line.source not in producer:
                raise ValueError(f"delay source {line.source!r} is not wired")

        # nodes that need inputs resolved before their outputs exist
        instant = [b for b in self.blocks if b.feedthrough]
        instant += [d for d in self.delays if d.tau == 0.0]
        deps = {}
        for node in instant:
            needs = node.inputs if isinstance(node, DynamicBlock) else (node.source,)
            deps[id(node)] = [producer[s] for s in needs
                              if any(producer[s] is m for m in instant)]
        order, state = [], {}

        def visit(node, path):
            mark = state.get(id(node))
            if mark == "done":
                return
            if mark == "active":
                names = [getattr(p, "name", "?") for p in path + [node]]
                raise AlgebraicLoopError("algebraic loop: " + " -> ".join(map(str, names)))
            state[id(node)] = "active"
            for dep in deps[id(node)]:
                visit(dep, path + [node])
            state[id(node)] = "done"
            order.append(node)

        for node in instant:
            visit(node, [])
        self._early = [b for b in self.blocks if not b.feedthrough]
        self._late_delays = [d for d in self.delays if d.tau > 0.0]
        self._order = order

        self._slices = []
        start = 0
        for blk in self.blocks:
            self._slices.append(slice(start, start + blk.state_dim))
            start += blk.state_dim
        self.state_dim = start
        self._slice_of = dict(zip(map(id, self.blocks), self._slices))

    def initial_state(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.x0 for b in self.blocks])

    def signals(self, t: float, x: np.ndarray) -> dict:
        sig = {name: fn(t) for name, fn in self.sources.items()}
        for line in self._late_delays:
            sig[line.name] = line.read(t)
        slices = self._slice_of
        for blk in self._early:
            sig.update(blk.output(t, x[slices[id(blk)]], sig))
        for node in self._order:
            if isinstance(node, DelayLine):
                sig[node.name] = sig[node.source]
            else:
                sig.update(node.output(t, x[slices[id(node)]], sig))
        return sig

    def derivative(self, t: float, x: np.ndarray, sig: dict) -> np.ndarray:
        dx = np.empty(self.state_dim)
        for blk, sl in zip(self.blocks, self._slices):
            if blk.state_dim:
                dx[sl] = blk.derivative(t, x[sl], sig)
        return dx

    def locate(self, index: int) -> str:
        for blk, sl in zip(self.blocks, self._slices):
            if sl.start <= index < sl.stop:
                return blk.name
        return "?"


def run_network(network: Network, config: SimConfig, probes: Sequence[str],
                *, return_state: bool = False):
    """Integrate ``network`` over ``config.horizon`` and record ``probes``.

    Probes are sampled at every step boundary, including ``t = 0``. Returns a
    dict of :class:`Signal`, plus the final state vector if ``return_state``.
    """
    dt = config.dt
    n = config.n_steps
    for line in network.delays:
        if 0.0 < line.tau < dt * (1.0 - 1e-9):
            raise ValueError(f"delay {line.tau} shorter than the step {dt}")
        if line._capacity is None:
            line._capacity = int(math.ceil(line.tau / dt)) + 4

    x = network.initial_state()
    rec = {p: [] for p in probes}
    h2 = 0.5 * dt
    t = 0.0
    sig = network.signals(t, x)
    for k in range(n):
        for p in probes:
            rec[p].append(sig[p])
        for line in network.delays:
            line.push(t, sig[line.source])
        k1 = network.derivative(t, x, sig)
        tm = t + h2
        xs = x + h2 * k1
        k2 = network.derivative(tm, xs, network.signals(tm, xs))
        xs = x + h2 * k2
        k3 = network.derivative(tm, xs, network.signals(tm, xs))
        t1 = (k + 1) * dt
        xs = x + dt * k3
        k4 = network.derivative(t1, xs, network.signals(t1, xs))
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t1
        bad = ~np.isfinite(x)
        if bad.any():
            blk = network.locate(int(np.flatnonzero(bad)[0]))
            raise SimulationAbort(f"non-finite state in block {blk!r} at t={t:.6g}",
                                  block=blk, time=t)
        sig = network.signals(t, x)
    for p in probes:
        rec[p].append(sig[p])
    for p, v in sig.items():
        if p in rec and not np.all(np.isfinite(np.asarray(v, dtype=float))):
            raise SimulationAbort(f"non-finite probe {p!r} at t={t:.6g}", block=p, time=t)
    traces = {p: Signal(dt, np.asarray(v, dtype=float)) for p, v in rec.items()}
    if return_state:
        return traces, x
    return traces


def traces_to_csv(traces: Mapping[str, Signal], columns: Sequence[str] | None = None) -> str:
    """CSV text with header ``t,<columns>`` and 9 significant digits."""
    columns = list(columns or traces)
    first = traces[columns[0]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *columns])
    cols = [np.asarray(traces[c].values) for c in columns]
    for k, tk in enumerate(first.t):
        w.writerow([f"{tk:.9g}", *(f"{c[k]:.9g}" for c in cols)])
    return buf.getvalue()
