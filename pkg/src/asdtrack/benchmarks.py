"""Benchmark scenarios: Rohrs' example, a cubic plant and the two-cart system.

:func:`build_scenario` returns a fully parameterised :class:`Scenario`;
:func:`run_scenario` closes the loop and co-simulates ground-truth copies of
the nominal, primary and secondary systems so that the decomposition and
observer properties can be checked on every run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .controllers import (
    ControllerStack,
    DifferentiatorScheme,
    InversionScheme,
    ReferenceSignal,
    nonlinear_law,
    rohrs_law,
    scalar_tracking_law,
)
from .core import (
    InputChain,
    _delay_samples,
    filter_samples,
    UncertainPlant,
    lyapunov_gamma,
    primary_drift,
    transform,
    xi_bound,
)
from .engine import DelayLine, DynamicBlock, Network, SimConfig, Signal, colored_noise, run_network, traces_to_csv
from .lti import TransferFunction, l1_gain, l1_gain_with_delay, realize

__all__ = [
    "Scenario",
    "ScenarioResult",
    "SCENARIOS",
    "CSV_COLUMNS",
    "TWO_CART_TRUE",
    "TWO_CART_ESTIMATE",
    "two_cart_matrix",
    "primary_transfer_function",
    "build_scenario",
    "run_scenario",
    "compute_metrics",
    "load_config",
    "scenario_from_config",
    "channel_constant",
    "random_xi_trials",
]

SCENARIOS = ("rohrs", "nonlinear", "twocart")
CSV_COLUMNS = ("y", "r", "u", "u_p", "v", "d_new_hat", "xi")

UNMODELED_H = TransferFunction([229.0], [1.0, 30.0, 229.0])
SHAPING_C = TransferFunction([1.0], [2.0, 1.0])

# theta = [m1, m2, k1, k2, b1, b2]
TWO_CART_TRUE = (1.0, 2.0, 0.8, 0.5, 1.3, 0.9)
TWO_CART_ESTIMATE = (1.0, 1.0, 1.0, 0.9, 1.5, 1.0)


def two_cart_matrix(theta, corrected_coupling: bool = False) -> np.ndarray:
    """State matrix for ``x = [x1, x2, x1', x2']``.

    Row four carries ``b2/m2`` on ``x1'`` as printed in the source model;
    ``corrected_coupling`` puts the coupling damper ``b1/m2`` there instead.
    """
    m1, m2, k1, k2, b1, b2 = theta
    coupling = b1 if corrected_coupling else b2
    return np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-k1 / m1, k1 / m1, -b1 / m1, b1 / m1],
        [k1 / m2, -(k1 + k2) / m2, coupling / m2, -(b1 + b2) / m2],
    ])


def primary_transfer_function(A, b, c) -> TransferFunction:
    """``c^T (sI - A)^{-1} b`` via ``det(sI - A + b c^T) - det(sI - A)``."""
    A = np.asarray(A, dtype=float)
    den = np.poly(A)
    num = np.poly(A - np.outer(b, c)) - den
    scale = np.max(np.abs(num))
    num[np.abs(num) < 1e-12 * max(scale, 1.0)] = 0.0
    return TransferFunction(num, den)


@dataclass
class Scenario:
    name: str
    plant: UncertainPlant
    theta_hat: np.ndarray
    C: TransferFunction
    a: float
    law: str
    case: int | None = None
    dt: float = 1e-3
    horizon: float = 60.0
    seed: int = 42
    noise: bool = False
    corrected_coupling: bool = False
    decomposition: str = "standard"
    eps_h: float = 0.0
    eps_tau: float = 0.0
    A_hat: np.ndarray | None = None
    gain: Any = None
    notes: dict = field(default_factory=dict)

    @property
    def config(self) -> SimConfig:
        return SimConfig(self.dt, self.horizon, self.seed)

    @property
    def xi_limit(self) -> float:
        return xi_bound(self.eps_h, self.eps_tau, self.plant.delay, self.a)

    @property
    def tag(self) -> str:
        return f"{self.name}" if self.case is None else f"{self.name} case {self.case}"


def _rohrs_drift(t, x, theta):
    return -(3.0 + theta[0]) * x


def _cubic_drift(t, x, theta):
    return -x - (1.0 + theta[0]) * x ** 3


def _channel_constants(C: TransferFunction, H: TransferFunction):
    eps_tau = l1_gain(compose_s(C))
    eps_h = l1_gain(C * (H - 1.0))
    return eps_h, eps_tau


def compose_s(C: TransferFunction) -> TransferFunction:
    return TransferFunction([1.0, 0.0], [1.0]) * C


def build_scenario(name: str, case: int | None = None, **overrides) -> Scenario:
    """Parameterise one of ``rohrs``, ``nonlinear`` or ``twocart``.

    Keyword overrides: ``dt``, ``horizon``, ``seed``, ``noise``, ``a``,
    ``theta_hat``, ``corrected_coupling``, ``decomposition``.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    unknown = set(overrides) - {"dt", "horizon", "seed", "noise", "a", "theta_hat",
                                "corrected_coupling", "decomposition"}
    if unknown:
        raise ValueError(f"unknown scenario override(s): {sorted(unknown)}")
    ov = {k: v for k, v in overrides.items() if v is not None}

    if name in ("rohrs", "nonlinear") and case is not None:
        raise ValueError(f"scenario {name!r} has no cases")

    if name == "rohrs":
        plant = UncertainPlant(
            drift=_rohrs_drift, b_in=[2.0], c_out=[1.0], x0=[1.0],
            theta=lambda t: np.array([-2.0]), disturbance=lambda t: 0.0,
            channel=UNMODELED_H, delay=0.0,
            linear_matrix=lambda th: np.array([[-(3.0 + th[0])]]))
        sc = Scenario(name, plant, np.array([0.0]), SHAPING_C, a=5.0, law="rohrs", horizon=60.0)
    elif name == "nonlinear":
        plant = UncertainPlant(
            drift=_cubic_drift, b_in=[1.0], c_out=[1.0], x0=[1.0],
            theta=lambda t: np.array([0.2 * math.sin(0.1 * t + 1.0)]),
            disturbance=lambda t: 0.5 * math.sin(0.2 * t),
            channel=TransferFunction.constant(1.0), delay=0.1)
        sc = Scenario(name, plant, np.array([0.0]), SHAPING_C, a=5.0, law="nonlinear", horizon=60.0)
    else:
        if case not in (1, 2, 3):
            raise ValueError(f"two-cart case must be 1, 2 or 3, got {case!r}")
        theta_true = np.array(TWO_CART_TRUE if case in (1, 2) else TWO_CART_ESTIMATE)
        theta_hat = np.array(TWO_CART_TRUE if case == 1 else TWO_CART_ESTIMATE)
        corrected = bool(ov.get("corrected_coupling", False))
        m1 = theta_true[0]
        plant = UncertainPlant(
            drift=lambda t, x, th: two_cart_matrix(th, corrected) @ x,
            b_in=[0.0, 0.0, 1.0 / m1, 0.0], c_out=[0.0, 1.0, 0.0, 0.0], x0=np.zeros(4),
            theta=lambda t: theta_true, disturbance=lambda t: np.zeros(4),
            channel=UNMODELED_H, delay=0.1,
            linear_matrix=lambda th: two_cart_matrix(th, corrected))
        sc = Scenario(name, plant, theta_hat, SHAPING_C, a=1.0, law="twocart", case=case,
                      horizon=100.0, noise=True)
        sc.corrected_coupling = corrected

    for key, cast in (("dt", float), ("horizon", float), ("seed", int), ("a", float),
                      ("decomposition", str)):
        if key in ov:
            setattr(sc, key, cast(ov[key]))
    if "noise" in ov:
        sc.noise = bool(ov["noise"])
    if "theta_hat" in ov:
        sc.theta_hat = np.atleast_1d(np.asarray(ov["theta_hat"], dtype=float))
        if sc.theta_hat.shape != np.atleast_1d(sc.plant.theta(0.0)).shape:
            raise ValueError("theta_hat has the wrong length")

    _validate(sc)
    return sc


def _validate(sc: Scenario) -> None:
    sc.config  # dt, horizon and seed checks
    if sc.plant.delay and sc.plant.delay < sc.dt:
        raise ValueError(f"dt={sc.dt} must not exceed the input delay {sc.plant.delay}")
    sc.plant.check()
    InputChain(sc.C, sc.a)
    sc.eps_h, sc.eps_tau = _channel_constants(sc.C, sc.plant.channel)
    lin = sc.plant.linear_matrix
    if lin is not None:
        sc.A_hat = lin(sc.theta_hat)
        sc.gain = lyapunov_gamma(sc.A_hat)
        lyapunov_gamma(lin(sc.plant.theta(0.0)))
    else:
        # cubic drift: df/dx = -1 - 3 (1 + theta) x^2 <= -1 needs 1 + theta >= 0
        ts = np.linspace(0.0, sc.horizon, 257)
        thetas = [sc.plant.theta(t)[0] for t in ts] + [sc.theta_hat[0]]
        if min(thetas) < -1.0:
            raise ValueError("cubic drift loses its Jacobian bound for theta < -1")
        sc.A_hat = np.array([[-1.0]])
        sc.gain = lyapunov_gamma(sc.A_hat)
    if sc.decomposition not in ("standard", "linear"):
        raise ValueError(f"decomposition must be 'standard' or 'linear', got {sc.decomposition!r}")


def _reference(kind) -> ReferenceSignal:
    if isinstance(kind, ReferenceSignal):
        return kind
    if kind == "step":
        return ReferenceSignal.step(0.5)
    if kind == "sine":
        return ReferenceSignal.sine(0.5, 0.2)
    if kind == "zero":
        return ReferenceSignal.zero()
    raise ValueError(f"reference must be 'step' or 'sine', got {kind!r}")


def _scheme(sc: Scenario, model):
    th = float(sc.theta_hat[0]) if sc.theta_hat.size == 1 else None
    if sc.decomposition == "linear" and sc.law in ("rohrs", "nonlinear"):
        fp = primary_drift(model, "linear", sc.A_hat)
        b = float(model.b_in[0])
        law = lambda t, xp, r, rd, d, dd: scalar_tracking_law(fp, b, t, xp, r, rd, d, dd)
        return DifferentiatorScheme(law, sc.C)
    if sc.law == "rohrs":
        return DifferentiatorScheme(lambda t, xp, r, rd, d, dd: rohrs_law(xp, r, rd, d, dd, th), sc.C)
    if sc.law == "nonlinear":
        return DifferentiatorScheme(lambda t, xp, r, rd, d, dd: nonlinear_law(xp, r, rd, d, dd, th), sc.C)
    if sc.law == "twocart":
        G = primary_transfer_function(sc.A_hat, model.b_in, model.c_out)
        return InversionScheme(G, sc.C)
    raise ValueError(f"unknown law {sc.law!r}")


def _noise_disturbance(sc: Scenario):
    """Colored force on the second cart, ``[0, 0, 0, zeta/m2]``."""
    dt = sc.dt
    n = sc.config.n_steps
    zeta = colored_noise(n + 1, dt, sc.seed)
    m2 = sc.plant.theta(0.0)[1]
    e4 = np.array([0.0, 0.0, 0.0, 1.0 / m2])

    def d(t):
        pos = t / dt
        k = int(pos)
        if k >= n + 1:
            return zeta[-1] * e4
        w = pos - k
        return ((1.0 - w) * zeta[k] + w * zeta[k + 1]) * e4

    return d, zeta


@dataclass
class ScenarioResult:
    scenario: Scenario
    reference: str
    traces: dict
    metrics: dict

    def csv(self, columns=CSV_COLUMNS) -> str:
        return traces_to_csv(self.traces, columns)

    def metrics_json(self) -> str:
        return json.dumps(self.metrics, indent=2, sort_keys=True)

    @property
    def filename(self) -> str:
        return f"{self.scenario.name}_{self.reference}_{self.scenario.case or 0}.csv"

    def t(self) -> np.ndarray:
        return self.traces["y"].t


def build_network(sc: Scenario, reference: ReferenceSignal):
    """Closed loop as an engine network; returns ``(network, stack)``."""
    plant = sc.plant
    model = transform(plant, sc.theta_hat)
    chain = InputChain(sc.C, sc.a)
    stack = ControllerStack(model, chain, _scheme(sc, model), reference,
                            decomposition=sc.decomposition, A_primary=sc.A_hat)
    disturbance = plant.disturbance
    if sc.noise and sc.name == "twocart":
        disturbance, _ = _noise_disturbance(sc)

    theta, drift, b, c = plant.theta, plant.drift, plant.b_in, plant.c_out
    plant_blk = DynamicBlock(
        "plant", outputs=("y", "x"), inputs=("u_xi",),
        output=lambda t, x, sig: {"y": float(c @ x), "x": x},
        derivative=lambda t, x, sig: drift(t, x, theta(t)) + b * sig["u_xi"] + disturbance(t),
        x0=plant.x0, feedthrough=False)

    H = realize(plant.channel)
    if H.n:
        ch_out = lambda t, s, sig: {"u_xi": float(H.c_out @ s) + H.d_thru * sig["u_delayed"],
                                    "xi": float(H.c_out @ s) + H.d_thru * sig["u_delayed"] - sig["u"]}
        ch_der = lambda t, s, sig: H.A @ s + H.b_in * sig["u_delayed"]
    else:
        ch_out = lambda t, s, sig: {"u_xi": H.d_thru * sig["u_delayed"],
                                    "xi": H.d_thru * sig["u_delayed"] - sig["u"]}
        ch_der = None
    channel_blk = DynamicBlock("channel", outputs=("u_xi", "xi"), inputs=("u_delayed", "u"),
                               output=ch_out, derivative=ch_der, x0=np.zeros(H.n),
                               feedthrough=True)
    delay = DelayLine(plant.delay, source="u", name="u_delayed")

    n, nz = model.n, chain.nz
    f_p = stack.f_p

    def shadow_out(t, s, sig):
        xn, xp, xs = s[:n], s[n:2 * n], s[2 * n:3 * n]
        zp, zs = s[3 * n:3 * n + nz], s[3 * n + nz:]
        d_new = sig["y"] - float(c @ xn)
        v, sv = sig["v"], sig["sat_v"]
        return {"x_new": xn, "x_p": xp, "x_s": xs,
                "y_p": float(c @ xp) + d_new, "y_s": float(c @ xs), "d_new": d_new,
                "z_p": zp, "z_s": zs,
                "u_zp": float(chain.c_z @ zp) + chain.d_z * v,
                "u_zs": float(chain.c_z @ zs) + chain.d_z * (sv - v)}

    def shadow_der(t, s, sig):
        xn, xp, xs = s[:n], s[n:2 * n], s[2 * n:3 * n]
        zp, zs = s[3 * n:3 * n + nz], s[3 * n + nz:]
        u, u_p, v, sv = sig["u"], sig["u_p"], sig["v"], sig["sat_v"]
        fpx = f_p(t, xp)
        return np.concatenate([
            model.f(t, xn) + model.b_in * u,
            fpx + model.b_in * u_p,
            model.f(t, xp + xs) - fpx + model.b_in * (u - u_p),
            chain.A_z @ zp + chain.b_z * v,
            chain.A_z @ zs + chain.b_z * (sv - v),
        ])

    shadow_blk = DynamicBlock(
        "shadow", outputs=("x_new", "x_p", "x_s", "y_p", "y_s", "d_new", "z_p", "z_s", "u_zp", "u_zs"),
        inputs=("y", "u", "u_p", "v", "sat_v"), output=shadow_out, derivative=shadow_der,
        x0=np.zeros(3 * n + 2 * nz), feedthrough=True)

    net = Network([plant_blk, stack.as_block(), channel_blk, shadow_blk], delays=[delay])
    return net, stack


PROBES = ("y", "r", "u", "u_p", "v", "d_new_hat", "xi", "sat_v", "x",
          "x_new_hat", "x_p_hat", "x_new", "x_p", "x_s", "y_p", "y_s", "d_new",
          "z", "z_p", "z_s", "u_zp", "u_zs")


def run_scenario(sc: Scenario, reference="step", config: SimConfig | None = None,
                 settle_fraction: float = 0.5, window: tuple | None = None) -> ScenarioResult:
    """Closed-loop co-simulation of ``sc`` tracking ``reference``.

    ``reference`` is ``"step"`` (r = 0.5) or ``"sine"`` (r = 0.5 sin 0.2t).
    A ``config`` overrides the scenario's dt, horizon and seed.
    """
    if config is not None:
        sc = replace(sc, dt=config.dt, horizon=config.horizon, seed=config.rng_seed)
    ref = _reference(reference)
    net, _ = build_network(sc, ref)
    traces = run_network(net, sc.config, PROBES)
    metrics = compute_metrics(traces, settle_fraction, window=window, scenario=sc)
    return ScenarioResult(sc, ref.name, traces, metrics)


def compute_metrics(traces: Mapping[str, Signal], settle_fraction: float = 0.5,
                    window: tuple | None = None, scenario: Scenario | None = None) -> dict:
    """Tracking and consistency metrics.

    Tracking error statistics use the settled window: the last
    ``settle_fraction`` of the horizon, or ``window = (t0, t1)`` if given.
    ``sup_xi`` covers the whole run. Residual metrics are reported only when
    the matching traces exist.
    """
    y = traces["y"]
    t = y.t
    if window is None:
        t0 = t[-1] * (1.0 - settle_fraction)
        t1 = t[-1]
    else:
        t0, t1 = window
    mask = (t >= t0 - 1e-9) & (t <= t1 + 1e-9)
    if not mask.any():
        raise ValueError("settled window contains no samples")
    err = np.asarray(y.values) - np.asarray(traces["r"].values)
    e = err[mask]
    m = {
        "window": [float(t0), float(t1)],
        "settled_sup_error": float(np.max(np.abs(e))),
        "settled_rms_error": float(np.sqrt(np.mean(e ** 2))),
    }
    if "xi" in traces:
        m["sup_xi"] = float(np.max(np.abs(traces["xi"].values)))
    if {"x_new", "x_p", "x_s"} <= set(traces):
        xn = traces["x_new"].values.reshape(len(t), -1)
        xp = traces["x_p"].values.reshape(len(t), -1)
        xs = traces["x_s"].values.reshape(len(t), -1)
        yv = np.asarray(y.values)
        state_res = np.max(np.abs(xp + xs - xn)) / (1.0 + np.max(np.abs(xn)))
        out_res = np.max(np.abs(traces["y_p"].values + traces["y_s"].values - yv)) / (1.0 + np.max(np.abs(yv)))
        m["decomposition_residual"] = float(max(state_res, out_res))
    if {"x_new_hat", "x_new", "x_p_hat", "x_p"} <= set(traces):
        r1 = np.max(np.abs(traces["x_new_hat"].values - traces["x_new"].values))
        r2 = np.max(np.abs(traces["x_p_hat"].values - traces["x_p"].values))
        m["observer_residual"] = float(max(r1, r2))
        xh = traces["x_new_hat"].values.reshape(len(t), -1)
        if scenario is not None:
            dh = np.asarray(y.values) - xh @ scenario.plant.c_out
            m["d_new_identity_residual"] = float(np.max(np.abs(dh - traces["d_new_hat"].values)))
    if {"z", "z_p", "z_s", "u_zp", "u_zs", "u"} <= set(traces):
        z = traces["z"].values
        zr = np.max(np.abs(traces["z_p"].values + traces["z_s"].values - z)) / (1.0 + np.max(np.abs(z)))
        u = traces["u"].values
        ur = np.max(np.abs(traces["u_zp"].values + traces["u_zs"].values - u)) / (1.0 + np.max(np.abs(u)))
        m["saturation_split_residual"] = float(max(zr, ur))
    if "sat_v" in traces and "v" in traces:
        m["saturated_fraction"] = float(np.mean(np.abs(traces["v"].values) > np.abs(traces["sat_v"].values) + 1e-15))
    if "u_p" in traces and "u" in traces:
        tail = t >= t[-1] * 0.75
        m["delta_s"] = float(np.max(np.abs(traces["u"].values[tail] - traces["u_p"].values[tail])))
    if "y_p" in traces:
        tail = t >= t[-1] * 0.75
        m["delta_r"] = float(np.max(np.abs(traces["y_p"].values[tail] - traces["r"].values[tail])))
    if scenario is not None:
        m["xi_bound"] = scenario.xi_limit
        m["eps_h"] = scenario.eps_h
        m["eps_tau"] = scenario.eps_tau
        m["gamma"] = scenario.gain.gamma if scenario.gain is not None else None
    return m


_CONFIG_KEYS = {"scenario", "case", "ref", "dt", "horizon", "seed", "noise", "out",
                "a", "theta_hat", "corrected_coupling", "decomposition"}


def load_config(path) -> dict:
    """Read a JSON run configuration; keys mirror the command-line flags."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("configuration must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown configuration key(s): {sorted(unknown)}")
    if isinstance(data.get("noise"), str):
        data["noise"] = {"on": True, "off": False}[data["noise"]]
    return data


def scenario_from_config(cfg: Mapping) -> Scenario:
    keys = ("dt", "horizon", "seed", "noise", "a", "theta_hat", "corrected_coupling", "decomposition")
    return build_scenario(cfg["scenario"], cfg.get("case"), **{k: cfg[k] for k in keys if k in cfg})


def channel_constant(sc: Scenario, dt: float = 1e-3) -> float:
    """Direct L1 gain of ``C(s)(H(s) e^{-tau s} - 1)`` for the scenario."""
    return l1_gain_with_delay(sc.C * sc.plant.channel, sc.plant.delay, sc.C, dt=dt)


def random_xi_trials(sc: Scenario, n_trials: int = 100, seed: int = 0,
                     horizon: float = 20.0, dt: float | None = None) -> np.ndarray:
    """Peak ``|xi|`` for random bounded commands through the scenario's chain.

    Each trial draws a command ``v`` uniform in ``[-5a, 5a]`` at knots spaced
    by a per-trial hold time in ``[0.05, 2]`` s, interpolated linearly between
    knots, then passes ``C(s) sat_a(v)`` through ``H(s) e^{-tau s}``. All
    trials run as one vectorized batch.
    """
    dt = sc.dt if dt is None else dt
    rng = np.random.default_rng(seed)
    n = int(round(horizon / dt)) + 1
    t = dt * np.arange(n)
    v = np.empty((n, n_trials))
    for j in range(n_trials):
        hold = rng.uniform(0.05, 2.0)
        knots = np.arange(0.0, horizon + hold, hold)
        v[:, j] = np.interp(t, knots, rng.uniform(-5.0 * sc.a, 5.0 * sc.a, knots.size))
    u = filter_samples(sc.C, np.clip(v, -sc.a, sc.a), dt)
    u_xi = filter_samples(sc.plant.channel, _delay_samples(u, sc.plant.delay, dt), dt)
    return np.max(np.abs(u_xi - u), axis=0)
