import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asdtrack.engine import (
    AlgebraicLoopError,
    CausalityError,
    DelayLine,
    DynamicBlock,
    Network,
    SimConfig,
    Signal,
    SimulationAbort,
    colored_noise,
    colored_noise_step,
    delayed_sample,
    rk4_step,
    run_network,
    saturate,
    traces_to_csv,
)


def decay(t, x, u):
    return -x


def test_rk4_exponential():
    x = np.array([1.0])
    for k in range(1000):
        x = rk4_step(decay, x, k * 1e-3, 1e-3)
    assert abs(x[0] - math.exp(-1.0)) < 1e-9


def test_rk4_zero_rate_keeps_state():
    x = np.array([0.3, -2.0])
    assert np.array_equal(rk4_step(lambda t, x, u: np.zeros(2), x, 0.0, 0.1), x)


def test_rk4_uses_input_sampler_and_blocks():
    blk = DynamicBlock("int", outputs=("y",), output=lambda t, x, s: {"y": x[0]},
                       derivative=lambda t, x, u: np.array([u]), x0=[0.0])
    x = rk4_step(blk, np.zeros(1), 0.0, 0.5, input_sampler=lambda t: 2.0 * t)
    assert x[0] == pytest.approx(0.25, abs=1e-15)  # integral of 2t over [0, 0.5]


def test_rk4_non_finite_aborts():
    with pytest.raises(SimulationAbort) as err:
        rk4_step(lambda t, x, u: np.array([np.inf]), np.zeros(1), 1.0, 0.1)
    assert err.value.time == pytest.approx(1.1)


def _cubic(t, x, u):
    th = 0.2 * np.sin(0.1 * t + 1.0)
    return -x - (1.0 + th) * x ** 3 + np.sin(t - 0.1) + 0.5 * np.sin(0.2 * t)


def _terminal(dt, horizon=5.0):
    # long double state so that truncation error, not round-off, is measured
    steps = int(round(1.0 / dt))
    h = np.longdouble(1) / np.longdouble(steps)
    x = np.array([1.0], dtype=np.longdouble)
    for k in range(int(round(horizon * steps))):
        x = rk4_step(_cubic, x, np.longdouble(k) * h, h)
    return x[0]


def test_rk4_fourth_order_on_cubic_plant():
    ref = _terminal(1e-3 / 8)
    ratio = abs(_terminal(1e-3) - ref) / abs(_terminal(5e-4) - ref)
    assert 16 * 0.8 <= float(ratio) <= 16 * 1.2


def test_sim_config():
    assert SimConfig(1e-3, 60.0).n_steps == 60000
    assert SimConfig(0.3, 1.0).n_steps == 3
    with pytest.raises(ValueError):
        SimConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        SimConfig(1.0, 0.5)


def test_signal_is_read_only_and_finite():
    s = Signal(0.1, [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 3.0
    assert s.at(0.15) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        Signal(0.1, [np.nan])


def _filled(tau, fn, dt=1e-3, horizon=2.0):
    line = DelayLine(tau)
    for k in range(int(round(horizon / dt)) + 1):
        line.push(k * dt, fn(k * dt))
    return line


def test_delay_zero_is_identity():
    line = _filled(0.0, math.sin)
    for t in (0.0, 0.5, 1.234, 2.0):
        assert delayed_sample(line, t) == pytest.approx(math.sin(t), abs=2e-7)
        assert delayed_sample(line, round(t, 3)) == math.sin(round(t, 3))


def test_delay_shifts_sine():
    dt = 1e-3
    line = _filled(0.1, math.sin, dt)
    t = np.linspace(0.1, 2.0, 777)
    err = max(abs(delayed_sample(line, tk) - math.sin(tk - 0.1)) for tk in t)
    assert err <= dt ** 2 / 8 * 1.01  # linear interpolation bound, |sin''| <= 1


def test_delay_prehistory_and_causality():
    line = _filled(0.1, lambda t: 1.0 + t, horizon=0.5)
    assert delayed_sample(line, 0.05) == 0.0
    with pytest.raises(CausalityError):
        delayed_sample(line, 0.7)
    with pytest.raises(CausalityError):
        line.push(0.2, 0.0)
    assert DelayLine(0.1, prehistory=2.5).read(0.0) == 2.5


def test_delay_exact_for_piecewise_linear():
    knots = [0.0, 0.3, 0.8, 1.5, 2.0]
    vals = [0.0, 1.2, -0.7, 0.4, 0.4]
    fn = lambda t: float(np.interp(t, knots, vals))
    line = _filled(0.2, fn)
    for t in np.arange(0.2, 2.0, 0.0125):
        assert delayed_sample(line, t) == pytest.approx(fn(t - 0.2), abs=1e-13)


def test_saturate_examples():
    assert saturate(0.5, 1.0) == 0.5
    assert saturate(3.0, 1.0) == 1.0
    assert saturate(-3.0, 1.0) == -1.0
    np.testing.assert_array_equal(saturate(np.array([-2.0, 0.1, 4.0]), 1.5), [-1.5, 0.1, 1.5])
    with pytest.raises(ValueError):
        saturate(1.0, 0.0)


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
def test_saturate_properties(v, a):
    s = saturate(v, a)
    assert -a <= s <= a
    assert saturate(s, a) == s
    assert saturate(-v, a) == -s
    assert s == math.copysign(min(abs(v), a), v) or v == 0


def test_noise_deterministic():
    assert np.array_equal(colored_noise(2000, 1e-3, 5), colored_noise(2000, 1e-3, 5))
    assert not np.array_equal(colored_noise(2000, 1e-3, 5), colored_noise(2000, 1e-3, 6))
    rng1, rng2 = np.random.default_rng(3), np.random.default_rng(3)
    assert colored_noise_step(0.2, 1e-3, rng1) == colored_noise_step(0.2, 1e-3, rng2)


def test_noise_stationary_statistics():
    dt, horizon = 1e-2, 1e4
    z = colored_noise(int(horizon / dt), dt, 42)[int(100 / dt):]  # drop the start-up transient
    var_oracle = 0.1 ** 2 * 1.0 / (2 * 0.1)
    assert np.var(z) == pytest.approx(var_oracle, rel=0.10)
    # correlation time 10 s: about horizon / (2 * 10) independent samples
    eff = (horizon - 100) / 20.0
    assert abs(np.mean(z)) <= 3 * math.sqrt(var_oracle) / math.sqrt(eff)


def _single(x0=1.0):
    return DynamicBlock("decay", outputs=("x",), output=lambda t, x, s: {"x": x[0]},
                        derivative=lambda t, x, s: -x, x0=[x0], feedthrough=False)


def test_network_single_block_matches_rk4_loop():
    tr = run_network(Network([_single()]), SimConfig(1e-3, 1.0), ["x"])
    x = np.array([1.0])
    ref = [1.0]
    for k in range(1000):
        x = rk4_step(decay, x, k * 1e-3, 1e-3)
        ref.append(x[0])
    assert np.array_equal(tr["x"].values, ref)


def test_network_double_integrator():
    i1 = DynamicBlock("i1", outputs=("v",), inputs=("one",), output=lambda t, x, s: {"v": x[0]},
                      derivative=lambda t, x, s: np.array([s["one"]]), x0=[0.0], feedthrough=False)
    i2 = DynamicBlock("i2", outputs=("p",), inputs=("v",), output=lambda t, x, s: {"p": x[0]},
                      derivative=lambda t, x, s: np.array([s["v"]]), x0=[0.0], feedthrough=False)
    tr = run_network(Network([i2, i1], sources={"one": lambda t: 1.0}), SimConfig(1e-2, 3.0), ["p"])
    t = tr["p"].t
    np.testing.assert_allclose(tr["p"].values, t ** 2 / 2, atol=1e-12)


def test_network_rohrs_free_response():
    # x' = -(3 + theta) x + 2 u with theta = -2, u = 0
    plant = DynamicBlock("plant", outputs=("y",), inputs=("u",), output=lambda t, x, s: {"y": x[0]},
                         derivative=lambda t, x, s: -(3.0 - 2.0) * x + 2.0 * s["u"], x0=[1.0],
                         feedthrough=False)
    tr = run_network(Network([plant], sources={"u": lambda t: 0.0}), SimConfig(1e-3, 5.0), ["y"])
    np.testing.assert_allclose(tr["y"].values, np.exp(-tr["y"].t), atol=1e-6)


def test_network_delay_feedback():
    # x' = -x(t - 0.5) closed through a delay line; first interval is x = 1 - t
    blk = DynamicBlock("x", outputs=("x",), inputs=("xd",), output=lambda t, x, s: {"x": x[0]},
                       derivative=lambda t, x, s: np.array([-s["xd"]]), x0=[1.0], feedthrough=False)
    line = DelayLine(0.5, source="x", name="xd", prehistory=1.0)
    tr = run_network(Network([blk], delays=[line]), SimConfig(1e-3, 1.0), ["x"])
    assert tr["x"].values[500] == pytest.approx(0.5, abs=1e-12)
    # second interval: x = 1 - t + (t - 0.5)^2 / 2
    assert tr["x"].values[1000] == pytest.approx(0.125, abs=1e-6)


def test_network_detects_algebraic_loop():
    a = DynamicBlock("a", outputs=("p",), inputs=("q",), output=lambda t, x, s: {"p": s["q"]})
    b = DynamicBlock("b", outputs=("q",), inputs=("p",), output=lambda t, x, s: {"q": s["p"]})
    with pytest.raises(AlgebraicLoopError):
        Network([a, b])


def test_network_rejects_unwired_and_short_delay():
    a = DynamicBlock("a", outputs=("p",), inputs=("nowhere",), output=lambda t, x, s: {"p": 0.0})
    with pytest.raises(ValueError, match="not wired"):
        Network([a])
    line = DelayLine(1e-4, source="x", name="xd")
    net = Network([_single()], delays=[line])
    with pytest.raises(ValueError, match="shorter than the step"):
        run_network(net, SimConfig(1e-3, 1.0), ["x"])


def test_network_abort_names_block():
    blow = DynamicBlock("blowup", outputs=("x",), output=lambda t, x, s: {"x": x[0]},
                        derivative=lambda t, x, s: x ** 2, x0=[1.0], feedthrough=False)
    with pytest.raises(SimulationAbort) as err, np.errstate(over="ignore", invalid="ignore"):
        run_network(Network([blow]), SimConfig(0.1, 5.0), ["x"])
    assert err.value.block == "blowup" and err.value.time <= 2.0


def test_csv_format_and_determinism():
    tr = run_network(Network([_single()]), SimConfig(0.25, 0.5), ["x"])
    text = traces_to_csv(tr)
    assert text.splitlines() == ["t,x", "0,1", "0.25,0.778808594", "0.5,0.606542826"]  # (1 - h + h^2/2 - h^3/6 + h^4/24)^k
    again = traces_to_csv(run_network(Network([_single()]), SimConfig(0.25, 0.5), ["x"]))
    assert again == text
