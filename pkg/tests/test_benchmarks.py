import json
import math

import numpy as np
import pytest

from asdtrack.benchmarks import (
    CSV_COLUMNS,
    TWO_CART_ESTIMATE,
    TWO_CART_TRUE,
    build_scenario,
    channel_constant,
    compute_metrics,
    load_config,
    primary_transfer_function,
    random_xi_trials,
    run_scenario,
    scenario_from_config,
    two_cart_matrix,
)
from asdtrack.core import lyapunov_gamma
from asdtrack.engine import Signal


def test_build_rohrs():
    sc = build_scenario("rohrs")
    assert sc.plant.theta(3.0)[0] == -2.0
    assert sc.plant.x0[0] == 1.0
    assert sc.C.allclose(build_scenario("nonlinear").C)
    assert sc.C.dc_gain == 1.0 and sc.C.poles[0] == pytest.approx(-0.5)
    assert sc.eps_h == pytest.approx(0.12, abs=0.01)
    assert sc.eps_tau == pytest.approx(1.0, abs=0.02)
    assert sc.a == 5.0 and sc.plant.delay == 0.0


def test_build_nonlinear():
    sc = build_scenario("nonlinear")
    assert sc.plant.delay == 0.1
    assert sc.plant.x0[0] == 1.0
    for t in (0.0, 2.0, 7.5):
        assert sc.plant.disturbance(t) == pytest.approx(0.5 * math.sin(0.2 * t))
        assert sc.plant.theta(t)[0] == pytest.approx(0.2 * math.sin(0.1 * t + 1.0))
    assert sc.plant.channel.dc_gain == 1.0 and sc.plant.channel.order == 0


def test_build_twocart_cases():
    sc = build_scenario("twocart", 2)
    np.testing.assert_array_equal(sc.theta_hat, [1, 1, 1, 0.9, 1.5, 1])
    np.testing.assert_array_equal(sc.plant.theta(0.0), [1, 2, 0.8, 0.5, 1.3, 0.9])
    sc1 = build_scenario("twocart", 1)
    np.testing.assert_array_equal(sc1.theta_hat, sc1.plant.theta(0.0))
    sc3 = build_scenario("twocart", 3)
    np.testing.assert_array_equal(sc3.theta_hat, TWO_CART_ESTIMATE)
    np.testing.assert_array_equal(sc3.plant.theta(0.0), TWO_CART_ESTIMATE)
    assert sc.a == 1.0 and sc.plant.delay == 0.1 and sc.noise and sc.seed == 42
    assert sc.horizon == 100.0 and not np.any(sc.plant.x0)


def test_build_errors():
    with pytest.raises(ValueError, match="unknown scenario"):
        build_scenario("pendulum")
    with pytest.raises(ValueError, match="case"):
        build_scenario("twocart", 9)
    with pytest.raises(ValueError, match="case"):
        build_scenario("twocart")
    with pytest.raises(ValueError, match="no cases"):
        build_scenario("rohrs", 1)
    with pytest.raises(ValueError, match="override"):
        build_scenario("rohrs", colour="red")
    with pytest.raises(ValueError, match="length"):
        build_scenario("twocart", 1, theta_hat=[1.0, 2.0])
    with pytest.raises(ValueError, match="theta < -1"):
        build_scenario("nonlinear", theta_hat=[-1.5])
    with pytest.raises(ValueError, match="Hurwitz"):
        build_scenario("rohrs", theta_hat=[-4.0])


def test_two_cart_matrix_as_printed_and_corrected():
    A = two_cart_matrix(TWO_CART_TRUE)
    assert A[3, 2] == pytest.approx(0.9 / 2.0)  # b2/m2 as printed
    assert two_cart_matrix(TWO_CART_TRUE, corrected_coupling=True)[3, 2] == pytest.approx(1.3 / 2.0)
    for theta in (TWO_CART_TRUE, TWO_CART_ESTIMATE):
        for corrected in (False, True):
            Ai = two_cart_matrix(theta, corrected)
            assert np.all(np.linalg.eigvals(Ai).real < 0)
            G = primary_transfer_function(Ai, [0, 0, 1, 0], [0, 1, 0, 0])
            assert np.all(G.zeros.real < 0)
    sc = build_scenario("twocart", 1, corrected_coupling=True, noise=False)
    assert sc.A_hat[3, 2] == pytest.approx(1.3 / 2.0)


def test_primary_transfer_function_matches_resolvent():
    A = two_cart_matrix(TWO_CART_ESTIMATE)
    b, c = np.array([0, 0, 1.0, 0]), np.array([0, 1.0, 0, 0])
    G = primary_transfer_function(A, b, c)
    for s in (0.3j, 1.0 + 2j, 4.0):
        assert G(s) == pytest.approx(c @ np.linalg.solve(s * np.eye(4) - A, b), rel=1e-10)


def test_scenario_gain_certificate():
    sc = build_scenario("twocart", 1, noise=False)
    assert sc.gain.gamma == pytest.approx(lyapunov_gamma(two_cart_matrix(TWO_CART_TRUE)).gamma)
    assert build_scenario("rohrs").gain.gamma == pytest.approx(2 * (1 / 6) ** 2 / (1 / 6))


def test_compute_metrics_analytic():
    dt = 1e-3
    t = np.arange(0, 20 * math.pi + dt / 2, dt)
    r = Signal(dt, np.full(t.size, 0.5))
    m = compute_metrics({"y": r, "r": r})
    assert m["settled_sup_error"] == 0.0 and m["settled_rms_error"] == 0.0
    y = Signal(dt, 0.5 + 0.1 * np.sin(t))
    m = compute_metrics({"y": y, "r": r}, window=(0.0, 20 * math.pi))
    assert m["settled_sup_error"] == pytest.approx(0.1, rel=1e-6)
    assert m["settled_rms_error"] == pytest.approx(0.1 / math.sqrt(2), rel=1e-4)
    m = compute_metrics({"y": y, "r": r})
    assert m["window"] == pytest.approx([t[-1] / 2, t[-1]])
    with pytest.raises(ValueError):
        compute_metrics({"y": y, "r": r}, window=(100.0, 200.0))


def test_rohrs_short_run_invariants(closed_loop):
    res = closed_loop("rohrs", horizon=20.0)
    m = res.metrics
    assert m["sup_xi"] <= 0.12 * res.scenario.a
    assert m["observer_residual"] <= 1e-6 and m["decomposition_residual"] <= 1e-8
    assert m["saturation_split_residual"] <= 1e-10
    assert list(res.traces) and set(CSV_COLUMNS) <= set(res.traces)
    assert res.filename == "rohrs_step_0.csv"
    assert res.csv().splitlines()[0] == "t," + ",".join(CSV_COLUMNS)
    assert json.loads(res.metrics_json())["gamma"] == pytest.approx(1 / 3)


def test_secondary_bound_composition_on_rohrs(closed_loop):
    # limsup |y - r| <= delta_r + gamma |b| |c| delta_s on the linear example
    # delta_s and delta_r are taken over t >= 45; judge the residual once the
    # secondary transient carried into that window has decayed (pole -3)
    res = closed_loop("rohrs", ref="sine")
    m = res.metrics
    t = res.traces["y"].t
    tail = t >= 52.5
    limsup = np.max(np.abs(res.traces["y"].values[tail] - res.traces["r"].values[tail]))
    assert limsup <= m["delta_r"] + m["gamma"] * 2.0 * 1.0 * m["delta_s"] + 1e-12


def test_model_error_iss_bound_on_rohrs(closed_loop):
    # x - x_new obeys e' = -e + 2 x_new + 2 xi (theta = -2, theta_hat = 0), gamma(A = -1) = 1
    res = closed_loop("rohrs", ref="sine")
    x = res.traces["x"].values.ravel()
    xn = res.traces["x_new"].values.ravel()
    forcing = 2.0 * xn + 2.0 * res.traces["xi"].values
    tail = res.traces["y"].t >= 40.0
    gamma = lyapunov_gamma([[-1.0]]).gamma
    assert np.max(np.abs(x - xn)[tail]) <= gamma * np.max(np.abs(forcing))


def test_noise_determinism():
    a = run_scenario(build_scenario("twocart", 2, horizon=3.0, seed=11), "step")
    b = run_scenario(build_scenario("twocart", 2, horizon=3.0, seed=11), "step")
    c = run_scenario(build_scenario("twocart", 2, horizon=3.0, seed=12), "step")
    assert a.metrics == b.metrics and a.csv() == b.csv()
    assert a.csv() != c.csv()


def test_noise_off_is_noise_free():
    res = run_scenario(build_scenario("twocart", 3, horizon=3.0, noise=False), "zero")
    assert not np.any(res.traces["y"].values)


def test_random_xi_trials_within_bound():
    for name, case in (("rohrs", None), ("nonlinear", None), ("twocart", 1)):
        sc = build_scenario(name, case, noise=False)
        peaks = random_xi_trials(sc, 10, seed=3, horizon=10.0)
        assert peaks.shape == (10,)
        assert np.all(peaks <= 1.02 * sc.xi_limit)


def test_channel_constant_between_bounds():
    sc = build_scenario("twocart", 1, noise=False)
    k = channel_constant(sc)
    assert sc.eps_h <= k <= sc.eps_h + 0.1 * sc.eps_tau
    assert k == pytest.approx(0.19914, abs=1e-4)


def test_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": "twocart", "case": 2, "seed": 7, "noise": "off",
                                "a": 2.0, "corrected_coupling": True}))
    cfg = load_config(path)
    sc = scenario_from_config(cfg)
    assert sc.seed == 7 and sc.noise is False and sc.a == 2.0 and sc.corrected_coupling
    path.write_text(json.dumps({"scenario": "rohrs", "bogus": 1}))
    with pytest.raises(ValueError, match="bogus"):
        load_config(path)
