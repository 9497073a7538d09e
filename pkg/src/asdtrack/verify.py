"""Invariant suites behind ``asdtrack verify``.

Each suite returns a list of :class:`Check` rows (name, measured value,
bound, pass flag). Closed-loop suites share scenario runs through a small
cache so ``all`` does not repeat simulations.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

from .benchmarks import build_scenario, channel_constant, random_xi_trials, run_scenario
from .lti import TransferFunction, l1_gain

__all__ = ["Check", "SUITES", "run_suite", "format_report"]

C_REF = TransferFunction([1.0], [2.0, 1.0])
H_REF = TransferFunction([229.0], [1.0, 30.0, 229.0])

# (name, case, reference, noise) for the closed-loop suites
_RUNS = (
    ("rohrs", None, "step", False),
    ("nonlinear", None, "sine", False),
    ("twocart", 2, "step", True),
)


class Check(NamedTuple):
    name: str
    value: float
    bound: str
    passed: bool | None

    def line(self) -> str:
        tag = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        return f"[{tag}] {self.name}: {self.value:.6g} ({self.bound})"


def _within(name, value, target, tol):
    return Check(name, value, f"{target} +/- {tol}", abs(value - target) <= tol)


def _at_most(name, value, bound, label=None):
    return Check(name, value, f"<= {label or f'{bound:.6g}'}", value <= bound)


class _Runs:
    def __init__(self, horizon: float = 20.0):
        self.horizon = horizon
        self._cache = {}

    def get(self, name, case, ref, noise):
        key = (name, case, ref, noise)
        if key not in self._cache:
            sc = build_scenario(name, case, noise=noise, horizon=self.horizon)
            self._cache[key] = run_scenario(sc, ref)
        return self._cache[key]

    def each(self):
        for spec in _RUNS:
            yield spec, self.get(*spec)


def _label(spec):
    name, case, ref, noise = spec
    tag = name if case is None else f"{name}{case}"
    return f"{tag}/{ref}" + ("/noise" if noise else "")


def suite_l1(runs=None):
    eps_tau = l1_gain(TransferFunction([1.0, 0.0], [1.0]) * C_REF)
    eps_h = l1_gain(C_REF * (H_REF - 1.0))
    sc = build_scenario("twocart", 1, noise=False)
    direct = channel_constant(sc)
    component = sc.eps_h + sc.plant.delay * sc.eps_tau
    return [
        _within("eps_tau = L1(s C)", eps_tau, 1.0, 0.02),
        _within("eps_H = L1(C (H - 1))", eps_h, 0.12, 0.01),
        _at_most("two-cart L1(C (H e^-0.1s - 1)) vs component bound", direct, component,
                 f"eps_H + tau eps_tau = {component:.4f}"),
        Check("two-cart direct constant vs printed 0.17", direct, "0.17 +/- 0.02 (reported)", None),
    ]


def suite_decomposition(runs=None):
    runs = runs or _Runs()
    out = []
    for spec, res in runs.each():
        m = res.metrics
        out.append(_at_most(f"{_label(spec)} additive sum residual", m["decomposition_residual"], 1e-8))
        out.append(_at_most(f"{_label(spec)} saturation split residual", m["saturation_split_residual"], 1e-10))
    return out


def suite_observer(runs=None):
    runs = runs or _Runs()
    out = []
    for spec, res in runs.each():
        m = res.metrics
        out.append(_at_most(f"{_label(spec)} observer residual", m["observer_residual"], 1e-6))
        out.append(_at_most(f"{_label(spec)} d_new_hat identity", m["d_new_identity_residual"], 0.0, "0"))
    return out


def suite_xi(runs=None, n_trials: int = 100):
    runs = runs or _Runs()
    out = []
    for spec, res in runs.each():
        m = res.metrics
        out.append(_at_most(f"{_label(spec)} closed-loop sup|xi|", m["sup_xi"], 1.02 * m["xi_bound"],
                            f"1.02 x {m['xi_bound']:.4g}"))
    for name, case in (("rohrs", None), ("nonlinear", None), ("twocart", 1)):
        sc = build_scenario(name, case, noise=False)
        peak = float(random_xi_trials(sc, n_trials).max())
        out.append(_at_most(f"{name} random commands ({n_trials}) max sup|xi|", peak, 1.02 * sc.xi_limit,
                            f"1.02 x {sc.xi_limit:.4g}"))
    return out


SUITES: dict[str, Callable] = {
    "l1": suite_l1,
    "decomposition": suite_decomposition,
    "observer": suite_observer,
    "xi": suite_xi,
}


def run_suite(name: str = "all", horizon: float = 20.0) -> list[Check]:
    if name != "all" and name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    runs = _Runs(horizon)
    names = list(SUITES) if name == "all" else [name]
    checks = []
    for n in names:
        checks.extend(SUITES[n](runs))
    return checks


def format_report(checks) -> str:
    lines = [c.line() for c in checks]
    failed = sum(c.passed is False for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed" if not failed
                 else f"{failed} of {len(checks)} checks FAILED")
    return "\n".join(lines)
