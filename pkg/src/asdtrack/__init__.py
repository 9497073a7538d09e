"""Additive-state-decomposition tracking control for uncertain SISO plants.

The package is layered: :mod:`~asdtrack.lti` (transfer functions, L1
gains), :mod:`~asdtrack.engine` (fixed-step RK4 block simulation),
:mod:`~asdtrack.core` (input redefinition, model transformation, observers,
decomposition), :mod:`~asdtrack.controllers` (tracking laws and the
integrated controller) and :mod:`~asdtrack.benchmarks` (ready-made
scenarios and metrics).
"""

from .benchmarks import (
    CSV_COLUMNS,
    SCENARIOS,
    Scenario,
    ScenarioResult,
    build_scenario,
    compute_metrics,
    run_scenario,
)
from .controllers import (
    ControllerStack,
    ReferenceSignal,
    approx_derivative,
    nonlinear_law,
    realize_input,
    rohrs_law,
    twocart_law,
)
from .core import (
    InputChain,
    TransformedSystem,
    UncertainPlant,
    apply_channel,
    decompose,
    lyapunov_gamma,
    observe_new,
    observe_primary,
    transform,
    xi_bound,
)
from .engine import (
    DelayLine,
    DynamicBlock,
    Network,
    Signal,
    SimConfig,
    SimulationAbort,
    colored_noise,
    rk4_step,
    run_network,
    saturate,
)
from .lti import (
    TransferFunction,
    compose,
    impulse_response,
    l1_gain,
    proper_inverse,
    realize,
    stability_check,
)

__version__ = "0.1.0"
