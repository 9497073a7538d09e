"""How large can the input-channel mismatch xi get?

The controller never sees H(s) or the delay. What it relies on is a bound
on xi = (H(s) e^{-tau s} - 1) C(s) sat_a(v), which follows from L1 gains
of known transfer functions.
"""

import numpy as np

from asdtrack import InputChain, Signal, TransferFunction, apply_channel, l1_gain
from asdtrack.lti import l1_gain_with_delay

C = TransferFunction([1.0], [2.0, 1.0])
H = TransferFunction([229.0], [1.0, 30.0, 229.0])
s = TransferFunction([1.0, 0.0], [1.0])

# The two component constants: one for the unmodeled gain, one for the delay.
eps_h = l1_gain(C * (H - 1.0))
eps_tau = l1_gain(s * C)
print(f"eps_H   = {eps_h:.5f}")
print(f"eps_tau = {eps_tau:.5f}")

# With a 0.1 s delay the component bound is eps_H + 0.1 eps_tau. The L1 gain
# of the full operator C (H e^{-0.1 s} - 1) is tighter.
direct = l1_gain_with_delay(C * H, 0.1, C)
print(f"component bound  = {eps_h + 0.1 * eps_tau:.5f}")
print(f"direct L1 gain   = {direct:.5f}")

# The direct constant is attained: a slow +-5 square wave through the
# saturated chain (a = 1) drives |xi| right up to it.
dt = 1e-3
t = np.arange(0.0, 40.0, dt)
u = InputChain(C, 1.0).run(Signal(dt, 5.0 * np.sign(np.sin(0.1 * t))))
_, xi = apply_channel(u, H, 0.1)
print(f"square-wave peak |xi| = {np.max(np.abs(xi.values)):.5f}")
