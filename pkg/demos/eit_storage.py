"""EIT storage in an optically thick ensemble.

Slow-light delay of a long pulse, then the time-reversal iteration that finds
the input shape maximising store-plus-retrieve efficiency.
"""

import math

import numpy as np

from ensemble_interface import maxwell_bloch as mb
from ensemble_interface.interface_maps import EnsembleParams

d = 50.0
p = EnsembleParams(d=d, gamma=1.0, rabi=1.0)
sig = 6 * math.sqrt(d)
t0 = 4 * sig
T = t0 + d + 4.5 * sig
nz, nt = 400, int(4.2 * T) + 1
delay, expected = mb.group_delay(p, lambda t: np.exp(-((t - t0) ** 2) / (2 * sig**2)) + 0j, T, nz, nt)
print(f"group delay at d = {d:.0f}: {delay:.2f}  (L/v_g = {expected:.2f})")

print("\noptimal-input iteration, control area fixed to 2 d gamma")
for d in (10.0, 30.0, 100.0):
    T = 10.0
    q = EnsembleParams(d=d, gamma=1.0, rabi=math.sqrt(2 * d / T))
    nz, nt = int(8 * d), int(8 * d)
    _, effs = mb.iterate_optimal_input(q, 8, T, nz, nt)
    steps = ", ".join(f"{e:.4f}" for e in effs)
    print(f"  d = {d:5.0f}: round-trip efficiency per iteration {steps}")
