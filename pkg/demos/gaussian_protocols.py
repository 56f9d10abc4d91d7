"""QND interaction plus feedback: squeezing, entanglement, memory and teleportation.

Run with ``python3 demos/gaussian_protocols.py``.
"""

import numpy as np

from ensemble_interface import protocols as pr

print("Spin squeezing after one QND pass and optimal feedback")
for kappa in (0.5, 1.0, 2.0, 4.0):
    r = pr.spin_squeeze(kappa)
    print(f"  kappa = {kappa:3.1f}: Var(P_A) = {r.figures['var_PA_feedback']:.4f}")

print("\nBest squeezing allowed by optical depth with spontaneous emission")
for d in (1, 10, 100, 1000):
    print(f"  d = {d:5d}: {pr.squeezing_bound(d):.4f}")

print("\nTwo-ensemble entanglement (EPR variance, entanglement of formation)")
for kappa in (0.5, 1.0, 2.0):
    f = pr.entangle_ensembles(kappa).figures
    print(f"  kappa = {kappa:3.1f}: " + ", ".join(f"{k} = {v:.4f}" for k, v in f.items() if isinstance(v, float)))

print("\nMemory: class-averaged fidelity for coherent inputs vs the classical benchmark")
for n_bar in (1, 4, 8, 20):
    f = pr.memory_store(1.0, 1.0, n_bar=n_bar).figures
    bench = pr.classical_benchmark(pr.InputClass("coherent", n_bar))
    print(f"  n = {n_bar:3d}: quantum {f['fidelity']:.4f}, classical {bench:.4f}")

print("\nTeleportation resource: EPR variance of the entangling channel")
ks = np.linspace(0.5, 3.0, 11)
for k in ks:
    print(f"  kappa = {k:4.2f}: Delta_EPR = {pr.teleport(k).figures['delta_epr']:.4f}")
kbest, emin = pr.teleport_epr_minimum()
print(f"  minimum {emin:.5f} at kappa = {kbest:.4f}")
