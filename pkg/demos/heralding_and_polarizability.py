"""Heralded entanglement of two ensembles and the cesium polarizability tensor."""

from ensemble_interface import atomic_structure as ats
from ensemble_interface import fock_sim as fs

print("heralded entanglement: one click behind the 50/50 beam splitter")
print("  kappa  efficiency  P(herald)   concurrence  |11> weight")
for kappa in (0.05, 0.2, 0.5):
    w = fs.dlcz_write(kappa, 10)
    for eta in (1.0, 0.5):
        prob, rho = fs.herald_entangle(w, w, efficiency=eta)
        print(f"  {kappa:5.2f}  {eta:10.1f}  {prob:9.3e}  {fs.concurrence(rho):11.4f}  {rho.population('11'):.2e}")

b = fs.bell_state()
for eta in (1.0, 0.5):
    prob, rho = fs.entanglement_swap(b, b, eta)
    print(f"swap of two Bell pairs, readout {eta}: P = {prob:.4f}, concurrence {fs.concurrence(rho):.4f}")

rho = fs.single_photon_split_state(0.15, 0.09)
print(f"single photon p=0.15 with suppressed two-photon part, split: concurrence {fs.concurrence(rho):.4f}")

print("\ncesium F=4 on the D2 line: a0, a1, a2 against detuning from F'=5")
for mhz in (-5000, -1000, -200, 100, 230, 300, 500, 5000):
    c = ats.polarizability_coeffs(ats.CESIUM_D2_F4, mhz * ats.TWO_PI_MHZ)
    print(f"  {mhz:6d} MHz: {c.a0:9.5f} {c.a1:9.5f} {c.a2:10.2e}")
a = ats.asymptotic_coeffs(ats.CESIUM_D2_F4)
print(f"  far detuned: {a.a0:9.5f} {a.a1:9.5f} {a.a2:10.2e}")
