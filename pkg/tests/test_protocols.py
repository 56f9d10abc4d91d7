import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from ensemble_interface import protocols as pr
from ensemble_interface.gaussian_core import eof_from_epr, prepare_state, vacuum


# --- squeezing ---------------------------------------------------------------------------

def test_squeeze_kappa_one():
    fig = pr.spin_squeeze(1.0).figures
    assert fig["var_PA_conditional"] == pytest.approx(0.25)
    assert fig["var_XA_conditional"] == pytest.approx(1.0)
    assert fig["var_PA_feedback"] == pytest.approx(0.25)
    assert fig["gain"] == pytest.approx(-0.5)


def test_squeeze_kappa_zero_is_vacuum():
    r = pr.spin_squeeze(0.0)
    assert r.figures["var_PA_feedback"] == pytest.approx(0.5)
    assert np.allclose(r.final_state.cov, 0.5 * np.eye(2))


def test_squeeze_with_losses():
    assert pr.spin_squeeze(1.0, eta_A=0.1, epsilon=0.2).figures["var_PA_feedback"] == pytest.approx(0.3, abs=1e-14)


@pytest.mark.parametrize("kappa", [0.3, 1.0, 2.0, 4.0])
def test_optimal_gain_closed_form(kappa):
    fig = pr.spin_squeeze(kappa).figures
    assert fig["gain"] == pytest.approx(-kappa / (1 + kappa**2), rel=1e-12)
    scan = minimize_scalar(lambda g: pr.spin_squeeze(kappa, gain=g).figures["var_PA_feedback"], bracket=(-2, 0, 2), tol=1e-12)
    assert scan.x == pytest.approx(fig["gain"], abs=1e-6)


def test_squeeze_monte_carlo_needs_seed_and_is_deterministic():
    with pytest.raises(ValueError, match="seed"):
        pr.spin_squeeze(1.0, n_samples=10)
    a = pr.spin_squeeze(1.3, n_samples=2000, seed=4).figures
    b = pr.spin_squeeze(1.3, n_samples=2000, seed=4).figures
    assert a == b


def test_squeeze_loss_validation():
    with pytest.raises(ValueError):
        pr.spin_squeeze(1.0, eta_A=-0.1)


def test_optimal_depth_small_and_d3():
    _, v = pr.optimal_squeezing_for_depth(1e-8)
    assert v == pytest.approx(0.5, abs=1e-8)
    eta, v3 = pr.optimal_squeezing_for_depth(3.0)
    # minimising (1 + d eta^2) / (2 (1 + d eta)) by hand: eta* = (sqrt(1+d) - 1)/d
    assert eta == pytest.approx(1 / 3, abs=1e-6)
    assert v3 == pytest.approx(1 / 3, abs=1e-9)


@pytest.mark.parametrize("d", [1.0, 10.0, 100.0, 1e4])
def test_optimal_depth_bound(d):
    eta, v = pr.optimal_squeezing_for_depth(d)
    assert v == pytest.approx(pr.squeezing_bound(d), abs=1e-9)
    assert eta == pytest.approx((math.sqrt(1 + d) - 1) / d, rel=1e-4)


def test_squeezing_bound_asymptote():
    ratios = [pr.squeezing_bound(d) * math.sqrt(d) for d in (1e4, 1e6, 1e8)]
    assert ratios[-1] == pytest.approx(1.0, rel=1e-3)
    assert ratios == sorted(ratios)


# --- entanglement -------------------------------------------------------------------------

@pytest.mark.parametrize("scheme", ["two-pulse", "magnetic"])
def test_entanglement_zero_coupling(scheme):
    fig = pr.entangle_ensembles(0.0, scheme).figures
    assert fig["delta_epr"] == pytest.approx(2.0)
    assert fig["eof"] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("scheme", ["two-pulse", "magnetic"])
def test_entanglement_kappa_one(scheme):
    fig = pr.entangle_ensembles(1.0, scheme).figures
    assert fig["delta_epr"] == pytest.approx(1.0, abs=1e-12)
    assert fig["var_P_sum"] == pytest.approx(0.5, abs=1e-12)


def test_entanglement_schemes_agree_with_losses():
    two = pr.entangle_ensembles(1.5, "two-pulse", eta_A=0.0, epsilon=0.2).figures["delta_epr"]
    mag = pr.entangle_ensembles(1.5, "magnetic", eta_A=0.0, epsilon=0.2).figures["delta_epr"]
    assert two == pytest.approx(mag, abs=1e-12)
    assert 2 / (1 + 2.25) < two < 2


def test_entanglement_unknown_scheme():
    with pytest.raises(ValueError):
        pr.entangle_ensembles(1.0, "three-pulse")


def test_experimental_epr_point():
    assert eof_from_epr(1.3) == pytest.approx(0.28, abs=0.005)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 4), st.floats(0, 0.9), st.floats(0, 0.9))
def test_eof_positive_iff_entangled(kappa, eta_a, eps):
    fig = pr.entangle_ensembles(kappa, "magnetic", eta_A=eta_a, epsilon=eps).figures
    if fig["delta_epr"] < 2 - 1e-9:
        assert fig["eof"] > 0
    if fig["eof"] > 1e-9:
        assert fig["delta_epr"] < 2


# --- memory --------------------------------------------------------------------------------

def test_memory_unit_gain():
    fig = pr.memory_store(1.0, 1.0, n_bar=10.0).figures
    assert fig["var_XA"] == pytest.approx(1.0)
    assert fig["var_PA"] == pytest.approx(0.5)
    assert fig["class_fidelity"] == pytest.approx(math.sqrt(2 / 3), abs=1e-12)


def test_memory_sign_convention():
    light = prepare_state(1, [(0.7, -0.2)], labels=["L"])
    raw = pr.memory_store(1.0, 1.0, light=light, canonical_phase=False)
    assert raw.figures["mean_XA"] == pytest.approx(-0.2)
    assert raw.figures["mean_PA"] == pytest.approx(-0.7)
    canon = pr.memory_store(1.0, 1.0, light=light)
    assert canon.final_state.expectation("A", "X") == pytest.approx(0.7)
    assert canon.final_state.expectation("A", "P") == pytest.approx(-0.2)


def test_memory_zero_coupling_leaves_atoms():
    r = pr.memory_store(0.0, 0.0, canonical_phase=False, atom_squeeze=0.5)
    assert r.final_state.variance("A", "X") == pytest.approx(0.25)
    assert r.final_state.variance("A", "P") == pytest.approx(1.0)


def test_memory_gain_08_closed_form_and_monte_carlo():
    r = pr.memory_store(0.8, 0.8, n_bar=8.0, mc_samples=1000, seed=21)
    fig = r.figures
    expected = pr.memory_fidelity_formula(8.0, 0.8, 0.8, 0.5 + 0.64 * 0.5, 0.5 * (1 - 0.64) ** 2 + 0.64 * 0.5)
    assert fig["class_fidelity"] == pytest.approx(expected, rel=1e-12)
    assert abs(fig["class_fidelity_mc"] - fig["class_fidelity"]) < 3 * fig["class_fidelity_mc_stderr"]
    assert fig["class_fidelity"] > fig["classical_benchmark"]


def test_memory_monte_carlo_needs_seed():
    with pytest.raises(ValueError, match="seed"):
        pr.memory_store(1.0, 1.0, n_bar=1.0, mc_samples=10)


@pytest.mark.parametrize("n_bar", range(1, 51))
def test_memory_beats_classical_benchmark(n_bar):
    fig = pr.memory_store(1.0, 1.0, n_bar=float(n_bar)).figures
    assert fig["class_fidelity"] > fig["classical_benchmark"]


def test_memory_below_benchmark_for_vacuum_class():
    fig = pr.memory_store(1.0, 1.0, n_bar=0.0).figures
    assert fig["class_fidelity"] < fig["classical_benchmark"] == 1.0


def test_average_fidelity_against_monte_carlo():
    M = np.array([[0.9, 0.1], [0.0, 0.8]])
    V = np.array([[0.8, 0.1], [0.1, 0.7]])
    exact = pr.average_coherent_fidelity(3.0, M, V)
    # independent route: the overlap of a pure coherent state with a Gaussian
    rng = np.random.default_rng(5)
    m = rng.normal(0, math.sqrt(3.0), size=(200_000, 2))
    d = m - m @ M.T
    S = 0.5 * np.eye(2) + V
    inv = np.linalg.inv(S)
    vals = np.exp(-0.5 * np.einsum("ni,ij,nj->n", d, inv, d)) / math.sqrt(np.linalg.det(S))
    assert abs(vals.mean() - exact) < 3 * vals.std() / math.sqrt(len(vals))


# --- benchmarks --------------------------------------------------------------------------

def test_classical_benchmarks():
    assert pr.classical_benchmark(pr.InputClass("coherent", 0.0)) == 1.0
    assert pr.classical_benchmark(pr.InputClass("coherent", 1e9)) == pytest.approx(0.5)
    assert pr.classical_benchmark(pr.InputClass("coherent", 8.0)) == pytest.approx(9 / 17)
    assert abs(9 / 17 - 0.52) < 0.01
    assert pr.classical_benchmark(pr.InputClass("qubit")) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        pr.InputClass("cat")


# --- teleportation -----------------------------------------------------------------------

def test_teleport_perfect_resource():
    r = pr.teleport(0.0, 1.0, resource=pr.stub_resource(8.0))
    assert r.figures["fidelity"] == pytest.approx(1.0, abs=1e-6)
    assert pr.teleport(0.0, 1.0, resource=pr.stub_resource(0.0)).figures["fidelity"] == pytest.approx(1 / 2)


def test_teleport_at_optimum_coupling():
    k, v = pr.teleport_epr_minimum()
    fig = pr.teleport(k, 1.0, input_class=pr.InputClass("coherent", 10.0)).figures
    added = fig["added_noise_X"]
    assert added == pytest.approx(v / 2, rel=1e-9)
    assert fig["class_fidelity"] == pytest.approx(1 / (0.5 + 0.5 + v / 2), rel=1e-9)
    assert fig["class_fidelity"] == pytest.approx(0.75, abs=0.005)


def test_teleport_experimental_replication():
    assert pr.teleport_fidelity_formula(5.0, 0.95, 1.2, 1.2) == pytest.approx(0.60, abs=0.03)


def test_teleport_fidelity_independent_of_amplitude():
    rng = np.random.default_rng(17)
    ref = pr.teleport(1.2, 1.0).figures["fidelity"]
    for _ in range(100):
        light = prepare_state(1, [tuple(rng.normal(0, 5, size=2))], labels=["Y"])
        assert pr.teleport(1.2, 1.0, light=light).figures["fidelity"] == pytest.approx(ref, abs=1e-9)


def test_teleport_trajectory_deterministic():
    a = pr.teleport(1.48, seed=3).figures
    b = pr.teleport(1.48, seed=3).figures
    assert a == b
    assert "bell_Lc_X" in a


def test_teleport_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        pr.teleport(1.0, gain=0.0)


def test_teleport_sampled_trajectories_average_to_ensemble():
    light = prepare_state(1, [(1.0, -0.5)], labels=["Y"])
    ens = pr.teleport(1.0, 1.0, light=light)
    xs = np.array([pr.teleport(1.0, 1.0, light=light, seed=s).figures["trajectory_mean_XA"] for s in range(400)])
    mean, se = xs.mean(), xs.std(ddof=1) / math.sqrt(len(xs))
    assert abs(mean - ens.final_state.expectation("A", "X")) < 3 * se


# --- qubit fidelity -----------------------------------------------------------------------

def test_qubit_fidelity_values():
    assert pr.qubit_teleport_fidelity(0.0, 1.0) == pytest.approx(1.0)
    grid = np.linspace(0, 2, 201)
    vals = [pr.qubit_teleport_fidelity(s, 1.0) for s in grid]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        pr.qubit_teleport_fidelity(-0.1, 1.0)
    assert pr.QUBIT_FIDELITY_REFERENCE == 0.74


def test_protocol_record_is_json_ready():
    import json

    rec = pr.spin_squeeze(1.0).to_record()
    back = json.loads(json.dumps(rec))
    assert back["figures"]["var_PA_feedback"] == pytest.approx(0.25)
    assert back["final_state"]["modes"] == ["A"]


def test_determinism_memory():
    a = pr.memory_store(0.8, 0.8, n_bar=2.0, mc_samples=300, seed=9).figures
    b = pr.memory_store(0.8, 0.8, n_bar=2.0, mc_samples=300, seed=9).figures
    assert a == b
    assert vacuum(("A",)).n_modes == 1
