import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.stats import binom, poisson

from ensemble_interface import fock_sim as fs
from ensemble_interface import interface_maps as im
from ensemble_interface.gaussian_core import apply_channel, vacuum


def _kraus_loss(eta, dim):
    """Loss Kraus operators on a mode truncated at ``dim - 1`` photons."""
    ops = []
    for k in range(dim):
        K = np.zeros((dim, dim))
        for n in range(k, dim):
            K[n - k, n] = math.sqrt(math.comb(n, k) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(K)
    return ops


def enumerate_herald(kappa, cutoff, efficiency=1.0, port="+"):
    """Oracle: four-mode pure state, mixer by expm, loss by Kraus operators, then projection."""
    n = cutoff + 1
    m = 2 * cutoff + 1
    t = math.tanh(kappa / 2)
    pair = np.zeros((n, m), dtype=complex)
    for k in range(n):
        pair[k, k] = (1j * t) ** k
    pair /= np.linalg.norm(pair)  # the truncated state, renormalised
    psi = np.einsum("al,bm->ablm", pair, pair).reshape(n, n, m * m)
    a = np.diag(np.sqrt(np.arange(1, m)), 1)
    eye = np.eye(m)
    a1, a2 = np.kron(a, eye), np.kron(eye, a)
    U = expm((math.pi / 4) * (a1.conj().T @ a2 - a2.conj().T @ a1))
    out = np.einsum("xy,aby->abx", U, psi).reshape(n, n, m, m)
    want = (1, 0) if port == "+" else (0, 1)
    rho = np.zeros((n, n, n, n), dtype=complex)
    kraus = _kraus_loss(efficiency, m)
    for Kp in kraus:
        for Km in kraus:
            branch = np.einsum("pi,qj,abij->abpq", Kp, Km, out)[:, :, want[0], want[1]]
            rho += np.einsum("ab,cd->abcd", branch, branch.conj())
    prob = float(np.einsum("abab->", rho).real)
    sub = rho[:2, :2, :2, :2].reshape(4, 4)
    return prob, sub / np.trace(sub).real


# --- write ------------------------------------------------------------------------------

def test_write_vacuum_at_zero_kappa():
    w = fs.dlcz_write(0.0, 3)
    assert abs(w.amps[0, 0]) == pytest.approx(1.0)
    assert w.mean_number("L") == 0.0


def test_write_lowest_order_amplitude():
    w = fs.dlcz_write(0.1, 6)
    assert abs(w.amps[1, 1] / w.amps[0, 0]) == pytest.approx(0.05, abs=1e-4)


@pytest.mark.parametrize("kappa", [0.1, 0.3, 0.5, 1.0])
def test_mean_number_matches_gaussian(kappa):
    w = fs.dlcz_write(kappa, 14)
    st_ = apply_channel(vacuum(("A", "L")), im.parametric_gain_channel(kappa, ("L", "A")))
    n_gauss = 0.5 * (st_.cov[2, 2] + st_.cov[3, 3]) - 0.5
    assert w.mean_number("L") == pytest.approx(n_gauss, abs=1e-6)
    assert w.mean_number("A") == pytest.approx(math.sinh(kappa / 2) ** 2, abs=1e-6)


@pytest.mark.parametrize("kappa", [0.05, 0.2, 0.5])
def test_moments_match_gaussian(kappa):
    mean, cov = fs.dlcz_write(kappa, 8).moments()
    st_ = apply_channel(vacuum(("A", "L")), im.parametric_gain_channel(kappa, ("L", "A")))
    assert np.allclose(mean, 0.0, atol=1e-12)
    assert np.max(np.abs(cov - st_.cov)) < 1e-6


def test_truncation_rejected():
    with pytest.raises(fs.TruncationError, match="raise the cutoff"):
        fs.dlcz_write(2.0, 4)


@pytest.mark.parametrize("bad", [-0.1, float("nan"), float("inf")])
def test_write_rejects_bad_kappa(bad):
    with pytest.raises(ValueError):
        fs.dlcz_write(bad, 4)


def test_write_rejects_tiny_cutoff():
    with pytest.raises(ValueError):
        fs.dlcz_write(0.1, 1)


@given(st.floats(0.0, 0.8), st.integers(8, 14))
@settings(max_examples=40, deadline=None)
def test_write_normalised(kappa, cutoff):
    w = fs.dlcz_write(kappa, cutoff)
    assert w.norm == pytest.approx(1.0, abs=1e-9)
    assert w.tail() < 1e-6


def test_two_mode_fock_validation():
    with pytest.raises(ValueError):
        fs.TwoModeFock(2, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        fs.TwoModeFock(2, np.zeros((3, 3)))
    w = fs.dlcz_write(0.1, 4)
    with pytest.raises(KeyError):
        w.mode_index("B")


# --- g2 ---------------------------------------------------------------------------------

def test_heralded_single_photon_g2_zero():
    assert fs.g2_conditional(fs.dlcz_write(0.3, 10), "A", "L") == 0.0
    assert fs.g2_conditional(fs.dlcz_write(0.3, 10), "L", "A") == 0.0


def test_unconditioned_write_is_thermal():
    # each half of a two-mode squeezed vacuum is thermal
    assert fs.g2_conditional(fs.dlcz_write(0.4, 16), None, "L") == pytest.approx(2.0, abs=1e-5)


def test_thermal_g2_cutoff_20():
    nbar = 0.3
    k = np.arange(21)
    pn = nbar**k / (1 + nbar) ** (k + 1)
    brute = sum(n * (n - 1) * p for n, p in zip(k, pn)) / sum(n * p for n, p in zip(k, pn)) ** 2
    thermal = fs.product_state(np.sqrt(pn), np.eye(21)[0])
    assert fs.g2_conditional(thermal, None, "A") == pytest.approx(brute, rel=1e-12)
    assert brute == pytest.approx(2.0, abs=1e-6)


def test_coherent_g2_one():
    amp = fs.coherent_amplitudes(1.3, 30)
    state = fs.product_state(np.eye(31)[0], amp)
    assert fs.g2_conditional(state, None, "L") == pytest.approx(1.0, abs=1e-9)


def test_g2_errors():
    vac = fs.product_state(np.eye(5)[0], np.eye(5)[0])
    with pytest.raises(fs.NoHeraldError):
        fs.g2_conditional(vac, "A", "L")
    with pytest.raises(ValueError):
        fs.g2_conditional(fs.dlcz_write(0.1, 4), "A", "A")
    with pytest.raises(ValueError):
        fs.g2_from_distribution([1.0, 0.0])


# --- heralding --------------------------------------------------------------------------

@pytest.mark.parametrize("kappa", [0.05, 0.2])
@pytest.mark.parametrize("port", ["+", "-"])
def test_herald_matches_enumeration(kappa, port):
    w = fs.dlcz_write(kappa, 4)
    prob, rho = fs.herald_entangle(w, w, port)
    p_ref, rho_ref = enumerate_herald(kappa, 4, port=port)
    assert prob == pytest.approx(p_ref, rel=1e-10)
    assert np.max(np.abs(rho.rho - rho_ref)) < 1e-10


@pytest.mark.parametrize("eta", [0.3, 0.7])
def test_herald_inefficient_matches_kraus_enumeration(eta):
    w = fs.dlcz_write(0.4, 6)
    prob, rho = fs.herald_entangle(w, w, "+", efficiency=eta)
    p_ref, rho_ref = enumerate_herald(0.4, 6, efficiency=eta)
    assert prob == pytest.approx(p_ref, rel=1e-10)
    assert np.max(np.abs(rho.rho - rho_ref)) < 1e-10


def test_small_kappa_limit():
    for kappa in (0.01, 0.05):
        w = fs.dlcz_write(kappa, 4)
        prob, rho = fs.herald_entangle(w, w)
        assert fs.concurrence(rho) >= 0.99
        assert prob / (kappa**2 / 4) == pytest.approx(1.0, abs=kappa**2)


def test_port_sets_sign():
    w = fs.dlcz_write(0.1, 4)
    _, plus = fs.herald_entangle(w, w, "+")
    _, minus = fs.herald_entangle(w, w, "-")
    assert np.allclose(plus.rho, fs.bell_state(+1).rho, atol=1e-12)
    assert np.allclose(minus.rho, fs.bell_state(-1).rho, atol=1e-12)


def test_zero_efficiency_no_herald():
    w = fs.dlcz_write(0.2, 4)
    assert fs.herald_probability(w, w, efficiency=0.0) == 0.0
    with pytest.raises(fs.NoHeraldError):
        fs.herald_entangle(w, w, efficiency=0.0)


def test_bad_port_and_cutoff_mismatch():
    w = fs.dlcz_write(0.2, 4)
    with pytest.raises(ValueError):
        fs.herald_entangle(w, w, "x")
    with pytest.raises(ValueError):
        fs.herald_entangle(w, fs.dlcz_write(0.2, 5))


def test_double_excitation_contamination_grows_as_kappa_squared():
    eta = 0.6
    for kappa in (0.02, 0.05, 0.1):
        w = fs.dlcz_write(kappa, 4)
        _, rho = fs.herald_entangle(w, w, efficiency=eta)
        series = (1 - eta) * math.tanh(kappa / 2) ** 2
        assert rho.population("11") == pytest.approx(series, rel=3 * kappa**2)


def test_dark_counts_dilute_entanglement():
    w = fs.dlcz_write(0.1, 4)
    _, clean = fs.herald_entangle(w, w)
    _, noisy = fs.herald_entangle(w, w, dark_rate=1e-3)
    assert fs.concurrence(noisy) < fs.concurrence(clean)
    assert noisy.population("00") > 0


# --- detector ---------------------------------------------------------------------------

@pytest.mark.parametrize("eta,dark,clicks", [(0.7, 0.0, (1, 0)), (0.4, 0.2, (1, 2)), (1.0, 0.05, (0, 1))])
def test_click_weights_against_binomial_poisson(eta, dark, clicks):
    W = fs.click_weights(5, eta, dark, clicks)

    def p_obs(k, nphot):
        return sum(binom.pmf(j, nphot, eta) * poisson.pmf(k - j, dark) for j in range(k + 1))

    ref = np.array([[p_obs(clicks[0], a) * p_obs(clicks[1], b) for b in range(6)] for a in range(6)])
    assert np.allclose(W, ref, atol=1e-14)


def test_click_weights_validation():
    with pytest.raises(ValueError):
        fs.click_weights(3, 1.2, 0.0, (1, 0))
    with pytest.raises(ValueError):
        fs.click_weights(3, 0.5, -1.0, (1, 0))


@pytest.mark.parametrize("n_in", [2, 3, 5])
def test_beam_splitter_conserves_photons_and_is_isometric(n_in):
    U = fs.beam_splitter_matrix(n_in)
    n_out = U.shape[0]
    p, q = np.meshgrid(np.arange(n_out), np.arange(n_out), indexing="ij")
    for n1 in range(n_in):
        for n2 in range(n_in):
            col = U[:, :, n1, n2]
            assert np.all(col[(p + q) != (n1 + n2)] == 0)
    M = U.reshape(n_out * n_out, n_in * n_in)
    assert np.allclose(M.T @ M, np.eye(n_in * n_in), atol=1e-12)


# --- swapping ---------------------------------------------------------------------------

def test_ideal_swap():
    b = fs.bell_state()
    prob, rho = fs.entanglement_swap(b, b)
    assert prob == pytest.approx(0.25)
    assert fs.concurrence(rho) == pytest.approx(1.0, abs=1e-12)


def test_half_readout_enumeration_values():
    b = fs.bell_state()
    prob, rho = fs.entanglement_swap(b, b, read_efficiency=0.5)
    assert prob == pytest.approx(3 / 16, abs=1e-12)
    assert rho.population("00") == pytest.approx(1 / 3, abs=1e-12)
    assert fs.concurrence(rho) == pytest.approx(2 / 3, abs=1e-12)


def test_half_readout_single_excitation_branch():
    # with one excitation in each pair restricted to the outer modes' single-photon sector
    # the inner modes carry exactly one photon between them
    single = np.zeros((4, 4))
    single[1, 1] = 1.0  # |01>: excitation on the inner ensemble
    inner = fs.DensityTwoQubit(single)
    outer = fs.bell_state()
    p1, r1 = fs.entanglement_swap(outer, inner, 1.0)
    p_half, r_half = fs.entanglement_swap(outer, inner, 0.5)
    assert p_half / p1 == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(r_half.rho, r1.rho, atol=1e-12)


def test_swap_of_heralded_pairs():
    w = fs.dlcz_write(0.1, 4)
    _, pair = fs.herald_entangle(w, w)
    prob, rho = fs.entanglement_swap(pair, pair)
    assert fs.concurrence(rho) == pytest.approx(1.0, abs=1e-9)
    assert rho.labels == ("A1", "A2")


def test_swap_no_herald():
    vac = np.zeros((4, 4))
    vac[0, 0] = 1.0
    v = fs.DensityTwoQubit(vac)
    with pytest.raises(fs.NoHeraldError):
        fs.entanglement_swap(v, v)


# --- densities and concurrence ---------------------------------------------------------

def test_density_json_round_trip():
    w = fs.dlcz_write(0.3, 6)
    _, rho = fs.herald_entangle(w, w, efficiency=0.5, dark_rate=1e-3)
    back = fs.DensityTwoQubit.from_json(rho.to_json())
    assert np.allclose(back.rho, rho.rho, atol=1e-15)
    assert back.discarded_weight == rho.discarded_weight
    d = json.loads(rho.to_json())
    assert d["basis"] == ["00", "01", "10", "11"]


def test_density_validation():
    with pytest.raises(ValueError, match="4x4"):
        fs.DensityTwoQubit(np.eye(3) / 3)
    with pytest.raises(ValueError, match="Hermitian"):
        m = np.eye(4) / 4 + 0j
        m[0, 1] = 0.1j
        fs.DensityTwoQubit(m)
    with pytest.raises(ValueError, match="trace"):
        fs.DensityTwoQubit(np.eye(4))
    with pytest.raises(ValueError, match="positive"):
        fs.DensityTwoQubit(np.diag([1.2, -0.2, 0, 0]))


def test_concurrence_anchors():
    assert fs.concurrence(fs.bell_state()) == pytest.approx(1.0, abs=1e-12)
    assert fs.concurrence(np.diag([1.0, 0, 0, 0])) == pytest.approx(0.0, abs=1e-12)
    assert fs.concurrence(np.eye(4) / 4) == 0.0


def _random_qubit_density(rng):
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    r = g @ g.conj().T
    return r / np.trace(r)


@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_separable_mixtures_have_zero_concurrence(seed, terms):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(terms))
    rho = sum(wi * np.kron(_random_qubit_density(rng), _random_qubit_density(rng)) for wi in w)
    assert fs.concurrence(rho) < 1e-9


def test_split_photon_concurrence_anchor():
    rho = fs.single_photon_split_state(0.15, 0.09)
    assert fs.concurrence(rho) == pytest.approx(0.11116, abs=2e-5)
    assert fs.concurrence(rho) == pytest.approx(0.10, abs=0.015)


def test_split_photon_pure_single_photon():
    # without two-photon weight the concurrence is the single-photon probability
    assert fs.concurrence(fs.single_photon_split_state(0.15)) == pytest.approx(0.15, abs=1e-12)


def test_split_photon_validation():
    with pytest.raises(ValueError):
        fs.single_photon_split_state(0.0)
    with pytest.raises(ValueError):
        fs.single_photon_split_state(0.5, -1)
