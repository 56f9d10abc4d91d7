"""Truncated photon-number simulation of the heralded (photon-counting) protocols.

Write pulses produce two-mode squeezed atom/photon states, photons from two
ensembles are mixed on a 50/50 beam splitter and counted by number-resolving
detectors with finite efficiency and Poissonian dark counts. Heralded states
of the ensembles are reduced to two-qubit density matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TAIL_TOLERANCE = 1e-6


class TruncationError(ValueError):
    """Raised when the Fock cutoff leaves too much weight at the boundary."""


class NoHeraldError(ValueError):
    """Raised when the heralding event has zero probability."""

    def __init__(self, message: str, probability: float = 0.0):
        super().__init__(message)
        self.probability = probability


@dataclass(frozen=True)
class TwoModeFock:
    """Pure state ``sum c_mn |m>_A |n>_L`` with ``m, n <= cutoff``."""

    cutoff: int
    amps: np.ndarray
    kappa: float | None = None
    labels: tuple[str, str] = ("A", "L")

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.shape != (self.cutoff + 1, self.cutoff + 1):
            raise ValueError(f"amplitudes must have shape {(self.cutoff + 1,) * 2}, got {a.shape}")
        norm = float(np.sum(np.abs(a) ** 2))
        if norm <= 0:
            raise ValueError("zero state")
        object.__setattr__(self, "amps", a / math.sqrt(norm))

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2))

    def tail(self) -> float:
        """Weight on basis states with either occupation at the cutoff."""
        p = np.abs(self.amps) ** 2
        return float(p[-1, :].sum() + p[:-1, -1].sum())

    def mode_index(self, mode) -> int:
        if mode in (0, 1):
            return int(mode)
        try:
            return self.labels.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode {mode!r}; available {self.labels}") from None

    def number_distribution(self, mode) -> np.ndarray:
        p = np.abs(self.amps) ** 2
        return p.sum(axis=1 - self.mode_index(mode))

    def mean_number(self, mode) -> float:
        pn = self.number_distribution(mode)
        return float(np.arange(pn.size) @ pn)

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Means and symmetrised covariance of ``(X_A, P_A, X_L, P_L)``; vacuum variance 1/2."""
        n = self.cutoff + 1
        a = np.diag(np.sqrt(np.arange(1, n)), 1)
        eye = np.eye(n)
        ops = []
        for op in (np.kron(a, eye), np.kron(eye, a)):
            ops.append((op + op.conj().T) / math.sqrt(2))
            ops.append((op - op.conj().T) / (1j * math.sqrt(2)))
        psi = self.amps.reshape(-1)
        mean = np.array([np.vdot(psi, o @ psi).real for o in ops])
        cov = np.empty((4, 4))
        for i, oi in enumerate(ops):
            for j, oj in enumerate(ops):
                anti = oi @ oj + oj @ oi
                cov[i, j] = 0.5 * np.vdot(psi, anti @ psi).real - mean[i] * mean[j]
        return mean, cov


def dlcz_write(kappa: float, cutoff: int, tail_tolerance: float = TAIL_TOLERANCE) -> TwoModeFock:
    """Atom/Stokes-photon state after a write pulse of strength ``kappa``.

    Exact two-mode squeezed vacuum ``c_nn = (i tanh r)^n / cosh r`` with
    ``r = kappa/2``; to lowest order ``|00> + i (kappa/2) |11>``.
    """
    if not kappa >= 0 or not math.isfinite(kappa):
        raise ValueError("kappa must be finite and non-negative")
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    r = 0.5 * kappa
    t = math.tanh(r)
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    for k in range(cutoff + 1):
        amps[k, k] = (1j * t) ** k / math.cosh(r)
    # weight beyond the cutoff plus weight sitting on it
    tail = t ** (2 * cutoff)
    if tail >= tail_tolerance:
        raise TruncationError(f"truncation tail {tail:.3g} >= {tail_tolerance:g}; raise the cutoff above {cutoff}")
    return TwoModeFock(cutoff, amps, kappa=kappa)


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    logf = np.array([math.lgamma(k + 1) for k in n])
    with np.errstate(divide="ignore"):
        mag = np.exp(-0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * logf) if alpha != 0 else (n == 0) * 1.0
    return mag * np.exp(1j * np.angle(alpha) * n)


def product_state(amps_a, amps_l, labels=("A", "L")) -> TwoModeFock:
    a, b = np.asarray(amps_a, complex), np.asarray(amps_l, complex)
    if a.size != b.size:
        raise ValueError("both modes need the same cutoff")
    return TwoModeFock(a.size - 1, np.outer(a, b), labels=tuple(labels))


# --- g2 ---------------------------------------------------------------------------------

def g2_from_distribution(pn) -> float:
    pn = np.asarray(pn, dtype=float)
    n = np.arange(pn.size)
    mean = float(n @ pn)
    if mean <= 0:
        raise ValueError("g2 undefined for an empty mode")
    return float((n * (n - 1)) @ pn) / mean**2


def g2_conditional(state: TwoModeFock, herald_mode, signal_mode) -> float:
    """``<n(n-1)>/<n>^2`` of ``signal_mode`` given exactly one photon in ``herald_mode``.

    ``herald_mode=None`` gives the unconditioned value.
    """
    s = state.mode_index(signal_mode)
    if herald_mode is None:
        return g2_from_distribution(state.number_distribution(s))
    h = state.mode_index(herald_mode)
    if h == s:
        raise ValueError("herald and signal must be different modes")
    p = np.abs(state.amps) ** 2
    row = p[1, :] if h == 0 else p[:, 1]
    if row.sum() <= 0:
        raise NoHeraldError("herald photon has zero probability")
    return g2_from_distribution(row / row.sum())


# --- two-qubit densities ----------------------------------------------------------------

@dataclass(frozen=True)
class DensityTwoQubit:
    """Two-qubit density in the basis ``|00>, |01>, |10>, |11>``.

    ``discarded_weight`` is the probability removed when higher excitations
    were projected out (before renormalisation).
    """

    rho: np.ndarray
    discarded_weight: float = 0.0
    labels: tuple[str, str] = ("A1", "A2")

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=complex)
        if r.shape != (4, 4):
            raise ValueError("two-qubit density must be 4x4")
        if np.max(np.abs(r - r.conj().T)) > 1e-12:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r).real - 1.0) > 1e-9:
            raise ValueError(f"density trace {np.trace(r).real:.12g} != 1")
        lo = float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min())
        if lo < -1e-9:
            raise ValueError(f"density matrix not positive semidefinite (min eigenvalue {lo:.3g})")
        object.__setattr__(self, "rho", 0.5 * (r + r.conj().T))

    def population(self, basis: str) -> float:
        return float(self.rho[int(basis, 2), int(basis, 2)].real)

    def to_json(self) -> str:
        return json.dumps(
            {
                "labels": list(self.labels),
                "basis": ["00", "01", "10", "11"],
                "real": self.rho.real.tolist(),
                "imag": self.rho.imag.tolist(),
                "discarded_weight": self.discarded_weight,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DensityTwoQubit":
        d = json.loads(text)
        rho = np.array(d["real"]) + 1j * np.array(d["imag"])
        return cls(rho, d.get("discarded_weight", 0.0), tuple(d.get("labels", ("A1", "A2"))))


def bell_state(sign: int = 1) -> DensityTwoQubit:
    v = np.array([0, 1, sign, 0], dtype=complex) / math.sqrt(2)
    return DensityTwoQubit(np.outer(v, v.conj()))


_SIGMA_YY = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])


def concurrence(rho) -> float:
    """Wootters concurrence; accepts a :class:`DensityTwoQubit` or a 4x4 array."""
    r = rho.rho if isinstance(rho, DensityTwoQubit) else DensityTwoQubit(rho).rho
    tilde = _SIGMA_YY @ r.conj() @ _SIGMA_YY
    ev = np.linalg.eigvals(r @ tilde)
    lam = np.sort(np.sqrt(np.clip(ev.real, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


# --- beam splitter and detection -------------------------------------------------------

@lru_cache(maxsize=32)
def beam_splitter_matrix(n_in: int) -> np.ndarray:
    """50/50 beam splitter on two modes with occupations ``< n_in``.

    Returns ``U[p, q, n1, n2]`` mapping ``|n1 n2>`` to ``|p q>`` in the output
    ports ``b_pm = (a1 +- a2)/sqrt(2)``. Output occupations run up to
    ``2 (n_in - 1)`` so the map is exact (photon number is conserved).
    """
    n_out = 2 * (n_in - 1) + 1
    U = np.zeros((n_out, n_out, n_in, n_in))
    fact = [math.factorial(k) for k in range(n_out)]
    for n1 in range(n_in):
        for n2 in range(n_in):
            pref = 1.0 / math.sqrt(2.0 ** (n1 + n2) * fact[n1] * fact[n2])
            # (x + y)^n1 (x - y)^n2 with x = b+^dag, y = b-^dag
            for i in range(n1 + 1):
                for j in range(n2 + 1):
                    p = i + j
                    q = n1 + n2 - p
                    c = math.comb(n1, i) * math.comb(n2, j) * (-1) ** (n2 - j)
                    U[p, q, n1, n2] += pref * c * math.sqrt(fact[p] * fact[q])
    return U


def click_weights(n_max: int, efficiency: float, dark_rate: float, clicks: tuple[int, int]) -> np.ndarray:
    """``W[n+, n-]``: probability of recording ``clicks`` given true photon numbers.

    Efficiency acts as a beam splitter in front of each detector (binomial
    thinning); dark counts add independent Poisson counts of mean ``dark_rate``.
    """
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError("efficiency must be in [0, 1]")
    if dark_rate < 0:
        raise ValueError("dark_rate must be non-negative")
    n = np.arange(n_max + 1)

    def observed(k_obs: int) -> np.ndarray:
        out = np.zeros(n_max + 1)
        for k in range(k_obs + 1):
            dark = math.exp(-dark_rate) * dark_rate ** (k_obs - k) / math.factorial(k_obs - k)
            if dark == 0.0:
                continue
            det = np.array([math.comb(m, k) * efficiency**k * (1 - efficiency) ** (m - k) if m >= k else 0.0 for m in n])
            out += dark * det
        return out

    return np.outer(observed(clicks[0]), observed(clicks[1]))


def _port_clicks(port: str) -> tuple[int, int]:
    if port in ("+", "plus"):
        return (1, 0)
    if port in ("-", "minus"):
        return (0, 1)
    raise ValueError("detector_port must be '+' or '-'")


def _qubit_reduce(rho_full: np.ndarray, dim: int, labels) -> DensityTwoQubit:
    """Project a two-mode density ``rho[a1, a2, a1', a2']`` onto occupations {0,1}."""
    total = float(np.einsum("abab->", rho_full).real)
    sub = rho_full[:2, :2, :2, :2].reshape(4, 4)
    kept = float(np.trace(sub).real)
    if kept <= 0:
        raise NoHeraldError("heralded state has no weight in the single-excitation qubit space", total)
    return DensityTwoQubit(sub / kept, discarded_weight=(total - kept) / total, labels=tuple(labels))


def herald_entangle(
    write1: TwoModeFock,
    write2: TwoModeFock,
    detector_port: str = "+",
    dark_rate: float = 0.0,
    efficiency: float = 1.0,
) -> tuple[float, DensityTwoQubit]:
    """Herald entanglement of two ensembles by a single click behind a 50/50 beam splitter.

    The heralding event is one count at ``detector_port`` and none at the other
    port. Returns the success probability and the two-qubit state of the
    ensembles. Ideally this is ``(|01> +- |10>)/sqrt(2)``, the sign fixed by the port.
    """
    if write1.cutoff != write2.cutoff:
        raise ValueError("write states must share the cutoff")
    n = write1.cutoff + 1
    # psi[a1, a2, l1, l2]
    psi = np.einsum("al,bm->ablm", write1.amps, write2.amps)
    U = beam_splitter_matrix(n)
    phi = np.einsum("pqlm,ablm->abpq", U, psi)
    W = click_weights(U.shape[0] - 1, efficiency, dark_rate, _port_clicks(detector_port))
    rho = np.einsum("pq,abpq,cdpq->abcd", W, phi, phi.conj())
    prob = float(np.einsum("abab->", rho).real)
    if prob <= 1e-300:
        raise NoHeraldError("no herald possible: zero success probability", 0.0)
    dens = _qubit_reduce(rho / prob, n, ("A1", "A2"))
    return prob, dens


def herald_probability(write1: TwoModeFock, write2: TwoModeFock, detector_port="+", dark_rate=0.0, efficiency=1.0) -> float:
    """Success probability of :func:`herald_entangle` (0 instead of raising)."""
    try:
        return herald_entangle(write1, write2, detector_port, dark_rate, efficiency)[0]
    except NoHeraldError as exc:
        return exc.probability


def entanglement_swap(
    pair_ab: DensityTwoQubit,
    pair_cd: DensityTwoQubit,
    read_efficiency: float = 1.0,
    detector_port: str = "+",
    dark_rate: float = 0.0,
) -> tuple[float, DensityTwoQubit]:
    """Swap entanglement onto the outer ensembles A and D.

    The inner ensembles B and C are read out onto photons with
    ``read_efficiency``, mixed on a 50/50 beam splitter, and a single click is
    demanded at ``detector_port``. Equal readout losses commute with the beam
    splitter and are absorbed into the detector efficiency.
    """
    # rho[a, b, c, d ; a', b', c', d']
    rho = np.einsum("abef,cdgh->abcdefgh", pair_ab.rho.reshape(2, 2, 2, 2), pair_cd.rho.reshape(2, 2, 2, 2))
    U = beam_splitter_matrix(2)
    rho = np.einsum("pqbc,abcdefgh,rsfg->apqdersh", U, rho, U)
    W = click_weights(U.shape[0] - 1, read_efficiency, dark_rate, _port_clicks(detector_port))
    out = np.einsum("pq,apqdepqh->adeh", W, rho)
    prob = float(np.einsum("adad->", out).real)
    if prob <= 1e-300:
        raise NoHeraldError("no swap herald possible: zero success probability", 0.0)
    return prob, DensityTwoQubit((out / prob).reshape(4, 4), labels=(pair_ab.labels[0], pair_cd.labels[1]))


def single_photon_split_state(p1: float, poisson_fraction: float = 0.0) -> DensityTwoQubit:
    """Two-mode state from a photon-number mixture split on a 50/50 beam splitter.

    The input carries a coherent one-photon component with probability ``p1``
    and a two-photon component with ``poisson_fraction`` times the two-photon
    probability of a Poisson source of equal mean photon number. The output
    modes are restricted to occupations {0,1}. The relative phase of the
    single-photon branch is coherent.
    """
    if not 0 < p1 < 1 or poisson_fraction < 0:
        raise ValueError("need 0 < p1 < 1 and poisson_fraction >= 0")
    # self-consistent mean: nbar = p1 + 2 p2, p2 = f * exp(-nbar) nbar^2 / 2
    p2 = 0.0
    for _ in range(200):
        nbar = p1 + 2 * p2
        p2_new = poisson_fraction * math.exp(-nbar) * nbar**2 / 2
        if abs(p2_new - p2) < 1e-16:
            break
        p2 = p2_new
    p0 = 1.0 - p1 - p2
    if p0 < 0:
        raise ValueError("photon-number probabilities exceed one")
    U = beam_splitter_matrix(3)
    rho = np.zeros((5, 5, 5, 5), dtype=complex)
    for n, pn in ((0, p0), (1, p1), (2, p2)):
        v = U[:, :, n, 0]
        rho += pn * np.einsum("pq,rs->pqrs", v, v)
    return _qubit_reduce(rho, 5, ("L", "R"))
