"""Input-output maps of light/ensemble interactions as Gaussian channels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .gaussian_core import GaussianChannel, symplectic_form

RabiProfile = Callable[[np.ndarray], np.ndarray]


def constant_rabi(value: float) -> RabiProfile:
    """Rabi profile that is constant in time."""

    def rabi(t):
        return np.full(np.shape(t), value, dtype=complex) if np.ndim(t) else complex(value)

    rabi.constant_value = complex(value)
    return rabi


@dataclass(frozen=True)
class EnsembleParams:
    """Physical description of one ensemble and its drive.

    Rates are angular frequencies (rad/s), lengths in metres. ``rabi`` is a
    callable ``t -> Omega(t)`` accepting arrays; a bare number is promoted
    to a constant profile.
    """

    d: float
    gamma: float = 1.0
    gamma0: float | None = None
    delta: float = 0.0
    omega_L: float = 0.0
    rabi: RabiProfile | float = 0.0
    length: float = 1.0
    area: float | None = None
    wavelength: float | None = None
    n_atoms: float | None = None
    n_photons: float | None = None
    density: float | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.d >= 0:
            raise ValueError(f"optical depth must be non-negative, got {self.d}")
        if not self.gamma > 0:
            raise ValueError(f"decay rate gamma must be positive, got {self.gamma}")
        if self.gamma0 is not None and not 0 <= self.gamma0 <= self.gamma:
            raise ValueError("gamma0 must satisfy 0 <= gamma0 <= gamma")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"light loss epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.length > 0:
            raise ValueError("medium length must be positive")
        if not callable(self.rabi):
            object.__setattr__(self, "rabi", constant_rabi(float(self.rabi)))

    @property
    def coupling_g(self) -> float:
        """Single-mode coupling ``g`` (real) from ``d = 4 g^2 L / gamma``."""
        return math.sqrt(self.d * self.gamma / (4.0 * self.length))

    @property
    def complex_detuning(self) -> complex:
        """``Delta - i gamma / 2``."""
        return complex(self.delta, -0.5 * self.gamma)

    @property
    def phase_phi(self) -> float:
        """Phase with ``tan(phi) = gamma / (2 Delta)``, in ``(0, pi)`` for ``gamma > 0``."""
        return math.atan2(self.gamma, 2.0 * self.delta)

    @property
    def detuning_factor(self) -> float:
        """``4 Delta^2 + gamma^2``."""
        return 4.0 * self.delta**2 + self.gamma**2

    def replace(self, **changes) -> "EnsembleParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return EnsembleParams(**values)


def optical_depth(density: float, wavelength: float, length: float, gamma: float, gamma0: float) -> float:
    """Resonant optical depth ``n sigma0 L`` with ``sigma0 = 3 lambda^2 gamma0 / (2 pi gamma)``."""
    sigma0 = 3.0 * wavelength**2 * gamma0 / (2.0 * math.pi * gamma)
    return density * sigma0 * length


def h_function(p: EnsembleParams, t0: float, t1: float) -> float:
    """Interaction strength ``h(t0, t1) = int d gamma |Omega|^2 / (4 Delta^2 + gamma^2) dt``."""
    if t1 < t0:
        raise ValueError("h_function requires t0 <= t1")
    if t1 == t0:
        return 0.0
    scale = p.d * p.gamma / p.detuning_factor
    const = getattr(p.rabi, "constant_value", None)
    if const is not None:
        return scale * abs(const) ** 2 * (t1 - t0)
    val, err = integrate.quad(lambda t: abs(p.rabi(t)) ** 2, t0, t1, limit=400, epsabs=0.0, epsrel=1e-12)
    if not math.isfinite(val):
        raise ValueError("Rabi profile is not integrable on the requested interval")
    return scale * val


@dataclass(frozen=True)
class DerivedCouplings:
    h: float
    kappa: float
    eta_A: float
    eta_L: float
    vg: float | None
    cooperativity: float | None = None
    n_photons_scattered_balance: float | None = None

    @property
    def kappa_sq(self) -> float:
        return self.kappa**2


def derive_couplings(p: EnsembleParams, T: float, finesse: float | None = None) -> DerivedCouplings:
    """Coupling constants of an ensemble driven for a duration ``T``.

    ``kappa^2 = h(0, T) 4 Delta^2 / (4 Delta^2 + gamma^2)``, ``eta_A = kappa^2 / d``
    and ``eta_L = (d / 2) gamma^2 / (4 Delta^2 + gamma^2)``. The group velocity
    ``Omega^2 L / (gamma d)`` is reported for constant drives only. When the
    atom number is known, ``N_A eta_A / eta_L`` gives the photon number that
    balances scattering between light and atoms; a supplied photon number is
    checked against it.
    """
    if not T > 0:
        raise ValueError(f"pulse duration must be positive, got {T}")
    h = h_function(p, 0.0, T)
    kappa_sq = h * 4.0 * p.delta**2 / p.detuning_factor
    kappa = math.sqrt(kappa_sq)
    eta_A = kappa_sq / p.d if p.d > 0 else 0.0
    eta_L = 0.5 * p.d * p.gamma**2 / p.detuning_factor
    const = getattr(p.rabi, "constant_value", None)
    vg = None
    if const is not None and p.d > 0:
        vg = abs(const) ** 2 * p.length / (p.gamma * p.d)

    balance = None
    if p.n_atoms is not None and eta_L > 0:
        balance = p.n_atoms * eta_A / eta_L
        if p.n_photons is not None and not math.isclose(balance, p.n_photons, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                f"inconsistent photon/atom numbers: N_A eta_A / eta_L = {balance:.9g} but n_photons = {p.n_photons:.9g}"
            )
    coop = None if finesse is None else finesse * p.d
    return DerivedCouplings(h, kappa, eta_A, eta_L, vg, coop, balance)


# --- quadratic generators ------------------------------------------------------------

def _two_mode_form(xx: float, pp: float, xp: float = 0.0, px: float = 0.0) -> np.ndarray:
    """Symmetric matrix ``H`` with ``(1/2) xi^T H xi`` over ``(X1, P1, X2, P2)``."""
    H = np.zeros((4, 4))
    H[0, 2] = H[2, 0] = xx
    H[1, 3] = H[3, 1] = pp
    H[0, 3] = H[3, 0] = xp
    H[1, 2] = H[2, 1] = px
    return H


def faraday_generator(kappa: float) -> np.ndarray:
    """Quadratic form of ``kappa P_L P_A`` over ``(L, A)``."""
    return _two_mode_form(0.0, kappa)


def beam_splitter_generator(kappa: float) -> np.ndarray:
    """Quadratic form of ``kappa (X_L X_A + P_L P_A) / sqrt(2)``."""
    return _two_mode_form(kappa / math.sqrt(2), kappa / math.sqrt(2))


def parametric_gain_generator(kappa: float) -> np.ndarray:
    """Quadratic form of ``kappa (X_L X_A - P_L P_A) / sqrt(2)``."""
    return _two_mode_form(kappa / math.sqrt(2), -kappa / math.sqrt(2))


def generator_of(S: np.ndarray) -> np.ndarray:
    """Quadratic form ``H`` with ``S = expm(Omega H)`` (principal logarithm)."""
    from scipy.linalg import logm

    omega = symplectic_form(S.shape[0] // 2)
    return np.real(-omega @ logm(S))


# --- channels -----------------------------------------------------------------------

def _check_loss(name: str, value: float):
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"loss {name} must lie in [0, 1], got {value}")


def _check_finite(**values):
    for k, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{k} must be finite, got {v}")


def faraday_channel(
    kappa: float,
    eta_A: float = 0.0,
    epsilon: float = 0.0,
    eta_L: float = 0.0,
    labels: Sequence = ("L", "A"),
) -> GaussianChannel:
    """QND (Faraday) map between a light mode and an atomic mode.

    Lossless: ``X_L += kappa P_A``, ``X_A += kappa P_L``, momenta conserved.
    Losses act after the interaction: the atomic quadratures are damped by
    ``sqrt(1 - eta_A)``, the light by ``sqrt((1 - eta_L)(1 - epsilon))``
    (absorption then detection loss), each with vacuum noise restoring the
    uncertainty relation.
    """
    _check_finite(kappa=kappa)
    for name, val in (("eta_A", eta_A), ("epsilon", epsilon), ("eta_L", eta_L)):
        _check_loss(name, val)
    S = np.eye(4)
    S[0, 3] = kappa
    S[2, 1] = kappa
    t_light = (1.0 - eta_L) * (1.0 - epsilon)
    t_atom = 1.0 - eta_A
    damp = np.diag([math.sqrt(t_light)] * 2 + [math.sqrt(t_atom)] * 2)
    N = 0.5 * np.diag([1 - t_light] * 2 + [1 - t_atom] * 2)
    return GaussianChannel(tuple(labels), damp @ S, None, N, name="faraday")


def parametric_gain_channel(kappa: float, labels: Sequence = ("L", "A")) -> GaussianChannel:
    """Two-mode squeezer ``exp(i kappa (a_L^+ a_A^+ + h.c.) / 2)``.

    Heisenberg action ``a -> cosh(r) a + i sinh(r) b^+`` with ``r = kappa / 2``,
    i.e. ``X_a -> cosh r X_a + sinh r P_b`` and ``P_a -> cosh r P_a + sinh r X_b``.
    """
    _check_finite(kappa=kappa)
    r = 0.5 * kappa
    c, s = math.cosh(r), math.sinh(r)
    S = np.array(
        [
            [c, 0, 0, s],
            [0, c, s, 0],
            [0, s, c, 0],
            [s, 0, 0, c],
        ],
        dtype=float,
    )
    return GaussianChannel(tuple(labels), S, name="parametric_gain")


def parametric_gain_hamiltonian_form(kappa: float) -> np.ndarray:
    """Quadratic form of ``-(kappa/2)(a^+ b^+ + a b) = -(kappa/2)(X_a X_b - P_a P_b)``.

    Its flow ``expm(Omega H)`` reproduces :func:`parametric_gain_channel`.
    """
    return _two_mode_form(-0.5 * kappa, 0.5 * kappa)


def beam_splitter_swap_channel(theta: float, labels: Sequence = ("a", "b")) -> GaussianChannel:
    """Mode rotation ``a -> cos(theta) a + sin(theta) b``, ``b -> cos(theta) b - sin(theta) a``."""
    _check_finite(theta=theta)
    c, s = math.cos(theta), math.sin(theta)
    S = np.kron(np.array([[c, s], [-s, c]]), np.eye(2))
    return GaussianChannel(tuple(labels), S, name="beam_splitter")


def multipass_swap_channel(kappa: float, labels: Sequence = ("A", "L+")) -> GaussianChannel:
    """Exponentially efficient state exchange between atoms and a sideband light mode.

    ``X_A -> e^{-kappa^2/2} X_A + sqrt(1 - e^{-kappa^2}) X_L``, likewise for
    ``P``; the light obeys the mirrored relation with a minus sign so the
    map stays a beam splitter of transmissivity ``e^{-kappa^2}``.
    """
    if not kappa >= 0:
        raise ValueError("multipass coupling must be non-negative")
    t = math.exp(-0.5 * kappa**2)
    r = math.sqrt(-math.expm1(-(kappa**2)))
    S = np.kron(np.array([[t, r], [-r, t]]), np.eye(2))
    return GaussianChannel(tuple(labels), S, name="multipass_swap")


def phase_rotation_channel(theta: float, label="A") -> GaussianChannel:
    """``X -> cos(theta) X + sin(theta) P``, ``P -> cos(theta) P - sin(theta) X``."""
    c, s = math.cos(theta), math.sin(theta)
    return GaussianChannel((label,), np.array([[c, s], [-s, c]]), name="rotation")


def nonlocal_modes_channel(labels: Sequence = ("1", "2")) -> GaussianChannel:
    """``(q1, q2) -> ((q1 + q2)/sqrt 2, (q1 - q2)/sqrt 2)`` for both quadratures.

    The map is its own inverse, so it converts physical cells into the
    sum/difference modes and back.
    """
    h = 1.0 / math.sqrt(2)
    S = np.kron(np.array([[h, h], [h, -h]]), np.eye(2))
    return GaussianChannel(tuple(labels), S, name="nonlocal_modes")


def two_cell_magnetic_channel(kappa: float, labels: Sequence = ("Lc", "Ls", "A+", "A-")) -> GaussianChannel:
    """Single pulse through two counter-precessing cells, in non-local modes.

    ``X_Lc += kappa P_A+``, ``X_Ls -= kappa X_A-``, ``X_A+ += kappa P_Lc``,
    ``P_A- += kappa P_Ls``; ``P_Lc``, ``P_Ls``, ``P_A+`` and ``X_A-`` are conserved.
    """
    _check_finite(kappa=kappa)
    S = np.eye(8)
    XLc, PLc, XLs, PLs, XAp, PAp, XAm, PAm = range(8)
    S[XLc, PAp] = kappa
    S[XLs, XAm] = -kappa
    S[XAp, PLc] = kappa
    S[PAm, PLs] = kappa
    return GaussianChannel(tuple(labels), S, name="two_cell_magnetic")


BACKACTION_CLOSED_FORM = math.sqrt(2.0 / 3.0)
BACKACTION_LITERAL = 1.0 / math.sqrt(3.0)


def teleport_entangling_channel(
    kappa: float,
    backaction_weight: float = BACKACTION_CLOSED_FORM,
    labels: Sequence = ("A", "Lc", "Ls", "back_c", "back_s"),
) -> GaussianChannel:
    """Faraday interaction of one precessing ensemble with cosine/sine light modes.

    ``X_A += (kappa/sqrt2) P_c``, ``P_A += (kappa/sqrt2) P_s``,
    ``X_c += (kappa/sqrt2) P_A + (kappa/2)^2 P_s + w (kappa/2)^2 P_back_s``,
    ``X_s += -(kappa/sqrt2) X_A - (kappa/2)^2 P_c - w (kappa/2)^2 P_back_c``,
    with ``P_c``, ``P_s`` conserved. The back-action modes are extra input
    modes in vacuum; their outputs absorb the conjugate terms so the full
    map is symplectic.

    ``backaction_weight`` ``w`` defaults to ``sqrt(2/3)``, the value at which
    vacuum back-action modes reproduce the closed-form resource EPR variance
    ``[1 + (1 - kappa/2)^2]^2 / 2 + (kappa/2)^4 / 3``. The alternative
    ``1/sqrt(3)`` (:data:`BACKACTION_LITERAL`) adds half as much back-action noise.
    """
    _check_finite(kappa=kappa, backaction_weight=backaction_weight)
    k = kappa / math.sqrt(2)
    a2 = (kappa / 2.0) ** 2
    b = backaction_weight * a2
    XA, PA, Xc, Pc, Xs, Ps, Xbc, Pbc, Xbs, Pbs = range(10)
    S = np.eye(10)
    S[XA, Pc] = k
    S[PA, Ps] = k
    S[Xc, PA] = k
    S[Xc, Ps] = a2
    S[Xc, Pbs] = b
    S[Xs, XA] = -k
    S[Xs, Pc] = -a2
    S[Xs, Pbc] = -b
    # completion on the back-action modes
    S[Xbs, Pc] = b
    S[Xbc, Ps] = -b
    return GaussianChannel(tuple(labels), S, name="teleport_entangling")


def teleport_epr_closed_form(kappa: float) -> float:
    """Resource EPR variance ``[1 + (1 - kappa/2)^2]^2 / 2 + (kappa/2)^4 / 3``."""
    a = 0.5 * kappa
    return 0.5 * (1.0 + (1.0 - a) ** 2) ** 2 + a**4 / 3.0


def sideband_channel(labels: Sequence = ("Lc", "Ls")) -> GaussianChannel:
    """Cosine/sine modes to upper/lower sideband modes (written in place).

    ``X+ = (X_s - P_c)/sqrt2``, ``P+ = (X_c + P_s)/sqrt2`` replace the first
    mode, ``X- = (X_s + P_c)/sqrt2``, ``P- = (P_s - X_c)/sqrt2`` the second.
    """
    h = 1.0 / math.sqrt(2)
    Xc, Pc, Xs, Ps = range(4)
    S = np.zeros((4, 4))
    S[0, Xs], S[0, Pc] = h, -h
    S[1, Xc], S[1, Ps] = h, h
    S[2, Xs], S[2, Pc] = h, h
    S[3, Ps], S[3, Xc] = h, -h
    return GaussianChannel(tuple(labels), S, name="sidebands")


def lower_sideband_encoding_channel(labels: Sequence = ("in_c", "in_s")) -> GaussianChannel:
    """Encode a single mode ``(Y, Q)`` and a spare mode ``(U, V)`` into cosine/sine modes.

    Input modes carry ``(Y, Q)`` and ``(U, V)``; outputs are the cosine
    ``(Y_c, Q_c)`` and sine ``(Y_s, Q_s)`` modes with
    ``Y = (Y_s + Q_c)/sqrt2`` and ``Q = -(Y_c - Q_s)/sqrt2``.
    """
    h = 1.0 / math.sqrt(2)
    Y, Q, U, V = range(4)
    S = np.zeros((4, 4))
    S[0, V], S[0, Q] = h, -h  # Y_c
    S[1, Y], S[1, U] = h, -h  # Q_c
    S[2, Y], S[2, U] = h, h  # Y_s
    S[3, V], S[3, Q] = h, h  # Q_s
    return GaussianChannel(tuple(labels), S, name="lower_sideband_encoding")


def loss_channel(eta: float, label) -> GaussianChannel:
    """Pure loss: amplitude damped by ``sqrt(1 - eta)`` with vacuum admixture."""
    _check_loss("eta", eta)
    t = 1.0 - eta
    return GaussianChannel((label,), math.sqrt(t) * np.eye(2), None, 0.5 * eta * np.eye(2), name="loss")
