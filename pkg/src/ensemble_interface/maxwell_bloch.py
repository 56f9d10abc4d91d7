"""One-dimensional light/spin-wave propagation.

Fields live on a staggered space-time lattice in the co-moving frame:
light values ``a_L`` sit on the ``nz + 1`` planes ``z_j`` and represent the
time cell ``[t_n, t_{n+1}]``; spin-wave values ``a_A`` sit on the ``nz``
slab centres and are defined on the ``nt + 1`` time edges. Each lattice
cell is advanced with the implicit midpoint (box) rule, which is second
order in both directions and conserves excitation exactly whenever the
continuous equations do.

Complex amplitudes are used throughout. For the Faraday interaction the
two real quadratures are packed as ``x + i p``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .interface_maps import EnsembleParams, constant_rabi

RESOLUTION_FACTOR = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_SERIES_SWITCH = 12.0


# --- modified Bessel function I0 -----------------------------------------------------

def _i0_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 80):
        term = term * q / (k * k)
        total = total + term
        if np.all(np.abs(term) <= 1e-18 * np.abs(total)):
            break
    return total


def _i0_asymptotic_scaled(z: np.ndarray) -> np.ndarray:
    """``exp(-z) I0(z)`` for ``Re z >= 0`` and ``|z| >= 12``."""
    inv = 1.0 / z
    grow = np.ones_like(z)
    fall = np.ones_like(z)
    coef = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 60):
        nxt = coef * (2 * k - 1) ** 2 / (8.0 * k) * inv
        # optimal truncation: stop each element once its terms start to grow
        active &= np.abs(nxt) < np.abs(coef)
        active &= np.abs(nxt) > 1e-18
        if not np.any(active):
            break
        coef = np.where(active, nxt, coef)
        grow = grow + np.where(active, nxt, 0)
        fall = fall + np.where(active, (-1) ** k * nxt, 0)
    pref = 1.0 / np.sqrt(2.0 * np.pi * z)
    sign = np.where(z.imag >= 0, 1.0, -1.0)
    return pref * (grow + sign * 1j * np.exp(-2.0 * z) * fall)


def bessel_i0_scaled(x) -> np.ndarray:
    """``exp(-|Re x|) I0(x)`` for complex ``x``; finite for any argument."""
    x = np.asarray(x, dtype=complex)
    z = np.where(x.real < 0, -x, x)  # I0 is even
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_SWITCH
    if np.any(small):
        zs = z[small]
        out[small] = _i0_series(zs) * np.exp(-zs.real)
    if np.any(~small):
        zl = z[~small]
        out[~small] = _i0_asymptotic_scaled(zl) * np.exp(1j * zl.imag)
    return out


def bessel_i0(x) -> np.ndarray:
    """Modified Bessel function of the first kind, order zero, complex argument."""
    x = np.asarray(x, dtype=complex)
    return bessel_i0_scaled(x) * np.exp(np.abs(x.real))


# --- analytic beam-splitter kernels ---------------------------------------------------

@dataclass(frozen=True)
class KernelEval:
    value: np.ndarray | complex
    phi: float


def drive_energy(p: EnsembleParams, t0: float, t1: float) -> float:
    """``int_{t0}^{t1} |Omega|^2 dt``."""
    if t1 < t0:
        raise ValueError("drive_energy requires t0 <= t1")
    const = getattr(p.rabi, "constant_value", None)
    if const is not None:
        return abs(const) ** 2 * (t1 - t0)
    if t1 == t0:
        return 0.0
    val, _ = integrate.quad(lambda t: abs(p.rabi(t)) ** 2, t0, t1, limit=500, epsabs=0.0, epsrel=1e-13)
    return val


def _kernel_core(p: EnsembleParams, omega, w, zeta):
    """``c Omega e^{i w/(4D)} e^{i g^2 zeta / D} I0(i g/D sqrt(w zeta))`` with scaled I0."""
    D = p.complex_detuning
    g = p.coupling_g
    c = 1j * g / (2.0 * D)
    arg = (1j * g / D) * np.sqrt(np.asarray(w, dtype=float) * np.asarray(zeta, dtype=float))
    expo = 1j * np.asarray(w) / (4.0 * D) + 1j * g * g * np.asarray(zeta) / D + np.abs(arg.real)
    return c * np.asarray(omega) * np.exp(expo) * bessel_i0_scaled(arg)


def analytic_bs_kernel(p: EnsembleParams, t, z) -> KernelEval:
    """Retrieval kernel ``m(t, z)`` of the beam-splitter interaction.

    ``z`` is the distance travelled to the exit, so that the output light is
    ``a_L(t) = int_0^L dz m(t, L - z) a_A(z)`` for a medium initially holding
    the spin wave ``a_A`` and no incident light.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(t < 0) or np.any(z < 0):
        raise ValueError("kernel arguments must be non-negative")
    flat_t = np.atleast_1d(t)
    w = np.array([drive_energy(p, 0.0, float(ti)) for ti in flat_t.ravel()]).reshape(flat_t.shape)
    if t.ndim == 0:
        w = w[0]
    value = _kernel_core(p, p.rabi(t), w, z)
    return KernelEval(value if value.ndim else complex(value), p.phase_phi)


def analytic_storage_kernel(p: EnsembleParams, T: float, t, z) -> KernelEval:
    """Kernel mapping incident light at time ``t`` to the spin wave at ``z`` after time ``T``.

    ``a_A(z, T) = int_0^T dt k(t, z) a_L(t)`` with
    ``k = c Omega*(t) e^{i (w(T) - w(t)) / 4D} e^{i g^2 z / D} I0(i g/D sqrt(z (w(T) - w(t))))``.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(t < 0) or np.any(t > T) or np.any(z < 0):
        raise ValueError("storage kernel needs 0 <= t <= T and z >= 0")
    flat_t = np.atleast_1d(t)
    rem = np.array([drive_energy(p, float(ti), T) for ti in flat_t.ravel()]).reshape(flat_t.shape)
    if t.ndim == 0:
        rem = rem[0]
    value = _kernel_core(p, np.conj(p.rabi(t)), rem, z)
    return KernelEval(value if value.ndim else complex(value), p.phase_phi)


def time_reversed(p: EnsembleParams, T: float) -> EnsembleParams:
    """Same ensemble driven by ``Omega*(T - t)``."""
    rabi = p.rabi
    const = getattr(rabi, "constant_value", None)
    if const is not None:
        return p.replace(rabi=constant_rabi(np.conj(const)))
    return p.replace(rabi=lambda t: np.conj(rabi(T - np.asarray(t))))


def analytic_retrieval(p: EnsembleParams, t, spin_wave: Callable, n_nodes: int = 400) -> np.ndarray:
    """Output light ``int_0^L m(t, L - z) a_A(z) dz`` by Gauss-Legendre quadrature."""
    x, wts = np.polynomial.legendre.leggauss(n_nodes)
    L = p.length
    z = 0.5 * L * (x + 1.0)
    wz = 0.5 * L * wts
    a0 = np.asarray(spin_wave(z), dtype=complex)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape, dtype=complex)
    for i, ti in enumerate(t):
        m = analytic_bs_kernel(p, ti, L - z).value
        out[i] = np.sum(m * a0 * wz)
    return out


# --- lattice ---------------------------------------------------------------------------

@dataclass
class PulseGrid:
    """Staggered space-time lattice holding light and spin-wave amplitudes.

    ``light[j, n]`` is the light at plane ``z_edges[j]`` during time cell
    ``n``; ``atoms[j, n]`` is the spin wave in slab ``j`` at time
    ``t_edges[n]``. ``coords`` is ``"physical"`` (metres, seconds) or
    ``"dimensionless"`` (``s = z / L``, ``v = h(0, t) / h(0, T)``).
    """

    z_edges: np.ndarray
    t_edges: np.ndarray
    light: np.ndarray
    atoms: np.ndarray
    coords: str = "physical"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z_edges = np.asarray(self.z_edges, dtype=float)
        self.t_edges = np.asarray(self.t_edges, dtype=float)
        nz, nt = self.nz, self.nt
        if nz < 1 or nt < 1:
            raise ValueError("grid needs at least one cell in each direction")
        if np.any(np.diff(self.z_edges) <= 0) or np.any(np.diff(self.t_edges) <= 0):
            raise ValueError("grid edges must be strictly increasing")
        self.light = np.asarray(self.light, dtype=complex)
        self.atoms = np.asarray(self.atoms, dtype=complex)
        if self.light.shape != (nz + 1, nt) or self.atoms.shape != (nz, nt + 1):
            raise ValueError(f"field shapes {self.light.shape}, {self.atoms.shape} do not match a {nz}x{nt} grid")
        if not (np.all(np.isfinite(self.light)) and np.all(np.isfinite(self.atoms))):
            raise ValueError("grid fields must be finite")
        if self.coords not in ("physical", "dimensionless"):
            raise ValueError(f"unknown coordinate system {self.coords!r}")

    @property
    def nz(self) -> int:
        return len(self.z_edges) - 1

    @property
    def nt(self) -> int:
        return len(self.t_edges) - 1

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.z_edges)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t_edges)

    @property
    def z_centers(self) -> np.ndarray:
        return 0.5 * (self.z_edges[1:] + self.z_edges[:-1])

    @property
    def t_centers(self) -> np.ndarray:
        return 0.5 * (self.t_edges[1:] + self.t_edges[:-1])

    @property
    def length(self) -> float:
        return float(self.z_edges[-1] - self.z_edges[0])

    @property
    def duration(self) -> float:
        return float(self.t_edges[-1] - self.t_edges[0])

    @property
    def light_in(self) -> np.ndarray:
        return self.light[0]

    @property
    def light_out(self) -> np.ndarray:
        return self.light[-1]

    @property
    def atoms_in(self) -> np.ndarray:
        return self.atoms[:, 0]

    @property
    def atoms_out(self) -> np.ndarray:
        return self.atoms[:, -1]

    def light_norm(self, which: str = "out") -> float:
        row = self.light_out if which == "out" else self.light_in
        return float(np.sum(np.abs(row) ** 2 * self.dt))

    def atom_norm(self, which: str = "out") -> float:
        col = self.atoms_out if which == "out" else self.atoms_in
        return float(np.sum(np.abs(col) ** 2 * self.dz))

    def copy(self) -> "PulseGrid":
        return replace(self, light=self.light.copy(), atoms=self.atoms.copy(), meta=dict(self.meta))


def make_grid(
    nz: int,
    nt: int,
    length: float,
    duration: float,
    light_in=None,
    atoms_in=None,
    t_edges: Sequence[float] | None = None,
    t0: float = 0.0,
) -> PulseGrid:
    """Uniform physical grid with boundary data.

    ``light_in`` is a callable of time (evaluated at cell midpoints) or an
    array of length ``nt``; ``atoms_in`` a callable of position (slab
    centres) or an array of length ``nz``.
    """
    z_edges = np.linspace(0.0, length, nz + 1)
    t_edges = np.linspace(t0, t0 + duration, nt + 1) if t_edges is None else np.asarray(t_edges, dtype=float)
    nt = len(t_edges) - 1
    light = np.zeros((nz + 1, nt), dtype=complex)
    atoms = np.zeros((nz, nt + 1), dtype=complex)
    tc = 0.5 * (t_edges[1:] + t_edges[:-1])
    zc = 0.5 * (z_edges[1:] + z_edges[:-1])
    if light_in is not None:
        light[0] = light_in(tc) if callable(light_in) else np.asarray(light_in)
    if atoms_in is not None:
        atoms[:, 0] = atoms_in(zc) if callable(atoms_in) else np.asarray(atoms_in)
    return PulseGrid(z_edges, t_edges, light, atoms, "physical", {})


def _cell_drive(p: EnsembleParams, t_edges: np.ndarray):
    """Per time cell: effective Rabi frequency and ``int |Omega|^2 dt``.

    ``|Omega_eff|^2 dt`` equals the cell integral of ``|Omega|^2`` (8-point
    Gauss-Legendre); the phase is taken at the cell midpoint.
    """
    a, b = t_edges[:-1], t_edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(p.rabi(nodes), dtype=complex).reshape(nodes.shape)
    energy = np.sum(np.abs(vals) ** 2 * _GL_WEIGHTS[None, :], axis=1) * half
    om_mid = np.asarray(p.rabi(mid), dtype=complex).reshape(mid.shape)
    phase = np.where(np.abs(om_mid) > 0, om_mid / np.where(om_mid == 0, 1, np.abs(om_mid)), 1.0)
    om_eff = np.sqrt(energy / (b - a)) * phase
    if not np.all(np.isfinite(energy)):
        raise ValueError("Rabi profile is not finite on the grid")
    return om_eff, energy


def _cell_average(func, t_edges):
    a, b = t_edges[:-1], t_edges[1:]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = np.asarray(func(nodes)).reshape(nodes.shape)
    return 0.5 * np.sum(vals * _GL_WEIGHTS[None, :], axis=1)


# --- complex scalars as real 2x2 blocks -----------------------------------------------

def _lin(c) -> np.ndarray:
    """Real matrices of ``b -> c b`` on ``(Re b, Im b)``; ``c`` may be an array."""
    c = np.asarray(c, dtype=complex)
    out = np.empty(c.shape + (2, 2))
    out[..., 0, 0] = c.real
    out[..., 0, 1] = -c.imag
    out[..., 1, 0] = c.imag
    out[..., 1, 1] = c.real
    return out


def _conj_lin(c) -> np.ndarray:
    """Real matrices of ``b -> c conj(b)``."""
    c = np.asarray(c, dtype=complex)
    out = np.empty(c.shape + (2, 2))
    out[..., 0, 0] = c.real
    out[..., 0, 1] = c.imag
    out[..., 1, 0] = c.imag
    out[..., 1, 1] = -c.real
    return out


def _broadcast(m, nt):
    m = np.asarray(m, dtype=float)
    return np.broadcast_to(m, (nt, 2, 2)) if m.ndim == 2 else m


def _cell_propagators(A, B, C, E, dz, dt):
    """Box-rule propagators ``T_n`` for each time cell (uniform ``dz``)."""
    nt = len(dt)
    A, B, C, E = (_broadcast(m, nt) for m in (A, B, C, E))
    p = 0.5 * dz
    q = 0.5 * dt[:, None, None]
    I = np.eye(2)[None]
    lhs = np.block([[I - p * A, -p * B], [-q * C, I - q * E]])
    rhs = np.block([[I + p * A, p * B], [q * C, I + q * E]])
    return np.linalg.solve(lhs, rhs)


def _sweep(Tn: np.ndarray, grid: PulseGrid) -> PulseGrid:
    nz, nt = grid.nz, grid.nt
    dz = grid.dz
    if not np.allclose(dz, dz[0], rtol=1e-12, atol=0):
        raise ValueError("the integrator requires uniform spatial steps")
    light = np.zeros((nz + 1, nt, 2))
    atoms = np.zeros((nz, nt + 1, 2))
    light[0, :, 0], light[0, :, 1] = grid.light_in.real, grid.light_in.imag
    atoms[:, 0, 0], atoms[:, 0, 1] = grid.atoms_in.real, grid.atoms_in.imag
    for s in range(nz + nt - 1):
        j = np.arange(max(0, s - nt + 1), min(nz - 1, s) + 1)
        n = s - j
        x = np.concatenate([light[j, n], atoms[j, n]], axis=1)
        y = np.einsum("mab,mb->ma", Tn[n], x)
        light[j + 1, n] = y[:, :2]
        atoms[j, n + 1] = y[:, 2:]
    out = grid.copy()
    out.light = light[..., 0] + 1j * light[..., 1]
    out.atoms = atoms[..., 0] + 1j * atoms[..., 1]
    return out


def required_resolution(d_eff: float, temporal_phase: float) -> tuple[int, int]:
    """Minimal ``(nz, nt)`` accepted by the integrators.

    ``nz >= 8 d_eff`` and ``nt >= 8 max(d_eff, theta)``. ``d_eff = 2 L |A|``
    is the extinction exponent of the light self-term (equal to ``d`` on
    resonance) and ``theta`` the accumulated atomic self-phase/decay
    ``int |E| dt``.
    """
    f = RESOLUTION_FACTOR
    d_eff, theta = abs(d_eff), abs(temporal_phase)
    return math.ceil(f * d_eff), math.ceil(f * max(d_eff, theta))


def _check_resolution(grid: PulseGrid, d_eff, theta, enforce):
    if not enforce:
        return
    nz_req, nt_req = required_resolution(d_eff, theta)
    if grid.nz < nz_req or grid.nt < nt_req:
        raise ValueError(
            f"grid {grid.nz}x{grid.nt} is too coarse for stable, accurate integration: "
            f"need nz >= {nz_req} and nt >= {nt_req}"
        )


def _kappa_of(p: EnsembleParams, grid: PulseGrid) -> float:
    if "kappa" not in grid.meta:
        raise ValueError("dimensionless grid lacks its coupling constant; build it with to_dimensionless")
    return float(grid.meta["kappa"])


# --- integrators -----------------------------------------------------------------------

def integrate_beam_splitter(p: EnsembleParams, grid_in: PulseGrid, enforce_resolution: bool = True) -> PulseGrid:
    """Excitation-exchange (Raman/EIT) interaction including damping and phase shifts.

    Physical coordinates::

        dz a_L = i g^2/D a_L + i g Omega/(2D) a_A
        dt a_A = i |Omega|^2/(4D) a_A + i g Omega*/(2D) a_L,    D = Delta - i gamma/2

    Dimensionless coordinates use the rescaled form with coupling
    ``-i kappa e^{i phi}/2`` and ``kappa^2 = h(0, T)``.
    """
    D = p.complex_detuning
    nt = grid_in.nt
    if grid_in.coords == "physical":
        g = p.coupling_g
        om, energy = _cell_drive(p, grid_in.t_edges)
        A = _lin(1j * g * g / D)
        B = _lin(1j * g * om / (2 * D))
        C = _lin(1j * g * np.conj(om) / (2 * D))
        E = _lin(1j * np.abs(om) ** 2 / (4 * D))
        w = float(np.sum(energy))
        theta = w / (4 * abs(D))
        kappa = math.sqrt(p.d * p.gamma * w / p.detuning_factor)
    else:
        kappa = _kappa_of(p, grid_in)
        ephi = np.exp(1j * p.phase_phi)
        A = _lin(1j * p.d * p.gamma / (4 * D))
        B = C = _lin(-0.5j * kappa * ephi)
        E = _lin(1j * kappa**2 * np.conj(D) / (p.gamma * p.d) if p.d > 0 else 0.0)
        theta = kappa**2 * abs(D) / (p.gamma * p.d) if p.d > 0 else 0.0
    d_eff = p.d * p.gamma / (2 * abs(D))
    _check_resolution(grid_in, d_eff, theta, enforce_resolution)
    Tn = _cell_propagators(A, B, C, E, grid_in.dz[0], grid_in.dt)
    return _sweep(Tn, grid_in)


def integrate_parametric(p: EnsembleParams, grid_in: PulseGrid, enforce_resolution: bool = True) -> PulseGrid:
    """Pair-creation interaction with the decay going to auxiliary levels.

    Physical coordinates::

        dz a_L = i g Omega/(2D) a_A^*
        dt a_A = -i |Omega|^2 Delta/(4 Delta^2 + gamma^2) a_A + i g Omega/(2D) a_L^*
    """
    D = p.complex_detuning
    zero = np.zeros((2, 2))
    if grid_in.coords == "physical":
        g = p.coupling_g
        om, energy = _cell_drive(p, grid_in.t_edges)
        B = C = _conj_lin(1j * g * om / (2 * D))
        E = _lin(-1j * np.abs(om) ** 2 * p.delta / p.detuning_factor)
        w = float(np.sum(energy))
        theta = w * abs(p.delta) / p.detuning_factor
        kappa = math.sqrt(p.d * p.gamma * w / p.detuning_factor)
    else:
        kappa = _kappa_of(p, grid_in)
        ephi = np.exp(1j * p.phase_phi)
        B = C = _conj_lin(-0.5j * kappa * ephi)
        E = _lin(-1j * kappa**2 * p.delta / (p.gamma * p.d) if p.d > 0 else 0.0)
        theta = kappa**2 * abs(p.delta) / (p.gamma * p.d) if p.d > 0 else 0.0
    _check_resolution(grid_in, 0.0, theta, enforce_resolution)
    Tn = _cell_propagators(zero, B, C, E, grid_in.dz[0], grid_in.dt)
    return _sweep(Tn, grid_in)


def _faraday_matrices(coupling_x, coupling_p, nt):
    """``x' += coupling_x * p_other``, ``p' += coupling_p * p_other`` as (nt, 2, 2)."""
    M = np.zeros((nt, 2, 2))
    M[:, 0, 1] = coupling_x
    M[:, 1, 1] = coupling_p
    return M


def integrate_faraday(
    p: EnsembleParams,
    grid_in: PulseGrid,
    larmor: float | None = None,
    enforce_resolution: bool = True,
) -> PulseGrid:
    """Faraday (QND) interaction for the quadrature fields ``x + i p``.

    Without ``larmor``::

        dz x_L = -a p_A - b x_L     dz p_L =  a' p_A - b p_L
        dt x_A = -a p_L - r x_A     dt p_A =  a' p_L - r p_A

    with ``a = 2 sqrt2 Delta g Omega / (4 Delta^2 + gamma^2)``,
    ``a' = sqrt2 gamma g Omega / (4 Delta^2 + gamma^2)``,
    ``b = gamma g^2 / (4 Delta^2 + gamma^2)``, ``r = gamma Omega^2 / 2(4 Delta^2 + gamma^2)``
    and the linear-polarisation coupling ``g^2 = d gamma / 2L``. The drive is
    taken real (its modulus).

    With ``larmor = omega``, the rotating-frame equations for a spin
    precessing at ``omega`` are used (no damping)::

        dz x_L = -c (cos(wt) p_A + sin(wt) x_A),   dz p_L = 0
        dt x_A = -c cos(wt) p_L,                   dt p_A = c sin(wt) p_L

    with ``c = g Omega / (sqrt2 Delta)``.
    """
    nt = grid_in.nt
    if larmor is not None:
        if grid_in.coords != "physical":
            raise ValueError("Larmor precession is integrated in physical coordinates only")
        if p.delta == 0:
            raise ValueError("the rotating-frame Faraday equations need a non-zero detuning")
        g = math.sqrt(p.d * p.gamma / (2 * p.length))
        scale = g / (math.sqrt(2) * p.delta)
        te = grid_in.t_edges
        c_cos = scale * _cell_average(lambda t: np.abs(p.rabi(t)) * np.cos(larmor * t), te)
        c_sin = scale * _cell_average(lambda t: np.abs(p.rabi(t)) * np.sin(larmor * t), te)
        B = np.zeros((nt, 2, 2))
        B[:, 0, 0] = -c_sin
        B[:, 0, 1] = -c_cos
        C = np.zeros((nt, 2, 2))
        C[:, 0, 1] = -c_cos
        C[:, 1, 1] = c_sin
        zero = np.zeros((2, 2))
        _check_resolution(grid_in, 0.0, 0.0, enforce_resolution)
        Tn = _cell_propagators(zero, B, C, zero, grid_in.dz[0], grid_in.dt)
        return _sweep(Tn, grid_in)

    F = p.detuning_factor
    if grid_in.coords == "physical":
        g = math.sqrt(p.d * p.gamma / (2 * p.length))
        om, energy = _cell_drive(p, grid_in.t_edges)
        om = np.abs(om)
        a = 2 * math.sqrt(2) * p.delta * g * om / F
        a2 = math.sqrt(2) * p.gamma * g * om / F
        A = -(p.gamma * g * g / F) * np.eye(2)
        B = C = _faraday_matrices(-a, a2, nt)
        E = -(p.gamma * np.abs(om) ** 2 / (2 * F))[:, None, None] * np.eye(2)[None]
        h = p.d * p.gamma * float(np.sum(energy)) / F
        kappa = math.sqrt(h)
        theta = h / (2 * p.d) if p.d > 0 else 0.0
    else:
        kappa = _kappa_of(p, grid_in)
        phi = p.phase_phi
        eta_L = 0.5 * p.d * p.gamma**2 / F
        A = -eta_L * np.eye(2)
        B = C = _faraday_matrices(kappa * math.cos(phi), -kappa * math.sin(phi), nt)
        E = -(kappa**2 / (2 * p.d)) * np.eye(2) if p.d > 0 else np.zeros((2, 2))
        theta = kappa**2 / (2 * p.d) if p.d > 0 else 0.0
    _check_resolution(grid_in, p.d * p.gamma**2 / F, theta, enforce_resolution)
    Tn = _cell_propagators(A, B, C, E, grid_in.dz[0], grid_in.dt)
    return _sweep(Tn, grid_in)


def integrate_two_cell_faraday(
    p: EnsembleParams, grid_in: PulseGrid, larmor: float, enforce_resolution: bool = True
) -> tuple[PulseGrid, PulseGrid]:
    """Light passes a cell precessing at ``+larmor`` and then one at ``-larmor``.

    ``grid_in`` supplies the incident light and the first cell's spin wave;
    the second cell's initial spin wave is ``grid_in.meta["atoms_in_2"]``
    (vacuum amplitude zero when absent).
    """
    first = integrate_faraday(p, grid_in, larmor, enforce_resolution)
    second_in = grid_in.copy()
    second_in.light = np.zeros_like(grid_in.light)
    second_in.light[0] = first.light_out
    second_in.atoms = np.zeros_like(grid_in.atoms)
    second_in.atoms[:, 0] = grid_in.meta.get("atoms_in_2", 0.0)
    second = integrate_faraday(p, second_in, -larmor, enforce_resolution)
    return first, second


# --- dimensionless coordinates ----------------------------------------------------------

def light_rescaling(p: EnsembleParams, t_edges: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Per-cell factor ``lambda_n`` with ``a~_L = lambda_n a_L``, plus ``kappa`` and the ``v`` edges.

    ``lambda_n = -kappa |2D| / (sqrt(d gamma) Omega_n)``.
    """
    om, energy = _cell_drive(p, t_edges)
    total = float(np.sum(energy))
    if total <= 0 or p.d <= 0:
        raise ValueError("h(0, T) = 0: the dimensionless time coordinate is undefined")
    kappa = math.sqrt(p.d * p.gamma * total / p.detuning_factor)
    if np.any(np.abs(om) == 0):
        raise ValueError("the drive vanishes inside a time cell; the light rescaling is singular there")
    lam = -kappa * math.sqrt(p.detuning_factor) / (math.sqrt(p.d * p.gamma) * om)
    v_edges = np.concatenate([[0.0], np.cumsum(energy) / total])
    v_edges[-1] = 1.0
    return lam, kappa, v_edges


def to_dimensionless(grid: PulseGrid, p: EnsembleParams, real_drive: bool = False) -> PulseGrid:
    """Map a physical grid to ``(s, v)`` with ``a~_A = sqrt(L) a_A`` and ``a~_L = lambda a_L``.

    ``real_drive`` uses the modulus of the drive in ``lambda`` (as the
    Faraday integrator does).
    """
    if grid.coords != "physical":
        raise ValueError("grid is already dimensionless")
    lam, kappa, v_edges = light_rescaling(p, grid.t_edges)
    if real_drive:
        lam = -np.abs(lam)
    L = p.length
    meta = dict(grid.meta)
    meta.update(
        kappa=kappa,
        lam=lam,
        t_edges_physical=grid.t_edges.copy(),
        z_edges_physical=grid.z_edges.copy(),
        length=L,
    )
    return PulseGrid(
        grid.z_edges / L,
        v_edges,
        grid.light * lam[None, :],
        grid.atoms * math.sqrt(L),
        "dimensionless",
        meta,
    )


def from_dimensionless(grid: PulseGrid, p: EnsembleParams | None = None) -> PulseGrid:
    """Inverse of :func:`to_dimensionless`."""
    if grid.coords != "dimensionless":
        raise ValueError("grid is not dimensionless")
    try:
        lam = grid.meta["lam"]
        t_edges = grid.meta["t_edges_physical"]
        z_edges = grid.meta["z_edges_physical"]
        L = grid.meta["length"]
    except KeyError as exc:
        raise ValueError(f"dimensionless grid lacks {exc.args[0]!r}; build it with to_dimensionless") from exc
    meta = {k: v for k, v in grid.meta.items() if k not in ("lam", "t_edges_physical", "z_edges_physical", "length", "kappa")}
    return PulseGrid(z_edges, t_edges, grid.light / lam[None, :], grid.atoms / math.sqrt(L), "physical", meta)


# --- modes and overlaps -----------------------------------------------------------------

def mode_overlap(field_values, mode_values, weights, tol: float = 1e-6) -> complex:
    """``sum conj(mode) * field * weight`` for a mode normalised on the same weights."""
    f = np.asarray(field_values, dtype=complex)
    m = np.asarray(mode_values, dtype=complex)
    w = np.asarray(weights, dtype=float)
    norm = float(np.sum(np.abs(m) ** 2 * w))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"mode function is not normalised (norm {norm:.6g})")
    return complex(np.sum(np.conj(m) * f * w))


def symmetric_light_mode(grid: PulseGrid) -> np.ndarray:
    return np.full(grid.nt, 1.0 / math.sqrt(grid.duration))


def symmetric_atom_mode(grid: PulseGrid) -> np.ndarray:
    return np.full(grid.nz, 1.0 / math.sqrt(grid.length))


def modulation_modes(grid: PulseGrid, omega: float) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine modes ``sqrt(2/T) cos/sin(omega t)`` as cell averages, renormalised."""
    te = grid.t_edges
    c = _cell_average(lambda t: np.cos(omega * t), te)
    s = _cell_average(lambda t: np.sin(omega * t), te)
    c = c / math.sqrt(np.sum(c * c * grid.dt))
    s = s / math.sqrt(np.sum(s * s * grid.dt))
    return c, s


# --- EIT storage, retrieval and optimisation ----------------------------------------------

@dataclass
class EITResult:
    stored: np.ndarray
    leaked: np.ndarray
    retrieved: np.ndarray
    efficiency: float
    storage_efficiency: float
    leakage: float
    overlap_efficiency: float | None
    storage_grid: PulseGrid
    retrieval_grid: PulseGrid


def pulse_bandwidth(t: np.ndarray, amp: np.ndarray) -> float:
    """RMS angular bandwidth ``sqrt(int |u'|^2 / int |u|^2)``."""
    du = np.gradient(np.asarray(amp, dtype=complex), t)
    return float(math.sqrt(np.trapezoid(np.abs(du) ** 2, t) / np.trapezoid(np.abs(amp) ** 2, t)))


def eit_transfer(
    p_store: EnsembleParams,
    input_pulse,
    T_store: float,
    nz: int,
    nt: int,
    p_read: EnsembleParams | None = None,
    T_read: float | None = None,
    backward: bool = True,
    template=None,
    enforce_resolution: bool = True,
) -> EITResult:
    """Store an incident pulse with one control and read it out with another.

    ``p_store.rabi`` drives the storage window ``[0, T_store]``; the spin
    wave left at the end is retrieved with ``p_read.rabi`` over
    ``[0, T_read]`` (defaults: the time-reversed conjugate storage control).
    ``backward`` retrieval sends the read light through the medium in the
    opposite direction, which is equivalent to forward retrieval of the
    mirrored spin wave. ``efficiency`` is the intensity ratio
    retrieved/incident; ``overlap_efficiency`` is ``|<template, out>|^2 / |in|^2``
    for a normalised ``template``.
    """
    store = make_grid(nz, nt, p_store.length, T_store, light_in=input_pulse)
    u = store.light_in
    norm_in = float(np.sum(np.abs(u) ** 2 * store.dt))
    if norm_in <= 0:
        raise ValueError("input pulse is empty")
    bw = pulse_bandwidth(store.t_centers, u)
    if bw > p_store.d * p_store.gamma:
        raise ValueError(f"pulse bandwidth {bw:.3g} exceeds the absorption bandwidth d*gamma = {p_store.d * p_store.gamma:.3g}")
    stored_grid = integrate_beam_splitter(p_store, store, enforce_resolution)
    spin = stored_grid.atoms_out
    if p_read is None:
        p_read = time_reversed(p_store, T_store)
    T_read = T_store if T_read is None else T_read
    initial = spin[::-1] if backward else spin
    read = make_grid(nz, nt, p_read.length, T_read, atoms_in=np.array(initial))
    read_grid = integrate_beam_splitter(p_read, read, enforce_resolution)
    out = read_grid.light_out
    eff = float(np.sum(np.abs(out) ** 2 * read.dt)) / norm_in
    overlap = None
    if template is not None:
        tpl = template(read.t_centers) if callable(template) else np.asarray(template)
        overlap = abs(mode_overlap(out, tpl, read.dt)) ** 2 / norm_in
    return EITResult(
        stored=spin,
        leaked=stored_grid.light_out,
        retrieved=out,
        efficiency=eff,
        storage_efficiency=stored_grid.atom_norm() / norm_in,
        leakage=stored_grid.light_norm() / norm_in,
        overlap_efficiency=overlap,
        storage_grid=stored_grid,
        retrieval_grid=read_grid,
    )


def iterate_optimal_input(
    p: EnsembleParams,
    n_iter: int,
    T: float,
    nz: int,
    nt: int,
    start=None,
    enforce_resolution: bool = True,
    tol: float | None = None,
) -> tuple[list[np.ndarray], list[float]]:
    """Time-reversal iteration toward the input that maximises storage plus retrieval.

    Each step stores the current input, retrieves backward with the
    time-reversed control, and uses the time-reversed, conjugated, and
    renormalised output as the next input. Returns the sequence of shapes
    (on the time-cell midpoints) and their efficiencies. With ``tol`` the
    loop stops early once the relative efficiency change drops below it.
    The default start is a flat pulse over the window.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    grid = make_grid(nz, nt, p.length, T)
    tc, dt = grid.t_centers, grid.dt
    if start is None:
        u = np.ones_like(tc) + 0j
    else:
        u = np.asarray(start(tc) if callable(start) else start, dtype=complex)
    u = u / math.sqrt(np.sum(np.abs(u) ** 2 * dt))
    shapes, effs = [], []
    for _ in range(n_iter):
        res = eit_transfer(p, u, T, nz, nt, backward=True, enforce_resolution=enforce_resolution)
        shapes.append(u)
        effs.append(res.efficiency)
        if tol is not None and len(effs) > 1 and abs(effs[-1] - effs[-2]) <= tol * abs(effs[-1]):
            break
        nxt = np.conj(res.retrieved[::-1])
        u = nxt / math.sqrt(np.sum(np.abs(nxt) ** 2 * dt))
    return shapes, effs


def pulse_centroid(t: np.ndarray, amp: np.ndarray, dt: np.ndarray | None = None) -> float:
    w = np.abs(np.asarray(amp)) ** 2 * (np.ones_like(t) if dt is None else dt)
    return float(np.sum(w * t) / np.sum(w))


def group_delay(p: EnsembleParams, pulse, T: float, nz: int, nt: int, enforce_resolution: bool = True) -> tuple[float, float]:
    """Measured intensity-centroid delay of a pulse under a steady control, and ``L / v_g``."""
    grid = integrate_beam_splitter(p, make_grid(nz, nt, p.length, T, light_in=pulse), enforce_resolution)
    tc = grid.t_centers
    delay = pulse_centroid(tc, grid.light_out, grid.dt) - pulse_centroid(tc, grid.light_in, grid.dt)
    om = abs(getattr(p.rabi, "constant_value", p.rabi(0.5 * T)))
    return delay, p.gamma * p.d / om**2


# --- CSV import/export -----------------------------------------------------------------

def export_pulse_csv(path, t, amp) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re", "im"])
        for ti, a in zip(np.asarray(t, float), np.asarray(amp, complex)):
            w.writerow([f"{ti:.17g}", f"{a.real:.17g}", f"{a.imag:.17g}"])


def import_pulse_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "re", "im"]:
        raise ValueError(f"{path}: expected header t,re,im")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, 3)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def export_grid_csv(path, grid: PulseGrid, which: str = "light") -> None:
    """Flat ``z,t,re,im`` table of the light (planes x time cells) or spin wave (slabs x time edges)."""
    if which == "light":
        zs, ts, vals = grid.z_edges, grid.t_centers, grid.light
    elif which == "atoms":
        zs, ts, vals = grid.z_centers, grid.t_edges, grid.atoms
    else:
        raise ValueError("which must be 'light' or 'atoms'")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", "t", "re", "im"])
        for j, z in enumerate(zs):
            for n, t in enumerate(ts):
                v = vals[j, n]
                w.writerow([f"{z:.17g}", f"{t:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])
