"""Gaussian states of labeled bosonic modes.

Conventions used throughout the package:

* quadratures are ordered ``(X1, P1, X2, P2, ...)``;
* ``[X, P] = i``, so the vacuum has variance 1/2 in every quadrature;
* the symplectic form is block diagonal with blocks ``[[0, 1], [-1, 0]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-9
SYMPLECTIC_TOL = 1e-10
DEGENERATE_VARIANCE = 1e-12

_QUADRATURES = ("X", "P")


def symplectic_form(n_modes: int) -> np.ndarray:
    """Return the ``2n x 2n`` symplectic form for ``n_modes`` modes."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n_modes), block)


def _quad_offset(quadrature: str) -> int:
    q = quadrature.upper()
    if q not in _QUADRATURES:
        raise ValueError(f"quadrature must be 'X' or 'P', got {quadrature!r}")
    return _QUADRATURES.index(q)


def _hermitian_min_eig(matrix: np.ndarray) -> float:
    herm = 0.5 * (matrix + matrix.conj().T)
    return float(np.linalg.eigvalsh(herm).min())


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix over an ordered set of modes.

    States are treated as values: every operation returns a new instance.
    """

    mode_labels: tuple
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        labels = tuple(self.mode_labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels: {labels}")
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        n = len(labels)
        if mean.shape != (2 * n,) or cov.shape != (2 * n, 2 * n):
            raise ValueError(
                f"state over {n} modes needs mean of length {2 * n} and "
                f"{2 * n}x{2 * n} covariance, got {mean.shape} and {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state contains non-finite entries")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mode_labels", labels)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    def index(self, mode) -> int:
        try:
            return self.mode_labels.index(mode)
        except ValueError:
            raise KeyError(f"unknown mode {mode!r}; state has {self.mode_labels}") from None

    def quad_index(self, mode, quadrature: str) -> int:
        return 2 * self.index(mode) + _quad_offset(quadrature)

    def expectation(self, mode, quadrature: str) -> float:
        return float(self.mean[self.quad_index(mode, quadrature)])

    def variance(self, mode, quadrature: str) -> float:
        i = self.quad_index(mode, quadrature)
        return float(self.cov[i, i])

    def _coefficient_vector(self, combination: Mapping) -> np.ndarray:
        vec = np.zeros(2 * self.n_modes)
        for (mode, quad), coeff in combination.items():
            vec[self.quad_index(mode, quad)] += coeff
        return vec

    def combination_mean(self, combination: Mapping) -> float:
        """Mean of ``sum(c * Q)`` for a mapping ``{(mode, quad): c}``."""
        return float(self._coefficient_vector(combination) @ self.mean)

    def combination_variance(self, combination: Mapping) -> float:
        """Variance of ``sum(c * Q)`` for a mapping ``{(mode, quad): c}``."""
        vec = self._coefficient_vector(combination)
        return float(vec @ self.cov @ vec)

    def symplectic_eigenvalues(self) -> np.ndarray:
        """Symplectic spectrum of the covariance matrix (ascending)."""
        omega = symplectic_form(self.n_modes)
        eig = np.abs(np.linalg.eigvals(1j * omega @ self.cov))
        return np.sort(eig)[::2]

    def is_physical(self, tol: float = PHYSICAL_TOL) -> bool:
        """Check the uncertainty relation ``cov + (i/2) Omega >= 0``."""
        omega = symplectic_form(self.n_modes)
        return _hermitian_min_eig(self.cov + 0.5j * omega) >= -tol

    def reduced(self, modes: Sequence) -> "GaussianState":
        """Marginal state of ``modes`` in the given order."""
        idx = []
        for m in modes:
            i = self.index(m)
            idx.extend((2 * i, 2 * i + 1))
        idx = np.array(idx, dtype=int)
        return GaussianState(tuple(modes), self.mean[idx], self.cov[np.ix_(idx, idx)])

    def discard(self, modes: Iterable) -> "GaussianState":
        drop = set(modes)
        for m in drop:
            self.index(m)
        return self.reduced([m for m in self.mode_labels if m not in drop])

    def relabel(self, mapping: Mapping) -> "GaussianState":
        labels = tuple(mapping.get(m, m) for m in self.mode_labels)
        return GaussianState(labels, self.mean, self.cov)

    def tensor(self, other: "GaussianState") -> "GaussianState":
        """Product state ``self (x) other``; labels must be disjoint."""
        n1 = 2 * self.n_modes
        n2 = 2 * other.n_modes
        cov = np.zeros((n1 + n2, n1 + n2))
        cov[:n1, :n1] = self.cov
        cov[n1:, n1:] = other.cov
        return GaussianState(
            self.mode_labels + other.mode_labels,
            np.concatenate([self.mean, other.mean]),
            cov,
        )

    def with_mean(self, mean: np.ndarray) -> "GaussianState":
        return GaussianState(self.mode_labels, mean, self.cov)


def vacuum(labels: Sequence) -> GaussianState:
    labels = tuple(labels)
    n = len(labels)
    return GaussianState(labels, np.zeros(2 * n), 0.5 * np.eye(2 * n))


def prepare_state(
    n_modes: int,
    displacements: Sequence | None = None,
    squeezes: Sequence | None = None,
    labels: Sequence | None = None,
    check_physical: bool = True,
) -> GaussianState:
    """Build a product state with diagonal covariance.

    :param n_modes: number of modes (at least one).
    :param displacements: per-mode ``(X, P)`` means; defaults to zero.
    :param squeezes: per-mode ``(sX, sP)`` variance scalings; the covariance
        diagonal becomes ``(sX / 2, sP / 2)``. A bare scalar ``s`` is read as
        ``(s, 1 / s)``, i.e. a minimum-uncertainty squeezed state.
    :param labels: mode labels, defaulting to ``0 .. n_modes - 1``.
    :raises ValueError: for non-positive scalings or, when ``check_physical``,
        for covariances that violate the uncertainty relation.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    labels = tuple(range(n_modes)) if labels is None else tuple(labels)
    if len(labels) != n_modes:
        raise ValueError("number of labels does not match n_modes")

    mean = np.zeros(2 * n_modes)
    if displacements is not None:
        disp = np.asarray(displacements, dtype=float).reshape(n_modes, 2)
        mean[:] = disp.reshape(-1)

    diag = np.full(2 * n_modes, 0.5)
    if squeezes is not None:
        if len(squeezes) != n_modes:
            raise ValueError("one squeeze entry per mode is required")
        for k, sq in enumerate(squeezes):
            if np.ndim(sq) == 0:
                sx, sp = float(sq), (1.0 / float(sq) if sq > 0 else float("nan"))
            else:
                sx, sp = (float(v) for v in sq)
            if not (sx > 0 and sp > 0):
                raise ValueError(f"unphysical variance scaling ({sx}, {sp}) on mode {labels[k]!r}")
            diag[2 * k] *= sx
            diag[2 * k + 1] *= sp

    state = GaussianState(labels, mean, np.diag(diag))
    if check_physical and not state.is_physical():
        nu = state.symplectic_eigenvalues().min()
        raise ValueError(f"unphysical variance: symplectic eigenvalue {nu:.6g} < 1/2")
    return state


@dataclass(frozen=True)
class GaussianChannel:
    """Gaussian channel ``mean -> S mean + disp``, ``cov -> S cov S^T + N``.

    ``mode_labels`` names the modes on which the channel acts; applying it to
    a larger state leaves the remaining modes untouched.
    """

    mode_labels: tuple
    S: np.ndarray
    disp: np.ndarray = None
    N: np.ndarray = None
    name: str = field(default="channel", compare=False)

    def __post_init__(self):
        labels = tuple(self.mode_labels)
        dim = 2 * len(labels)
        S = np.asarray(self.S, dtype=float)
        disp = np.zeros(dim) if self.disp is None else np.asarray(self.disp, dtype=float).reshape(-1)
        N = np.zeros((dim, dim)) if self.N is None else np.asarray(self.N, dtype=float)
        if S.shape != (dim, dim) or disp.shape != (dim,) or N.shape != (dim, dim):
            raise ValueError(f"channel over {len(labels)} modes has inconsistent dimensions")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(disp)) and np.all(np.isfinite(N))):
            raise ValueError("channel contains non-finite entries")
        N = 0.5 * (N + N.T)
        for arr in (S, disp, N):
            arr.setflags(write=False)
        object.__setattr__(self, "mode_labels", labels)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "disp", disp)
        object.__setattr__(self, "N", N)

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    @property
    def is_lossless(self) -> bool:
        return not np.any(self.N)

    def symplectic_defect(self) -> float:
        omega = symplectic_form(self.n_modes)
        return float(np.abs(self.S @ omega @ self.S.T - omega).max())

    def is_symplectic(self, tol: float = SYMPLECTIC_TOL) -> bool:
        return self.symplectic_defect() <= tol

    def cp_margin(self) -> float:
        """Smallest eigenvalue of ``N + (i/2)(Omega - S Omega S^T)``."""
        omega = symplectic_form(self.n_modes)
        return _hermitian_min_eig(self.N + 0.5j * (omega - self.S @ omega @ self.S.T))

    def is_cp(self, tol: float = PHYSICAL_TOL) -> bool:
        return self.cp_margin() >= -tol

    def then(self, other: "GaussianChannel") -> "GaussianChannel":
        """Sequential composition: apply ``self`` first, then ``other``.

        Both channels are embedded on the union of their modes.
        """
        labels = self.mode_labels + tuple(m for m in other.mode_labels if m not in self.mode_labels)
        a = embed_channel(self, labels)
        b = embed_channel(other, labels)
        return GaussianChannel(
            labels,
            b.S @ a.S,
            b.S @ a.disp + b.disp,
            b.S @ a.N @ b.S.T + b.N,
            name=f"{self.name}>{other.name}",
        )


def identity_channel(labels: Sequence) -> GaussianChannel:
    labels = tuple(labels)
    return GaussianChannel(labels, np.eye(2 * len(labels)), name="identity")


def embed_channel(ch: GaussianChannel, labels: Sequence) -> GaussianChannel:
    """Extend ``ch`` to act as identity on the extra modes in ``labels``."""
    labels = tuple(labels)
    if labels == ch.mode_labels:
        return ch
    missing = [m for m in ch.mode_labels if m not in labels]
    if missing:
        raise ValueError(f"channel modes {missing} not present in {labels}")
    dim = 2 * len(labels)
    idx = []
    for m in ch.mode_labels:
        i = labels.index(m)
        idx.extend((2 * i, 2 * i + 1))
    idx = np.array(idx, dtype=int)
    S = np.eye(dim)
    S[np.ix_(idx, idx)] = ch.S
    disp = np.zeros(dim)
    disp[idx] = ch.disp
    N = np.zeros((dim, dim))
    N[np.ix_(idx, idx)] = ch.N
    return GaussianChannel(labels, S, disp, N, name=ch.name)


def apply_channel(state: GaussianState, ch: GaussianChannel, check_cp: bool = True) -> GaussianState:
    """Propagate ``state`` through ``ch``.

    :raises ValueError: if the channel refers to modes missing from the state
        or violates complete positivity.
    """
    if check_cp and not ch.is_cp():
        raise ValueError(f"channel {ch.name!r} violates complete positivity (margin {ch.cp_margin():.3g})")
    full = embed_channel(ch, state.mode_labels)
    mean = full.S @ state.mean + full.disp
    cov = full.S @ state.cov @ full.S.T + full.N
    return GaussianState(state.mode_labels, mean, cov)


def linear_map(state: GaussianState, matrix: np.ndarray, offset: np.ndarray | None = None) -> GaussianState:
    """Apply an arbitrary real linear map to the quadratures.

    Used for feedback in the ensemble average, where the map need not be
    symplectic on the measured mode (which is discarded afterwards).
    """
    matrix = np.asarray(matrix, dtype=float)
    mean = matrix @ state.mean
    if offset is not None:
        mean = mean + offset
    return GaussianState(state.mode_labels, mean, matrix @ state.cov @ matrix.T)


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome of a homodyne measurement plus the gain used to feed it back."""

    mode: object
    quadrature: str
    outcome: float
    gain: float = 1.0

    def __post_init__(self):
        _quad_offset(self.quadrature)
        if not (math.isfinite(self.outcome) and math.isfinite(self.gain)):
            raise ValueError("measurement outcome and gain must be finite")


def homodyne_condition(
    state: GaussianState,
    mode,
    quadrature: str,
    outcome: float | None = None,
    seed: int | np.random.Generator | None = None,
) -> tuple[float, GaussianState]:
    """Condition ``state`` on the homodyne result of one quadrature.

    When ``outcome`` is ``None`` it is drawn from the marginal of the measured
    quadrature using ``seed``. The measured mode is removed from the returned
    state.

    :raises ValueError: if the measured quadrature has (near) zero variance.
    """
    k = state.quad_index(mode, quadrature)
    var = state.cov[k, k]
    if var < DEGENERATE_VARIANCE:
        raise ValueError(f"degenerate measurement: variance of {quadrature}_{mode} is {var:.3g}")
    if outcome is None:
        if seed is None:
            raise ValueError("sampling a homodyne outcome requires an explicit seed")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        outcome = float(rng.normal(state.mean[k], math.sqrt(var)))
    outcome = float(outcome)
    if not math.isfinite(outcome):
        raise ValueError("measurement outcome must be finite")

    m = state.index(mode)
    keep = np.array([i for i in range(2 * state.n_modes) if i // 2 != m], dtype=int)
    cross = state.cov[keep, k]
    mean = state.mean[keep] + cross * (outcome - state.mean[k]) / var
    cov = state.cov[np.ix_(keep, keep)] - np.outer(cross, cross) / var
    labels = tuple(l for l in state.mode_labels if l != mode)
    return outcome, GaussianState(labels, mean, cov)


def sample_homodyne(
    state: GaussianState, mode, quadrature: str, n_samples: int, seed: int
) -> tuple[np.ndarray, GaussianState]:
    """Draw many homodyne outcomes at once.

    Returns the outcomes and the (outcome-independent) conditional covariance
    carried by a state whose mean corresponds to a zero offset; per-trajectory
    conditional means follow from :func:`conditional_means`.
    """
    rng = np.random.default_rng(seed)
    k = state.quad_index(mode, quadrature)
    outcomes = rng.normal(state.mean[k], math.sqrt(state.cov[k, k]), size=n_samples)
    _, cond = homodyne_condition(state, mode, quadrature, outcome=state.mean[k])
    return outcomes, cond


def conditional_means(state: GaussianState, mode, quadrature: str, outcomes: np.ndarray) -> np.ndarray:
    """Conditional mean vectors (rows) for an array of homodyne outcomes."""
    k = state.quad_index(mode, quadrature)
    m = state.index(mode)
    keep = np.array([i for i in range(2 * state.n_modes) if i // 2 != m], dtype=int)
    gain = state.cov[keep, k] / state.cov[k, k]
    return state.mean[keep][None, :] + np.outer(np.asarray(outcomes) - state.mean[k], gain)


def feedback_displace(state: GaussianState, record: MeasurementRecord, target_mode, target_quadrature: str) -> GaussianState:
    """Displace one quadrature of a conditioned state by ``gain * outcome``."""
    if record.mode in state.mode_labels:
        raise ValueError(f"mode {record.mode!r} has not been measured (still present in the state)")
    mean = np.array(state.mean)
    mean[state.quad_index(target_mode, target_quadrature)] += record.gain * record.outcome
    return state.with_mean(mean)


def ensemble_feedback(
    state: GaussianState,
    measured: Sequence,
    target_mode,
    target_quadrature: str,
    gain: float,
) -> GaussianState:
    """Ensemble-averaged effect of measuring and feeding back a quadrature.

    ``measured`` is either ``(mode, quadrature)`` or a list of
    ``(mode, quadrature, weight)`` triples describing a commuting linear
    combination that is read out. The target becomes
    ``target + gain * measured`` and the measured modes are left in place so
    that several feedback loops can share them; discard them afterwards.
    """
    if len(measured) == 2 and isinstance(measured[1], str):
        measured = [(measured[0], measured[1], 1.0)]
    dim = 2 * state.n_modes
    M = np.eye(dim)
    t = state.quad_index(target_mode, target_quadrature)
    for mode, quad, weight in measured:
        if mode == target_mode:
            raise ValueError("feedback target must differ from the measured mode")
        M[t, state.quad_index(mode, quad)] += gain * weight
    return linear_map(state, M)


def gaussian_fidelity(a: GaussianState, b: GaussianState, mode=None, mode_b=None) -> float:
    """Fidelity between two single-mode Gaussian states with diagonal covariance.

    ``F = [(Vx_a + Vx_b)(Vp_a + Vp_b)]^(-1/2) exp(-dX^2 / 2(Vx_a + Vx_b) - dP^2 / 2(Vp_a + Vp_b))``.
    The expression is exact when at least one of the states is pure.
    """
    ma = a.mode_labels[0] if mode is None else mode
    mb = (b.mode_labels[0] if mode is None else mode) if mode_b is None else mode_b
    sx = a.variance(ma, "X") + b.variance(mb, "X")
    sp = a.variance(ma, "P") + b.variance(mb, "P")
    dx = a.expectation(ma, "X") - b.expectation(mb, "X")
    dp = a.expectation(ma, "P") - b.expectation(mb, "P")
    return float(math.exp(-dx * dx / (2 * sx) - dp * dp / (2 * sp)) / math.sqrt(sx * sp))


def epr_variance(state: GaussianState, mode1, mode2, x_sign: float = -1.0, p_sign: float = 1.0) -> float:
    """``Var(X1 + x_sign X2) + Var(P1 + p_sign P2)``.

    The default signs give ``Var(X1 - X2) + Var(P1 + P2)``, which equals 2 for
    two vacua; values below 2 certify entanglement of symmetric Gaussian states.
    """
    vx = state.combination_variance({(mode1, "X"): 1.0, (mode2, "X"): x_sign})
    vp = state.combination_variance({(mode1, "P"): 1.0, (mode2, "P"): p_sign})
    return vx + vp


def _xlog2x(v: float) -> float:
    return 0.0 if v <= 0 else v * math.log2(v)


def eof_from_epr(delta_epr: float) -> float:
    """Entanglement of formation (ebits) of a symmetric two-mode Gaussian state.

    Valid only for states symmetric under exchange of the two modes; for
    those the EPR variance fixes the two-mode squeezing ``r`` through
    ``delta_epr = 2 exp(-2 r)``. Values at or above 2 are separable.
    """
    if not delta_epr > 0:
        raise ValueError(f"EPR variance must be positive, got {delta_epr}")
    if delta_epr >= 2.0:
        return 0.0
    r = -0.5 * math.log(delta_epr / 2.0)
    c2 = math.cosh(r) ** 2
    s2 = math.sinh(r) ** 2
    return max(0.0, _xlog2x(c2) - _xlog2x(s2))


def binary_entropy(p: float) -> float:
    return -_xlog2x(p) - _xlog2x(1.0 - p)


def eof_from_concurrence(concurrence: float) -> float:
    """Two-qubit entanglement of formation from the concurrence."""
    if not 0.0 <= concurrence <= 1.0:
        raise ValueError(f"concurrence must lie in [0, 1], got {concurrence}")
    return binary_entropy(0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - concurrence**2))))
