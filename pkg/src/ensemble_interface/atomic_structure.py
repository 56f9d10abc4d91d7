"""Scalar, vector and tensor polarizability coefficients of an alkali hyperfine level.

Wigner 6j symbols are evaluated with the Racah sum in exact rational
arithmetic. The coefficients ``a_k(Delta)`` are a resonance-weighted sum over
the excited hyperfine manifold; far from all resonances they reduce to a
single product of two 6j symbols.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np


def _twice(j) -> int:
    """Return ``2j`` as an int, rejecting anything that is not a half-integer."""
    if isinstance(j, Fraction):
        v = 2 * j
        if v.denominator != 1:
            raise ValueError(f"{j} is not a half-integer")
        return int(v)
    v = 2 * float(j)
    n = round(v)
    if abs(v - n) > 1e-9:
        raise ValueError(f"{j} is not a half-integer")
    return int(n)


@lru_cache(maxsize=None)
def _factorial(n: int) -> int:
    return math.factorial(n)


def _triangle_ok(a2: int, b2: int, c2: int) -> bool:
    return (a2 + b2 + c2) % 2 == 0 and abs(a2 - b2) <= c2 <= a2 + b2


def _delta_sq(a2: int, b2: int, c2: int) -> Fraction:
    f = _factorial
    return Fraction(
        f((a2 + b2 - c2) // 2) * f((a2 - b2 + c2) // 2) * f((-a2 + b2 + c2) // 2),
        f((a2 + b2 + c2) // 2 + 1),
    )


@lru_cache(maxsize=65536)
def _six_j_exact(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> tuple[Fraction, Fraction]:
    """Return ``(S, P)`` with ``{6j} = S * sqrt(P)``, arguments given as doubled spins."""
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle_ok(*t) for t in triads):
        return Fraction(0), Fraction(1)
    P = Fraction(1)
    for t in triads:
        P *= _delta_sq(*t)
    sums = [sum(t) // 2 for t in triads]
    tops = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    f = _factorial
    S = Fraction(0)
    for t in range(max(sums), min(tops) + 1):
        den = 1
        for s in sums:
            den *= f(t - s)
        for u in tops:
            den *= f(u - t)
        S += Fraction((-1) ** t * f(t + 1), den)
    return S, P


def wigner_6j_exact(j1, j2, j3, j4, j5, j6) -> tuple[Fraction, Fraction]:
    """Exact representation ``(S, P)`` of the 6j symbol, ``value = S * sqrt(P)``."""
    args = tuple(_twice(j) for j in (j1, j2, j3, j4, j5, j6))
    if any(a < 0 for a in args):
        raise ValueError("6j arguments must be non-negative")
    return _six_j_exact(*args)


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}``; zero when a triad violates the triangle rule."""
    S, P = wigner_6j_exact(j1, j2, j3, j4, j5, j6)
    if S == 0:
        return 0.0
    return math.copysign(math.sqrt(S * S * P), S)


# --- polarizability ---------------------------------------------------------------------

@dataclass(frozen=True)
class LevelSpec:
    """Ground level ``F`` with nuclear spin ``I`` on a ``J -> J'`` line.

    ``delta_Fprime`` maps each excited ``F'`` to ``Delta_{F+1} - Delta_{F'}``
    (angular frequency); the entry for ``F' = F + 1`` is zero by definition and
    may be omitted.
    """

    F: float
    I: float
    J: float = 0.5
    Jp: float = 1.5
    delta_Fprime: Mapping[float, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("F", "I", "J", "Jp"):
            v = getattr(self, name)
            if _twice(v) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not _triangle_ok(_twice(self.J), _twice(self.I), _twice(self.F)):
            raise ValueError(f"F={self.F} is not reachable from J={self.J}, I={self.I}")
        for fp in self.delta_Fprime:
            if abs(_twice(fp) - _twice(self.F)) > 2:
                raise ValueError(f"F'={fp} violates |F-1| <= F' <= F+1")

    def excited_levels(self) -> list[Fraction]:
        """Excited ``F'`` reachable by a dipole transition and allowed by ``J', I``."""
        F2, I2, Jp2 = _twice(self.F), _twice(self.I), _twice(self.Jp)
        out = []
        for fp2 in range(F2 - 2, F2 + 3, 2):
            if fp2 >= 0 and _triangle_ok(Jp2, I2, fp2) and _triangle_ok(F2, 2, fp2):
                out.append(Fraction(fp2, 2))
        return out

    def offset(self, fp) -> float:
        top = Fraction(_twice(self.F) + 2, 2)
        for key, val in self.delta_Fprime.items():
            if _twice(key) == _twice(fp):
                return float(val)
        if _twice(fp) == _twice(top):
            return 0.0
        raise KeyError(f"no hyperfine offset given for F'={fp}")


@dataclass(frozen=True)
class TensorCoeffs:
    a0: float
    a1: float
    a2: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a0, self.a1, self.a2)


def c_prefactor(k: int, F, I) -> float:
    F = float(F)
    if k == 0:
        return 1.0
    if k == 1:
        return math.sqrt(2.0 / (F * (F + 1)))
    if k == 2:
        if _twice(I) == 0:
            return 0.0
        return -3.0 / math.sqrt(10 * F * (F + 1) * (2 * F - 1) * (2 * F + 3))
    raise ValueError("rank must be 0, 1 or 2")


def _parity(twice_exponent: int) -> int:
    if twice_exponent % 2:
        raise ValueError("phase exponent is not an integer")
    return -1 if (twice_exponent // 2) % 2 else 1


class ResonanceError(ValueError):
    def __init__(self, fprime):
        super().__init__(f"detuning sits on the resonance of F'={fprime}")
        self.fprime = fprime


def hyperfine_terms(spec: LevelSpec, k: int) -> list[tuple[Fraction, float]]:
    """``(F', (-)^{F'+F+1} (2F'+1) {J' F' I; F J 1}^2 {F k F; 1 F' 1})`` for each F'."""
    F, I, J, Jp = spec.F, spec.I, spec.J, spec.Jp
    out = []
    for fp in spec.excited_levels():
        term = (2 * float(fp) + 1) * wigner_6j(Jp, fp, I, F, J, 1) ** 2 * wigner_6j(F, k, F, 1, fp, 1)
        out.append((fp, _parity(_twice(fp) + _twice(F) + 2) * term))
    return out


def polarizability_coeffs(spec: LevelSpec, delta: float) -> TensorCoeffs:
    """``a_0, a_1, a_2`` at detuning ``delta`` from the uppermost excited level."""
    levels = spec.excited_levels()
    offsets = {fp: spec.offset(fp) for fp in levels}
    for fp, off in offsets.items():
        if delta == off or not math.isfinite(delta):
            raise ResonanceError(fp)
    F = float(spec.F)
    vals = []
    for k in range(3):
        ck = c_prefactor(k, spec.F, spec.I)
        if ck == 0.0:
            vals.append(0.0)
            continue
        s = sum(term / (1.0 - offsets[fp] / delta) for fp, term in hyperfine_terms(spec, k))
        vals.append(ck * (2 * k + 1) * math.sqrt((2 * F + 1) / 3) * s)
    return TensorCoeffs(*vals)


def contracted_sum(spec: LevelSpec, k: int) -> float:
    """Closed form of the unweighted sum of :func:`hyperfine_terms` (one 6j product)."""
    F, I, J, Jp = spec.F, spec.I, spec.J, spec.Jp
    # phase (-)^{2J+F+J'+I+k+1}; integer for every allowed (J, I, F, J')
    twice_exp = 2 * _twice(J) + _twice(F) + _twice(Jp) + _twice(I) + 2 * k + 2
    return _parity(twice_exp) * wigner_6j(J, I, F, F, k, J) * wigner_6j(J, J, k, 1, 1, Jp)


def asymptotic_coeffs(spec: LevelSpec) -> TensorCoeffs:
    """Far-detuned limit of :func:`polarizability_coeffs` from the contracted 6j identity."""
    F = float(spec.F)
    return TensorCoeffs(
        *(
            c_prefactor(k, spec.F, spec.I) * (2 * k + 1) * math.sqrt((2 * F + 1) / 3) * contracted_sum(spec, k)
            for k in range(3)
        )
    )


def detuning_sweep(spec: LevelSpec, deltas: Sequence[float]) -> np.ndarray:
    """Rows ``(delta, a0, a1, a2)``."""
    return np.array([(d, *polarizability_coeffs(spec, d).as_tuple()) for d in deltas])


def export_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "a0", "a1", "a2"])
        for r in rows:
            w.writerow([f"{float(x):.9g}" for x in r])


TWO_PI_MHZ = 2 * math.pi * 1e6

CESIUM_D2_F4 = LevelSpec(
    F=4,
    I=3.5,
    J=0.5,
    Jp=1.5,
    # 6P3/2 hyperfine intervals: F'=5-4 251.0 MHz, F'=4-3 201.3 MHz
    delta_Fprime={5: 0.0, 4: 251.0e0 * TWO_PI_MHZ, 3: (251.0 + 201.3) * TWO_PI_MHZ},
)
