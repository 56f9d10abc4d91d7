import csv
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensemble_interface import atomic_structure as ats
from ensemble_interface.acceptance import sixj_orthogonality_error


# --- independent oracle: 6j as a contraction of four 3j symbols ------------------------

def three_j(j1, j2, j3, m1, m2, m3):
    if abs(m1 + m2 + m3) > 1e-9 or any(abs(m) > j + 1e-9 for m, j in ((m1, j1), (m2, j2), (m3, j3))):
        return 0.0
    if not (abs(j1 - j2) <= j3 <= j1 + j2) or (j1 + j2 + j3) % 1:
        return 0.0
    f = lambda x: math.factorial(int(round(x)))
    tri = f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3) / f(j1 + j2 + j3 + 1)
    pref = math.sqrt(tri * f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j3 + m3) * f(j3 - m3))
    s = 0.0
    for k in range(0, int(round(j1 + j2 + j3)) + 1):
        args = (k, j3 - j2 + k + m1, j3 - j1 + k - m2, j1 + j2 - j3 - k, j1 - k - m1, j2 - k + m2)
        if min(args) < -1e-9:
            continue
        s += (-1) ** k / math.prod(f(a) for a in args)
    return (-1) ** int(round(j1 - j2 - m3)) * pref * s


def projections(j):
    return [-j + i for i in range(int(round(2 * j)) + 1)]


def six_j_oracle(j1, j2, j3, j4, j5, j6):
    total = 0.0
    for m1, m2, m4, m5 in itertools.product(projections(j1), projections(j2), projections(j4), projections(j5)):
        m3 = -m1 - m2
        m6 = m5 - m1
        if abs(m3) > j3 + 1e-9 or abs(m6) > j6 + 1e-9:
            continue
        phase = (-1) ** int(round(j1 + j2 + j3 + j4 + j5 + j6 - m1 - m2 - m3 - m4 - m5 - m6))
        total += (
            phase
            * three_j(j1, j2, j3, -m1, -m2, -m3)
            * three_j(j1, j5, j6, m1, -m5, m6)
            * three_j(j4, j2, j6, m4, m2, -m6)
            * three_j(j4, j5, j3, -m4, m5, m3)
        )
    return total


def test_six_j_with_a_zero():
    # {a b c; 0 c b} = (-1)^(a+b+c) / sqrt((2b+1)(2c+1))
    for a, b, c in [(0.5, 0.5, 0), (1, 0.5, 0.5), (2, 1.5, 2.5), (1, 1, 1)]:
        ref = (-1) ** round(a + b + c) / math.sqrt((2 * b + 1) * (2 * c + 1))
        assert ats.wigner_6j(a, b, c, 0, c, b) == pytest.approx(ref, abs=1e-15)


def test_three_j_oracle_sanity():
    # (1/2 1/2 0; 1/2 -1/2 0) = 1/sqrt2
    assert three_j(0.5, 0.5, 0, 0.5, -0.5, 0) == pytest.approx(1 / math.sqrt(2))


def test_six_j_known_value():
    assert ats.wigner_6j(0.5, 0.5, 1, 0.5, 0.5, 1) == pytest.approx(1 / 6, abs=1e-15)
    assert six_j_oracle(0.5, 0.5, 1, 0.5, 0.5, 1) == pytest.approx(1 / 6, abs=1e-12)


def test_six_j_exact_representation():
    S, P = ats.wigner_6j_exact(0.5, 0.5, 1, 0.5, 0.5, 1)
    assert S * S * P == Fraction(1, 36)


spin = st.integers(0, 6).map(lambda t: t / 2)


six = st.tuples(spin, spin, spin, spin, spin, spin)


@given(six)
@settings(max_examples=150, deadline=None)
def test_six_j_matches_three_j_oracle(js):
    assert ats.wigner_6j(*js) == pytest.approx(six_j_oracle(*js), abs=1e-10)


@pytest.mark.parametrize(
    "js",
    [(3.5, 0.5, 4, 1.5, 4, 1), (4, 1, 4, 1, 5, 1), (4, 2, 4, 1, 3, 1), (2, 2, 2, 2, 2, 2), (1.5, 1.5, 1, 2.5, 2.5, 2)],
)
def test_six_j_against_oracle_at_physical_arguments(js):
    assert ats.wigner_6j(*js) == pytest.approx(six_j_oracle(*js), abs=1e-12)


def test_triangle_violation_gives_zero():
    assert ats.wigner_6j(1, 1, 3, 1, 1, 1) == 0.0
    assert ats.wigner_6j(0.5, 0.5, 0.5, 0.5, 0.5, 0.5) == 0.0


@pytest.mark.parametrize("bad", [(0.3, 1, 1, 1, 1, 1), (-1, 1, 1, 1, 1, 1)])
def test_six_j_rejects_bad_arguments(bad):
    with pytest.raises(ValueError):
        ats.wigner_6j(*bad)


def _symmetry_images(j):
    j1, j2, j3, j4, j5, j6 = j
    cols = [(j1, j4), (j2, j5), (j3, j6)]
    out = []
    for perm in itertools.permutations(range(3)):
        c = [cols[p] for p in perm]
        # all four row swaps that exchange upper and lower in an even number of columns
        for flip in ((0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)):
            cc = [(b, a) if f else (a, b) for (a, b), f in zip(c, flip)]
            out.append((cc[0][0], cc[1][0], cc[2][0], cc[0][1], cc[1][1], cc[2][1]))
    return out


@given(six)
@settings(max_examples=200, deadline=None)
def test_six_j_symmetries(js):
    images = _symmetry_images(js)
    assert len(images) == 24
    ref = ats.wigner_6j(*js)
    for im in images:
        assert ats.wigner_6j(*im) == ref


def test_orthogonality_on_random_triads():
    assert sixj_orthogonality_error(50, seed=3) < 1e-10


# --- polarizability --------------------------------------------------------------------

CS = ats.CESIUM_D2_F4
MAXOFF = max(abs(v) for v in CS.delta_Fprime.values())


@pytest.mark.parametrize("sign", [-1, 1])
def test_cesium_asymptotes(sign):
    c = ats.polarizability_coeffs(CS, sign * 1e6 * MAXOFF)
    assert c.a0 == pytest.approx(1 / 6, abs=1e-6)
    assert c.a1 == pytest.approx(1 / 24, abs=1e-6)
    assert abs(c.a2) < 1e-6


def test_cesium_contracted_limit_exact():
    a = ats.asymptotic_coeffs(CS)
    assert a.a0 == pytest.approx(1 / 6, abs=1e-14)
    assert a.a1 == pytest.approx(1 / 24, abs=1e-14)
    assert a.a2 == pytest.approx(0.0, abs=1e-14)


def test_zero_nuclear_spin_has_no_tensor_part():
    na = ats.LevelSpec(F=0.5, I=0.0, J=0.5, Jp=1.5)
    for d in (-7.0, -0.5, 0.3, 2.0, 1e6):
        assert ats.polarizability_coeffs(na, d).a2 == 0.0
    assert ats.c_prefactor(2, 0.5, 0.0) == 0.0


def _random_level(rng):
    while True:
        I = rng.integers(1, 9) / 2  # I >= 1/2
        J = 0.5
        Jp = float(rng.choice([0.5, 1.5]))
        F = float(rng.choice([I - 0.5, I + 0.5]))
        if F < 0.5:
            continue
        spec = ats.LevelSpec(F=F, I=I, J=J, Jp=Jp)
        levels = spec.excited_levels()
        offs = {fp: (0.0 if fp == F + 1 else float(rng.uniform(1.0, 5.0))) for fp in levels}
        return ats.LevelSpec(F=F, I=I, J=J, Jp=Jp, delta_Fprime=offs)


@pytest.mark.parametrize("seed", range(10))
def test_asymptotic_identity(seed):
    spec = _random_level(np.random.default_rng(seed))
    far = ats.polarizability_coeffs(spec, 1e8 * max(abs(v) for v in spec.delta_Fprime.values()))
    lim = ats.asymptotic_coeffs(spec)
    F = float(spec.F)
    for k, (a, b) in enumerate(zip(far.as_tuple(), lim.as_tuple())):
        # relative to the size of the individual F' contributions, which can cancel
        scale = abs(ats.c_prefactor(k, spec.F, spec.I)) * (2 * k + 1) * math.sqrt((2 * F + 1) / 3)
        scale *= sum(abs(t) for _, t in ats.hyperfine_terms(spec, k))
        assert abs(a - b) <= 1e-8 * scale + 1e-15


def test_contracted_sum_matches_bare_term_sum():
    rng = np.random.default_rng(11)
    for _ in range(40):
        spec = _random_level(rng)
        for k in range(3):
            bare = sum(t for _, t in ats.hyperfine_terms(spec, k))
            assert ats.contracted_sum(spec, k) == pytest.approx(bare, abs=1e-12)


@pytest.mark.parametrize("sign", [-1, 1])
def test_monotone_approach_to_asymptote(sign):
    lim = ats.asymptotic_coeffs(CS).as_tuple()
    ratios = np.geomspace(2.0, 1e5, 60)
    gaps = np.array([[abs(v - l) for v, l in zip(ats.polarizability_coeffs(CS, sign * r * MAXOFF).as_tuple(), lim)] for r in ratios])
    assert np.all(np.diff(gaps, axis=0) < 0)


def test_tensor_part_scales_as_inverse_detuning():
    prods = [ats.polarizability_coeffs(CS, r * MAXOFF).a2 * r for r in (1e2, 1e3, 1e4, 1e5)]
    assert max(prods) - min(prods) < 0.02 * abs(prods[-1])


def test_tensor_part_resonant_enhancement():
    for fp in (4, 3):
        off = CS.offset(fp)
        near = max(abs(ats.polarizability_coeffs(CS, off * (1 + s * 1e-3)).a2) for s in (-1, 1))
        mid = abs(ats.polarizability_coeffs(CS, 0.5 * CS.offset(4) if fp == 4 else 0.5 * (CS.offset(4) + CS.offset(3))).a2)
        assert near > 50 * mid
    blue = [abs(ats.polarizability_coeffs(CS, -r * MAXOFF).a2) for r in (1, 10, 100, 1000)]
    assert all(b2 < b1 for b1, b2 in zip(blue, blue[1:]))
    assert blue[-1] < 2e-6


def test_resonance_rejected_with_level():
    with pytest.raises(ats.ResonanceError) as info:
        ats.polarizability_coeffs(CS, CS.offset(4))
    assert info.value.fprime == 4
    assert "F'=4" in str(info.value)
    with pytest.raises(ats.ResonanceError):
        ats.polarizability_coeffs(CS, 0.0)


def test_level_spec_validation():
    with pytest.raises(ValueError, match="not reachable"):
        ats.LevelSpec(F=5, I=3.5)
    with pytest.raises(ValueError, match="F'"):
        ats.LevelSpec(F=4, I=3.5, delta_Fprime={2: 1.0})
    with pytest.raises(ValueError, match="half-integer"):
        ats.LevelSpec(F=4.2, I=3.5)
    with pytest.raises(KeyError):
        ats.LevelSpec(F=4, I=3.5).offset(3)


def test_excited_levels():
    assert CS.excited_levels() == [3, 4, 5]
    assert ats.LevelSpec(F=0.5, I=0.0, Jp=0.5).excited_levels() == [Fraction(1, 2)]


def test_sweep_and_csv(tmp_path):
    rows = ats.detuning_sweep(CS, [-1e10, 1e10, 5e10])
    assert rows.shape == (3, 4)
    path = tmp_path / "sweep.csv"
    ats.export_sweep_csv(path, rows)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["delta", "a0", "a1", "a2"]
    assert np.allclose(np.array(data[1:], float), rows, rtol=1e-8)
