import math

import numpy as np
import pytest

from sddelab.measures import SignedMeasure
from sddelab.spectrum import (
    NEG_INF,
    CharRoot,
    SpectrumError,
    build_root_data,
    char_derivative,
    char_value,
    classify,
    count_zeros,
    laurent_coeffs,
    real_gcd,
    roots_in_strip,
)

D0 = SignedMeasure.point_masses(1.0, (0.0, 1.0))
DM1 = SignedMeasure.point_masses(1.0, (-1.0, 1.0))
BAL = SignedMeasure.point_masses(1.0, (0.0, 1.0), (-1.0, -1.0))

# rightmost root of lambda = e^(-lambda), frozen from a Newton iteration on
# f(x) = x - e^(-x) (independent of the strip search)
OMEGA = 0.5671432904097838


def sin_measure(n=4097):
    grid = np.linspace(-2 * np.pi, 0.0, n)
    return SignedMeasure.sampled_density(2 * np.pi, np.sin(grid))


def test_omega_constant_oracle():
    x = 0.5
    for _ in range(50):
        x = x - (x - math.exp(-x)) / (1 + math.exp(-x))
    assert x == pytest.approx(OMEGA, abs=1e-15)


# ---------------------------------------------------------------------------
# char_value / char_derivative


def test_char_value_theta_zero_is_identity():
    assert char_value(0.0, D0, 2 + 3j) == 2 + 3j


def test_char_value_omega_root():
    assert abs(char_value(1.0, DM1, OMEGA)) < 1e-9


def test_char_value_hayes_root():
    assert abs(char_value(-np.pi / 2, DM1, 1j * np.pi / 2)) < 1e-12


def test_char_derivative_theta_zero():
    assert char_derivative(0.0, D0, 1.7 - 0.3j, 1) == 1.0


def test_char_derivative_hayes():
    got = char_derivative(-np.pi / 2, DM1, 1j * np.pi / 2, 1)
    assert got == pytest.approx(1 + 1j * np.pi / 2, abs=1e-13)


def test_char_second_derivative_dirac0():
    assert char_derivative(1.0, D0, 0.3 + 0.1j, 2) == 0.0


# ---------------------------------------------------------------------------
# roots_in_strip


def test_roots_theta_zero():
    roots = roots_in_strip(0.0, D0, -1.0)
    assert [(z.lam, z.multiplicity) for z in roots] == [(0.0 + 0.0j, 1)]
    assert roots_in_strip(0.0, D0, 0.5) == []


def test_roots_omega():
    roots = roots_in_strip(1.0, DM1, 0.0)
    assert len(roots) == 1
    assert roots[0].multiplicity == 1
    assert roots[0].lam == pytest.approx(OMEGA, abs=1e-10)


def test_roots_hayes_boundary():
    roots = roots_in_strip(-np.pi / 2, DM1, -0.1)
    lams = sorted((z.lam.imag for z in roots))
    assert len(roots) == 2
    assert lams == pytest.approx([-np.pi / 2, np.pi / 2], abs=1e-10)
    assert all(abs(z.lam.real) < 1e-10 for z in roots)


def test_roots_against_lambert_branches():
    # oracle: roots of lambda e^lambda = theta are the Lambert W branches
    from scipy.special import lambertw

    theta = 1.0
    roots = roots_in_strip(theta, DM1, -3.0)
    want = []
    k = 0
    while True:
        w = complex(lambertw(theta, k))
        if w.real < -3.0:
            break
        want.append(w)
        if k > 0:
            want.append(np.conj(w))
        k += 1
    got = sorted((z.lam for z in roots), key=lambda z: (z.real, z.imag))
    want = sorted(want, key=lambda z: (z.real, z.imag))
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert g == pytest.approx(w, abs=1e-9)


def test_zero_count_matches_returned_multiplicities():
    theta = -np.pi / 2
    roots = roots_in_strip(theta, DM1, -3.0)
    n, rect = count_zeros(theta, DM1, -3.0, 0.5, -40.0, 40.0)
    inside = [
        z
        for z in roots
        if rect[0] <= z.lam.real <= rect[1] and rect[2] <= z.lam.imag <= rect[3]
    ]
    assert n == sum(z.multiplicity for z in inside)


def test_conjugate_pairing_of_roots():
    roots = roots_in_strip(-2.0, DM1, -2.0)
    lams = {complex(round(z.lam.real, 9), round(z.lam.imag, 9)) for z in roots}
    for z in lams:
        assert z.conjugate() in lams


def test_double_root_multiplicity():
    # h(lam) = lam - theta e^(-lam) has a double root at -1 when theta = -1/e
    theta = -1.0 / math.e
    roots = roots_in_strip(theta, DM1, -1.5)
    assert len(roots) == 1
    assert roots[0].multiplicity == 2
    assert roots[0].lam == pytest.approx(-1.0, abs=1e-7)


# ---------------------------------------------------------------------------
# laurent_coeffs / build_root_data


def test_laurent_theta_zero():
    A = laurent_coeffs(0.0, D0, 0.0, 1, K=0)
    assert A[0] == pytest.approx(1.0, abs=1e-14)  # A_{-1}


def test_laurent_shifted_identity():
    # h = lam - 1 at the root 1: 1/(z-1) is its own Laurent series
    A = laurent_coeffs(1.0, D0, 1.0, 1, K=2)
    assert A[0] == pytest.approx(1.0, abs=1e-14)
    assert abs(A[1]) < 1e-14 and abs(A[2]) < 1e-14


def test_laurent_hayes_simple_root():
    A = laurent_coeffs(-np.pi / 2, DM1, 1j * np.pi / 2, 1, K=0)
    assert A[0] == pytest.approx(1.0 / (1 + 1j * np.pi / 2), abs=1e-12)


def test_laurent_simple_root_reciprocal_derivative():
    for theta, a, lam in [(1.0, DM1, OMEGA), (-0.5, D0, -0.5)]:
        A = laurent_coeffs(theta, a, lam, 1, K=0)
        hp = char_derivative(theta, a, lam, 1)
        assert A[0] == pytest.approx(1.0 / hp, rel=1e-10)


def test_laurent_rejects_non_root():
    with pytest.raises(SpectrumError):
        laurent_coeffs(1.0, DM1, 0.3 + 0.1j, 1)


def test_laurent_multiplicity_inconsistent():
    # h'(-1) vanishes at the double root, so claiming m = 1 there must fail
    theta = -1.0 / math.e
    with pytest.raises(SpectrumError):
        laurent_coeffs(theta, DM1, -1.0, 1)


def test_laurent_double_root():
    # 1/h near the double root -1 (theta = -1/e): leading coefficient is
    # A_{-2} = 1/(h''(-1)/2) = 2 e^... with h'' = theta M_2 sign handling;
    # cross-check against the direct Taylor quotient
    theta = -1.0 / math.e
    h2 = char_derivative(theta, DM1, -1.0, 2) / 2.0
    A = laurent_coeffs(theta, DM1, -1.0, 2, K=0)
    assert A[0] == pytest.approx(1.0 / h2, rel=1e-9)  # A_{-2}
    h3 = char_derivative(theta, DM1, -1.0, 3) / 6.0
    assert A[1] == pytest.approx(-h3 / h2**2, rel=1e-9)  # A_{-1}


def test_build_root_data_balanced_zero_root():
    root = build_root_data(0.0, BAL, CharRoot(0.0 + 0.0j, 1))
    assert root.m_tilde == NEG_INF
    assert root.P_poly == (0.0 + 0.0j,)


def test_build_root_data_dirac0_zero_root():
    root = build_root_data(0.0, D0, CharRoot(0.0 + 0.0j, 1))
    assert root.m_tilde == 0
    assert root.P_poly[0] == pytest.approx(1.0, abs=1e-14)


def test_build_root_data_sin_remark_cancellation():
    # P at the zero root vanishes because the density integrates to zero
    root = build_root_data(0.15, sin_measure(), CharRoot(0.0 + 0.0j, 1))
    assert root.m_tilde == NEG_INF


def test_root_data_conjugate_symmetry():
    bare = roots_in_strip(-np.pi / 2, DM1, -0.1)
    data = {round(z.lam.imag, 9): build_root_data(-np.pi / 2, DM1, z) for z in bare}
    up = data[round(np.pi / 2, 9)]
    dn = data[round(-np.pi / 2, 9)]
    assert dn.P_poly[0] == pytest.approx(np.conj(up.P_poly[0]), rel=1e-12)
    assert dn.p_poly[0] == pytest.approx(np.conj(up.p_poly[0]), rel=1e-12)


def test_hayes_contributing_coefficient():
    # c at +i pi/2 equals -i/(1 + i pi/2) (Laurent residue times e^{-lam})
    bare = roots_in_strip(-np.pi / 2, DM1, -0.1)
    up = next(z for z in bare if z.lam.imag > 0)
    data = build_root_data(-np.pi / 2, DM1, up)
    assert data.P_poly[0] == pytest.approx(-1j / (1 + 1j * np.pi / 2), abs=1e-12)


# ---------------------------------------------------------------------------
# classify


def test_classify_lan_ou():
    rep = classify(-0.5, D0)
    assert rep.regime == "LAN"
    assert rep.v_star == pytest.approx(-0.5, abs=1e-10)
    assert rep.scaling.describe() == "T^-1/2"
    assert rep.scaling.value(4.0) == pytest.approx(0.5)


def test_classify_laq_theta0():
    rep = classify(0.0, D0)
    assert rep.regime == "LAQ"
    assert rep.v_star == 0.0 and rep.m_star == 0
    assert rep.scaling.value(10.0) == pytest.approx(0.1)


def test_classify_lan_theta0_balanced():
    rep = classify(0.0, BAL)
    assert rep.regime == "LAN"
    assert rep.v_star == NEG_INF and rep.m_star == NEG_INF


def test_classify_hayes_laq():
    rep = classify(-np.pi / 2, DM1)
    assert rep.regime == "LAQ"
    assert abs(rep.v_star) <= 1e-8
    assert rep.m_star == 0
    assert rep.H == pytest.approx([np.pi / 2], abs=1e-9)
    assert len(rep.contributing_roots) == 2


def test_classify_lamn():
    rep = classify(0.5, D0)
    assert rep.regime == "LAMN"
    assert rep.v_star == pytest.approx(0.5, abs=1e-12)
    assert rep.H == []
    assert rep.scaling.value(2.0) == pytest.approx(math.exp(-1.0))


def test_classify_plamn():
    rep = classify(-2.0, DM1)
    assert rep.regime == "PLAMN"
    from scipy.special import lambertw

    w = complex(lambertw(-2.0, 0))
    assert rep.v_star == pytest.approx(w.real, abs=1e-9)
    assert rep.H == pytest.approx([w.imag], abs=1e-9)
    assert rep.D == pytest.approx(w.imag, abs=1e-9)
    assert rep.period == pytest.approx(2 * np.pi / w.imag, rel=1e-9)


def test_classify_sin_remark():
    rep = classify(0.15, sin_measure())
    assert rep.regime == "LAN"
    assert abs(rep.v0) <= 1e-8  # rightmost root at 0
    assert rep.v_star < -1e-3  # but the kernel polynomial there vanishes
    zero_root = min(rep.roots, key=lambda z: abs(z.lam))
    assert zero_root.m_tilde == NEG_INF


def test_v_star_below_v0_only_in_remark_case():
    for theta, a in [(-0.5, D0), (0.5, D0), (1.0, DM1), (-2.0, DM1), (-np.pi / 2, DM1)]:
        rep = classify(theta, a)
        assert rep.v_star <= rep.v0 + 1e-12
        assert rep.v_star == pytest.approx(rep.v0, abs=1e-9)
    rep = classify(0.15, sin_measure())
    assert rep.v_star < rep.v0 - 1e-3
    assert abs(rep.v0) <= 1e-8


def test_classify_regime_hint_override():
    rep = classify(-0.5, D0, regime_hint="LAQ")
    assert rep.regime == "LAQ"
    assert any("overridden" in w for w in rep.warnings)


# ---------------------------------------------------------------------------
# real_gcd


def test_real_gcd_singleton():
    assert real_gcd([np.pi / 2]) == pytest.approx(np.pi / 2)


def test_real_gcd_integers():
    assert real_gcd([2.0, 3.0]) == pytest.approx(1.0, abs=1e-9)


def test_real_gcd_incommensurable():
    assert real_gcd([1.0, math.sqrt(2.0)]) is None


def test_real_gcd_common_scale():
    d = real_gcd([np.pi / 2, 3 * np.pi / 2, np.pi])
    assert d == pytest.approx(np.pi / 2, rel=1e-9)


def test_real_gcd_validates_inputs():
    with pytest.raises(ValueError):
        real_gcd([])
    with pytest.raises(ValueError):
        real_gcd([1.0], tol=1e-3)


def test_found_roots_satisfy_residual_invariant():
    for theta, a in [(1.0, DM1), (-np.pi / 2, DM1), (-2.0, DM1), (0.15, sin_measure())]:
        for rt in roots_in_strip(theta, a, -1.0):
            assert abs(char_value(theta, a, rt.lam)) <= 1e-9 * (1.0 + abs(rt.lam))


def test_leading_laurent_coefficient_nonzero():
    theta = -1.0 / math.e
    root = build_root_data(theta, DM1, CharRoot(-1.0 + 0.0j, 2))
    assert abs(root.laurent[0]) > 1e-6  # A_{-m}
    assert root.m_tilde <= root.multiplicity - 1


def test_plamn_divisor_absolute_tolerance():
    rep = classify(-2.0, DM1)
    for h in rep.H:
        k = round(h / rep.D)
        assert abs(h - k * rep.D) <= 1e-8


def test_regime_report_json_encodes_minus_infinity_as_null():
    doc = classify(0.0, BAL).to_dict()
    assert doc["v_star"] is None and doc["m_star"] is None
    assert doc["regime"] == "LAN"


def test_classify_triple_root_critical_case():
    # a = 3 d_0 - 4 d_{-1/2} + d_{-1}, theta = 1: total mass, first and second
    # moments vanish jointly, giving a triple root at 0 whose kernel
    # polynomial has degree 1 (hand-computed c_1 = A_{-3} M_1 = 12,
    # c_0 = A_{-2} = -h_4/h_3^2 = 4.5)
    a3 = SignedMeasure.point_masses(1.0, (0.0, 3.0), (-0.5, -4.0), (-1.0, 1.0))
    rep = classify(1.0, a3)
    assert rep.regime == "LAQ"
    assert rep.m_star == 1
    root = rep.contributing_roots[0]
    assert root.multiplicity == 3
    assert root.P_poly[1] == pytest.approx(12.0, rel=1e-9)
    assert root.P_poly[0] == pytest.approx(4.5, rel=1e-9)
    assert rep.scaling.value(10.0) == pytest.approx(1e-2)


def test_roots_in_strip_cut_above_all_roots():
    assert roots_in_strip(-0.5, D0, 2.0) == []


def test_random_systems_root_search_properties():
    # randomized stress: residual, conjugate pairing, and count consistency
    rng = np.random.default_rng(424242)
    for trial in range(10):
        n_atoms = int(rng.integers(1, 4))
        atoms = []
        for _ in range(n_atoms):
            u = float(rng.uniform(-1.0, 0.0)) if rng.random() < 0.5 else float(
                rng.choice([-1.0, -0.5, 0.0])
            )
            atoms.append((u, float(rng.uniform(-2.0, 2.0)) or 0.7))
        pieces = []
        if rng.random() < 0.5:
            pieces.append((-1.0, 0.0, tuple(rng.uniform(-1.5, 1.5, int(rng.integers(1, 3))))))
        try:
            a = SignedMeasure(
                r=1.0,
                atoms=tuple(atoms),
                density_pieces=SignedMeasure.polynomial_density(1.0, pieces).density_pieces
                if pieces
                else (),
            )
        except Exception:
            continue
        theta = float(rng.uniform(-2.5, 2.5)) or 0.9
        c = float(rng.uniform(-2.0, -0.3))
        roots = roots_in_strip(theta, a, c)
        lams = {complex(round(z.lam.real, 9), round(z.lam.imag, 9)) for z in roots}
        for z in roots:
            assert abs(char_value(theta, a, z.lam)) <= 1e-9 * (1.0 + abs(z.lam))
            key = complex(round(z.lam.real, 9), round(z.lam.imag, 9))
            assert key.conjugate() in lams
        n, rect = count_zeros(theta, a, c, 3.0 + abs(theta) * 4, -30.0, 30.0)
        inside = sum(
            z.multiplicity
            for z in roots
            if rect[0] <= z.lam.real <= rect[1] and rect[2] <= z.lam.imag <= rect[3]
        )
        assert n == inside


def test_random_systems_classify_invariants():
    # v* <= v0 with equality except the vanishing-kernel-polynomial case,
    # and the regime tag always matches the sign of v*
    rng = np.random.default_rng(31415)
    checked = 0
    for _ in range(8):
        atoms = [
            (float(rng.choice([-1.0, -0.5, 0.0])), float(rng.uniform(-1.5, 1.5)))
        ]
        if rng.random() < 0.5:
            atoms.append((float(rng.uniform(-1.0, 0.0)), float(rng.uniform(-1.5, 1.5))))
        try:
            a = SignedMeasure(r=1.0, atoms=tuple(a for a in atoms if a[1] != 0.0))
        except Exception:
            continue
        theta = float(rng.uniform(-2.0, 2.0))
        if theta == 0.0:
            continue
        rep = classify(theta, a)
        checked += 1
        assert rep.v_star <= rep.v0 + 1e-9
        if rep.regime == "LAN":
            assert rep.v_star < 0 or rep.v_star == NEG_INF
        elif rep.regime == "LAQ":
            assert abs(rep.v_star) <= 1e-8
        elif rep.regime in ("LAMN", "PLAMN"):
            assert rep.v_star > 1e-8
            assert rep.contributing_roots
    assert checked >= 5
