from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from mpmath import mp

from hard_edge.errors import (
    ConfluentExponentError,
    ConvergenceError,
    CutEvaluationError,
    OutOfDomainError,
)
from hard_edge.meijer import (
    FrobeniusBasis,
    asymptotic_residual,
    frobenius_basis,
    gamma_sensitivity,
    jump_matrix_psi,
    l_alpha_jump_permutation,
    m_matrix,
    meijer_g,
    meijer_g_asymptotic,
    meijer_g_mellin_barnes,
    ode_residual,
    psi0_hypergeometric,
    psi_j,
    psi_kernel,
    psi_kernel_at,
    psi_matrix,
    ray_jump_residual,
    verify_psi,
    winding_number,
)
from hard_edge.precision import PrecisionContext

CTX = PrecisionContext(bits=256, target_tol=1e-30)
DIGITS50 = PrecisionContext(bits=170, target_tol=1e-25)


@pytest.fixture(scope="module")
def basis_r1():
    return frobenius_basis(0.3, 1, CTX)


@pytest.fixture(scope="module")
def basis_r2():
    return frobenius_basis(0.31, 2, CTX)


def test_winding_numbers():
    assert [winding_number(j, 2) for j in (1, 2, 3)] == [1, -1, 0]
    assert [winding_number(j, 3) for j in (1, 2, 3, 4)] == [
        Fraction(3, 2), Fraction(-3, 2), Fraction(1, 2), Fraction(-1, 2)]


def test_exponents_and_guard():
    basis = frobenius_basis("0.5", 1, CTX)
    with CTX.workprec():
        assert basis.exponents() == [0, mp.mpf("-0.5")]
    for alpha, r in ((0, 1), (0.5, 2), (1, 3), (-0.5, 2)):
        with pytest.raises(ConfluentExponentError):
            frobenius_basis(alpha, r, CTX)
    with pytest.raises(OutOfDomainError):
        frobenius_basis(-1.5, 2, CTX)


def test_eta_at_alpha_zero():
    basis = FrobeniusBasis(alpha=mp.mpf(0), r=1, bits=256, guard_bits=16)
    with CTX.workprec():
        assert basis.eta == mp.mpf(-1) / 4


@pytest.mark.parametrize("z", ["0.5", "3", "12"])
def test_bessel_k_reduction(basis_r1, z):
    value = meijer_g(mp.mpf(z), basis_r1)
    with CTX.workprec():
        z = mp.mpf(z)
        alpha = basis_r1.alpha
        expected = 2 * mp.power(z, -alpha / 2) * mp.besselk(alpha, 2 * mp.sqrt(z))
        assert abs(value - expected) < 1e-30 * abs(expected)


@pytest.mark.parametrize("r,alpha,z", [
    (1, 0.3, mp.mpf(1)),
    (2, 0.31, mp.mpf(1)),
    (2, 1.3, mp.mpf(10)),
    (3, 0.31, mp.mpc("0.4", "0.7")),
])
def test_series_matches_mellin_barnes(r, alpha, z):
    basis = frobenius_basis(alpha, r, DIGITS50)
    series = meijer_g(z, basis)
    oracle = meijer_g_mellin_barnes(z, basis, DIGITS50)
    with DIGITS50.workprec():
        assert abs(series - oracle) < 1e-20 * max(abs(oracle), 1)


def test_mellin_barnes_real_on_positive_axis():
    basis = frobenius_basis(0.31, 2, DIGITS50)
    value = meijer_g_mellin_barnes(2, basis, DIGITS50)
    assert abs(mp.im(value)) < 1e-20 * abs(value)


@pytest.mark.slow
def test_series_matches_mellin_barnes_random_draws():
    rng = np.random.default_rng(7)
    for _ in range(50):
        r = int(rng.integers(1, 4))
        alpha = float(rng.uniform(-0.9, 2.0))
        if abs(r * alpha - round(r * alpha)) < 1e-3:
            alpha += 0.01
        modulus = float(np.exp(rng.uniform(np.log(0.1), np.log(10))))
        angle = float(rng.uniform(-np.pi / 2, np.pi / 2))
        basis = frobenius_basis(alpha, r, DIGITS50)
        with DIGITS50.workprec():
            z = mp.mpf(modulus) * mp.expj(angle)
        series = meijer_g(z, basis)
        oracle = meijer_g_mellin_barnes(z, basis, DIGITS50)
        with DIGITS50.workprec():
            assert abs(series - oracle) < 1e-20 * max(abs(oracle), 1), (r, alpha, z)


@pytest.mark.parametrize("r,alpha", [(1, 0.3), (2, 0.31)])
def test_luke_leading_term(r, alpha):
    basis = frobenius_basis(alpha, r, CTX)
    z = mp.mpf(10) ** 4
    ratio = meijer_g(z, basis) / meijer_g_asymptotic(z, basis)
    assert abs(ratio - 1) < 5e-2


def test_ode_residuals(basis_r2):
    z = mp.mpf("0.7")
    assert ode_residual(z, basis_r2) < 1e-40
    for j in range(0, 4):
        assert ode_residual(z, basis_r2, j=j) < 1e-40
    assert ode_residual(mp.mpc("-1.5", "0.4"), basis_r2, j=1) < 1e-40


def test_psi0_forms_agree(basis_r2):
    for z in (mp.mpf("0.8"), mp.mpc("-2", "0.5"), mp.mpc("1", "-3")):
        direct = psi_j(z, 0, basis_r2, orders=2)
        entire = psi0_hypergeometric(z, basis_r2, orders=2)
        with CTX.workprec():
            for a, b in zip(direct, entire):
                assert abs(a - b) < 1e-35 * max(abs(b), 1)


@pytest.mark.parametrize("r,alpha", [(1, 0.3), (2, 0.31), (3, 1.3)])
def test_psi0_at_origin(r, alpha):
    basis = frobenius_basis(alpha, r, CTX)
    value = psi0_hypergeometric(0, basis)[0]
    with CTX.workprec():
        expected = (-1) ** r * mp.power(2 * mp.pi * mp.j, r) * mp.fprod(
            mp.rgamma(1 + basis.alpha + mp.mpf(j) / r) for j in range(r))
        assert abs(value - expected) < 1e-50


def test_psi0_continuous_across_negative_axis(basis_r2):
    above = psi_j(-2, 0, basis_r2, side=1)
    below = psi_j(-2, 0, basis_r2, side=-1)
    with CTX.workprec():
        assert max(abs(a - b) for a, b in zip(above, below)) < 1e-40


def test_quadrant_four_arrangement_r1(basis_r1):
    z = mp.mpc("0.7", "-0.4")
    psi = psi_matrix(z, basis_r1).value
    p1 = psi_j(z, 1, basis_r1)
    p2 = psi_j(z, 2, basis_r1)
    with CTX.workprec():
        expected = mp.matrix([[p2[0], -p1[0]], [p2[1], -p1[1]]])
        assert mp.mnorm(psi - expected, 1) < 1e-50


def test_axis_needs_quadrant(basis_r2):
    with pytest.raises(CutEvaluationError):
        psi_matrix(mp.mpf(1), basis_r2)
    with pytest.raises(OutOfDomainError):
        psi_matrix(mp.mpc("1", "1"), basis_r2, quadrant=3)
    with pytest.raises(CutEvaluationError):
        meijer_g(-1, basis_r2)


def test_determinant_law_same_quadrant(basis_r2):
    with CTX.workprec():
        z1, z2 = mp.mpc("0.3", "0.2"), mp.mpc("4", "5")
        d1 = mp.det(psi_matrix(z1, basis_r2).value)
        d2 = mp.det(psi_matrix(z2, basis_r2).value)
        r, beta = basis_r2.r, basis_r2.beta
        assert abs(d1 / d2 - mp.power(z1 / z2, -r * beta)) < 1e-40


@pytest.mark.parametrize("ray", ["positive", "upper", "negative", "lower"])
def test_ray_jumps_r2(basis_r2, ray):
    assert ray_jump_residual(ray, 1, basis_r2) < 1e-25


def test_negative_axis_jump_carries_beta_phase(basis_r2):
    J = jump_matrix_psi("negative", basis_r2)
    with CTX.workprec():
        phase = mp.expjpi(2 * basis_r2.beta)
        assert J[0, 0] == 1
        assert abs(J[1, 2] - phase) < 1e-60 and abs(J[2, 1] + phase) < 1e-60


def test_ray_residual_tracks_offset(basis_r2):
    coarse = ray_jump_residual("negative", 1, basis_r2, offset=mp.mpf("1e-8"))
    fine = ray_jump_residual("negative", 1, basis_r2, offset=mp.mpf("1e-12"))
    assert fine < coarse * 1e-3


def test_permutation_matches_negative_jump_support():
    for r in (1, 2, 3, 4):
        basis = FrobeniusBasis(alpha=mp.mpf("0.37"), r=r, bits=256, guard_bits=16)
        P = l_alpha_jump_permutation(r)
        J = jump_matrix_psi("negative", basis)
        for a in range(r + 1):
            for b in range(r + 1):
                assert (P[a, b] != 0) == (J[a, b] != 0)


def test_m_plus_invertible(basis_r2):
    with CTX.workprec():
        assert abs(mp.det(m_matrix(basis_r2, 1))) > 1e-10


def test_gamma_perturbation_breaks_jumps(basis_r2):
    for j in (1, 2, 3):
        assert gamma_sensitivity(basis_r2, j) > 1e6


@pytest.mark.parametrize("r,alpha", [(1, 0.3), (2, 0.31)])
def test_verify_psi(r, alpha):
    report = verify_psi(frobenius_basis(alpha, r, CTX))
    assert report["passed"], report
    assert report["det_spread"] < 1e-25


def test_asymptotic_residual_small_r1(basis_r1):
    assert asymptotic_residual(mp.mpf(10) ** 4 * mp.expjpi(mp.mpf(1) / 3), basis_r1) < 1e-2


@pytest.mark.slow
def test_verify_psi_r3():
    assert verify_psi(frobenius_basis(1.3, 3, CTX))["passed"]


def test_psi_kernel_determinant_symmetry(basis_r2):
    x, y = mp.mpf(1), mp.mpf(2)
    kxx, kyy = psi_kernel(x, x, basis_r2), psi_kernel(y, y, basis_r2)
    kxy, kyx = psi_kernel(x, y, basis_r2), psi_kernel(y, x, basis_r2)
    det_xy = kxx * kyy - kxy * kyx
    det_yx = kyy * kxx - kyx * kxy
    assert kxx > 0 and kyy > 0
    assert det_xy > 0
    assert abs(det_xy - det_yx) < 1e-40


def test_psi_kernel_diagonal_is_limit(basis_r2):
    with CTX.workprec():
        x = mp.mpf("1.5")
        y = x + mp.mpf("1e-20")
    diagonal = psi_kernel(x, x, basis_r2)
    near = psi_kernel(x, y, basis_r2)
    assert y != x
    assert abs(diagonal - near) < 1e-15 * abs(diagonal)


def test_psi_kernel_rejects_complex_contraction(basis_r2):
    # psi_1 + psi_2 stops being the real entire solution once gamma_1 is off
    broken = replace(basis_r2, gamma_scale=(mp.mpf("1.001"), 1, 1))
    with pytest.raises(ConvergenceError):
        psi_kernel(1, 2, broken)


def test_psi_kernel_rejects_nonpositive(basis_r2):
    with pytest.raises(OutOfDomainError):
        psi_kernel(0, 1, basis_r2)


def test_psi_kernel_confluent_alpha_is_smooth():
    value = psi_kernel_at(1, 2, 0.5, 2, CTX)
    near = psi_kernel_at(1, 2, 0.5 + 1e-5, 2, CTX)
    assert abs(value - near) < 1e-3 * abs(value)
