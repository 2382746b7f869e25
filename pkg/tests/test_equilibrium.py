import math

import numpy as np
import pytest
from pydantic import ValidationError

from hard_edge.equilibrium import (
    PhiBundle,
    build_cn,
    conformal_check,
    d_function,
    edge_exponents,
    g_asymptotic_residual,
    g_function,
    hard_edge_constants,
    linear_field_cross_check,
    load_equilibrium,
    minimize_energy,
    mu_j_from_mu0,
    mu_j_mass,
    nu_density,
    save_equilibrium,
    vector_lagrange_constant,
)
from hard_edge.errors import CutEvaluationError, OutOfDomainError
from hard_edge.models import FieldSpec


@pytest.fixture(scope="module")
def laguerre_r1():
    return minimize_energy(FieldSpec.linear(), r=1)


@pytest.fixture(scope="module")
def laguerre_r2():
    return minimize_energy(FieldSpec.linear(), r=2)


def marchenko_pastur(s):
    return np.sqrt(4 - s) / (2 * np.pi * np.sqrt(s))


def test_field_spec_normalization():
    with pytest.raises(ValidationError):
        FieldSpec.polynomial([1.0, 1.0])
    with pytest.raises(ValidationError):
        FieldSpec(kind="exotic")
    v = FieldSpec.polynomial([0.0, 1.0, 0.05])
    assert v(2.0) == pytest.approx(2.2)
    assert v.check_admissible()


def test_cap_too_small_is_reported():
    with pytest.raises(OutOfDomainError):
        minimize_energy(FieldSpec.linear(cap=2.0), r=1, size=120)


def test_marchenko_pastur_density(laguerre_r1):
    eq = laguerre_r1
    assert eq.diagnostics["mass_error"] < 1e-4
    assert abs(eq.q - 4) < 0.08
    s = np.linspace(0.05, 3.95, 4000)
    l1 = np.mean(np.abs(eq.density(s) - marchenko_pastur(s))) * (s[-1] - s[0])
    assert l1 < 0.01


def test_variational_conditions_r1(laguerre_r1):
    assert laguerre_r1.diagnostics["el_residual"] < 1e-3
    assert laguerre_r1.diagnostics["strict_outside"]


def test_variational_residual_r2(laguerre_r2):
    assert laguerre_r2.diagnostics["el_residual"] < 1e-3
    assert abs(np.sum(laguerre_r2.masses) - 1) < 1e-10


def test_hard_edge_coefficient_r1(laguerre_r1):
    assert laguerre_r1.c0 == pytest.approx(1 / math.pi, rel=0.03)


@pytest.mark.parametrize("fixture", ["laguerre_r1", "laguerre_r2"])
def test_edge_exponents(fixture, request):
    eq = request.getfixturevalue(fixture)
    fit = edge_exponents(eq)
    assert fit["hard_exponent"] == pytest.approx(fit["hard_expected"], rel=0.05)
    assert 0.3 < fit["soft_exponent"] < 0.7


def test_g0_log_asymptotics(laguerre_r2):
    near = abs(g_asymptotic_residual(laguerre_r2, 0, 1e3 * np.exp(0.7j)))
    far = abs(g_asymptotic_residual(laguerre_r2, 0, 1e4 * np.exp(0.7j)))
    assert near < 1e-2
    assert far < near / 5


@pytest.mark.parametrize("j", [1, 2])
def test_gj_asymptotics_r2(laguerre_r2, j):
    for phase in (0.9j, -0.9j):
        near = abs(g_asymptotic_residual(laguerre_r2, j, 1e3 * np.exp(phase)))
        far = abs(g_asymptotic_residual(laguerre_r2, j, 1e4 * np.exp(phase)))
        assert far < near / 5


def test_g_functions_bounded_near_origin(laguerre_r2):
    for z in (1e-3j, -1e-3 + 1e-4j, 1e-3 * np.exp(-2j)):
        for j in range(3):
            assert abs(g_function(laguerre_r2, j, z)) < 20


def test_last_g_function_is_multiple_of_two_pi_i(laguerre_r2):
    z = 0.7 + 0.3j
    gr = g_function(laguerre_r2, 1, z) - d_function(laguerre_r2, 2, z)
    k = gr / (2j * np.pi)
    assert abs(k - round(k.real)) < 1e-9


def test_g_requires_side_on_cut(laguerre_r1):
    with pytest.raises(CutEvaluationError):
        g_function(laguerre_r1, 0, 1.0)
    assert np.isfinite(g_function(laguerre_r1, 0, 10.0))


def test_vector_lagrange_constant_matches_scalar(laguerre_r2):
    out = vector_lagrange_constant(laguerre_r2)
    assert out["ell"] == pytest.approx(laguerre_r2.ell, abs=2e-3)
    assert out["spread"] < 3e-3


def test_nu_density_closed_form_r2():
    t, a = 0.7, 1.3
    expected = math.sqrt(t * a) / (2 * math.pi * (t * t + t * a))
    assert nu_density(2, 1, a, -t) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(OutOfDomainError):
        nu_density(2, 1, a, t)
    with pytest.raises(OutOfDomainError):
        nu_density(2, 2, a, -t)


def test_mu1_mass_and_positivity_r2(laguerre_r2):
    assert mu_j_mass(laguerre_r2, 1) == pytest.approx(0.5, abs=1e-3)
    dens = mu_j_from_mu0(laguerre_r2, 1, -np.logspace(-4, 2, 60))
    assert np.all(dens > 0)


def test_mu1_hard_edge_rate_r2(laguerre_r2):
    s = np.array([1e-3, 1e-4, 1e-5]) * laguerre_r2.q
    scaled = mu_j_from_mu0(laguerre_r2, 1, -s) * s ** (2 / 3)
    assert scaled.max() / scaled.min() < 3


@pytest.mark.slow
def test_mu_j_masses_r3():
    eq = minimize_energy(FieldSpec.linear(), r=3, size=240)
    assert mu_j_mass(eq, 1) == pytest.approx(2 / 3, abs=2e-3)
    assert mu_j_mass(eq, 2) == pytest.approx(1 / 3, abs=2e-3)


def test_phi_sign_flip_on_support(laguerre_r2):
    bundle = PhiBundle(laguerre_r2)
    q = laguerre_r2.q
    for x in q * np.array([0.2, 0.4, 0.7]):
        up = bundle.phi(0, x, side=1)
        down = bundle.phi(0, x, side=-1)
        assert abs(up + down) < 2e-3
        assert up.imag == pytest.approx(math.pi * laguerre_r2.cumulative(x), abs=1e-8)
    for x in -q * np.array([0.2, 0.5]):
        up = bundle.phi(1, x, side=1)
        down = bundle.phi(1, x, side=-1)
        assert abs(up + down) < 1e-8


def test_fm_continuity(laguerre_r2):
    bundle = PhiBundle(laguerre_r2)
    q = laguerre_r2.q
    for m in (1, 2):
        for x in -q * np.array([0.2, 0.5]):
            up, down = bundle.f_m(m, x, side=1), bundle.f_m(m, x, side=-1)
            assert abs(up - down) <= 1e-6 * abs(up)
        for x in q * np.array([0.25, 0.5]):
            up, down = bundle.f_m(m, x, side=1), bundle.f_m(m, x, side=-1)
            assert abs(up - down) <= 5e-2 * abs(up)


def test_sum_and_d0_identities(laguerre_r2):
    bundle = PhiBundle(laguerre_r2)
    for z in (0.3 + 0.2j, 0.5 - 0.4j, -0.6 + 0.1j):
        for l in range(3):
            assert abs(bundle.sum_identity_residual(z, l)) < 1e-10
        assert abs(bundle.d0_identity_residual(z)) < 1e-10
        assert bundle.d0(z).shape == (3,)


@pytest.mark.slow
def test_d0_identity_constant_r3():
    bundle = PhiBundle(minimize_energy(FieldSpec.linear(), r=3, size=240))
    for z in (0.4 + 0.3j, 0.4 - 0.3j):
        assert abs(bundle.d0_identity_residual(z)) < 1e-8


def test_phi_out_of_domain(laguerre_r1):
    bundle = PhiBundle(laguerre_r1)
    with pytest.raises(OutOfDomainError):
        bundle.phi(0, 2 * laguerre_r1.q + 1j)


def test_hard_edge_constants_r1(laguerre_r1):
    out = hard_edge_constants(laguerre_r1)
    assert out["c"] == pytest.approx(1.0, rel=0.03)
    assert out["f1_at_0"] == pytest.approx(2.0, rel=0.05)
    assert out["relative_disagreement"] < 0.1
    assert out["c"] > 0


def test_hard_edge_constants_r2_scale(laguerre_r2):
    # V = x: c = 2^{-2/3}, and the Wright-form scale is back at 1
    out = hard_edge_constants(laguerre_r2)
    assert out["c"] == pytest.approx(2 ** (-2 / 3), rel=0.06)
    assert out["c_wright"] == pytest.approx(1.0, rel=0.06)
    assert out["c_wright"] == pytest.approx(out["c"] * 2 ** (2 / 3))


def test_conformal_map(laguerre_r2):
    report = conformal_check(PhiBundle(laguerre_r2))
    assert report["passed"]
    assert PhiBundle(laguerre_r2).f(0) == 0


def test_build_cn(laguerre_r2):
    n = 12
    m1 = laguerre_r2.moment(0.5)
    for printed in (False, True):
        cn = build_cn(laguerre_r2, n, printed=printed)
        assert cn.shape == (2, 2)
        assert cn[0, 0] == cn[1, 1] == 1 and cn[1, 0] == 0
        assert cn[0, 1] == pytest.approx(-n * m1)


def test_build_cn_second_coefficient():
    eq = minimize_energy(FieldSpec.linear(), r=3, size=160, sample_aux=False)
    n = 5
    m1, m2 = eq.moments
    cn = build_cn(eq, n)
    assert cn[0, 2] == pytest.approx(-n * m2 / 2 + n * n * m1 * m1 / 2)
    assert cn[1, 2] == pytest.approx(cn[0, 1])
    printed = build_cn(eq, n, printed=True)
    assert printed[0, 2] == pytest.approx(-n * m2 + n * n * m1 * m1 / 2)
    r1 = minimize_energy(FieldSpec.linear(), r=1, size=120, sample_aux=False)
    assert build_cn(r1, n).tolist() == [[1.0]]


def test_linear_field_cross_check_r1(laguerre_r1):
    out = linear_field_cross_check(laguerre_r1)
    assert out["scale_from_support"] == pytest.approx(1.0, rel=0.02)
    assert out["max_relative_mismatch"] < 0.05


def test_save_and_load(laguerre_r2, tmp_path):
    path = save_equilibrium(laguerre_r2, tmp_path / "eq.json")
    back = load_equilibrium(path)
    assert back.q == laguerre_r2.q
    assert np.array_equal(back.rho0, laguerre_r2.rho0)
    assert back.field.coefficients == laguerre_r2.field.coefficients
