import pytest
from mpmath import mp
from pydantic import ValidationError

from hard_edge.finite_ensemble import (
    bimoment,
    bimoment_matrix,
    biorthogonalize,
    correlation_det,
    fractional_moments,
    gauge_invariant_det2,
    kernel_finite,
    kernel_table,
    laguerre_kernel,
    ldu_factor,
    mop_conditions,
    mop_polynomial,
    reproducing_check,
    save_biorth_system,
    shifted_weight_moment,
    trace_check,
)
from hard_edge.models import FieldSpec, WeightSpec
from hard_edge.precision import PrecisionContext
from hard_edge.utils import read_report

CTX = PrecisionContext(bits=256, target_tol=1e-30)


def spec(alpha=0.5, n=4, r=2, field=None):
    return WeightSpec(alpha=alpha, n=n, r=r, field=field or FieldSpec.linear())


def test_weight_spec_validation():
    with pytest.raises(ValidationError):
        WeightSpec(alpha=-1.0)
    with pytest.raises(ValidationError):
        WeightSpec(n=0)
    assert spec(n=3).with_n(7).n == 7


def test_bimoment_gamma_values():
    value = bimoment(spec(alpha=0.5, n=1, r=2), 0, 0, CTX)
    with CTX.workprec():
        assert abs(value - mp.gamma(1.5)) < 1e-60
    assert abs(float(value) - 0.8862269255) < 1e-10
    assert abs(bimoment(spec(alpha=0.0, n=2, r=1), 1, 0, CTX) - mp.mpf(1) / 4) < 1e-60


def test_bimoment_scaling_in_n():
    base = bimoment(spec(alpha=0.31, n=1, r=3), 2, 1, CTX)
    scaled = bimoment(spec(alpha=0.31, n=5, r=3), 2, 1, CTX)
    with CTX.workprec():
        expected = base * mp.power(5, -(mp.mpf(0.31) + 2 + mp.mpf(1) / 3 + 1))
        assert abs(scaled - expected) / expected < 1e-60


def test_bimoment_gamma_matches_quadrature():
    s = spec(alpha=0.5, n=3, r=2)
    ctx = PrecisionContext(bits=128, target_tol=1e-25)
    for j, k in [(0, 0), (1, 3), (4, 1)]:
        closed = bimoment(s, j, k, ctx, method="gamma")
        quad = bimoment(s, j, k, ctx, method="quadrature")
        assert abs(closed - quad) / closed < 1e-25


def test_shared_rule_matches_single_quadrature():
    s = spec(alpha=0.5, n=3, r=2, field=FieldSpec.polynomial([0.0, 1.0, 0.05]))
    ctx = PrecisionContext(bits=128, target_tol=1e-25)
    moments = fractional_moments(s, 9, ctx)
    for t in (0, 3, 8):
        single = bimoment(s, t // 2, t % 2, ctx)
        assert abs(moments[t] - single) / single < 1e-22


def test_gamma_method_needs_linear_field():
    s = spec(field=FieldSpec.polynomial([0.0, 1.0, 0.05]))
    with pytest.raises(ValueError):
        bimoment(s, 0, 0, CTX, method="gamma")


def test_bimoment_matrix_layout():
    s = spec(alpha=0.5, n=3, r=2)
    G = bimoment_matrix(s, 3, CTX)
    assert abs(G[2, 1] - bimoment(s, 2, 1, CTX)) < 1e-60 * abs(G[2, 1])
    assert abs(G[1, 2] - bimoment(s, 1, 2, CTX)) < 1e-60 * abs(G[1, 2])


def test_ldu_reconstruction():
    G = bimoment_matrix(spec(n=6), 6, CTX)
    L, h, U = ldu_factor(G, CTX)
    with CTX.workprec():
        R = L * mp.diag(h) * U.T - G
        err = max(abs(R[i, j]) for i in range(6) for j in range(6))
        assert err < mp.ldexp(1, -128) * max(abs(G[i, j]) for i in range(6) for j in range(6))
        assert all(L[i, i] == 1 and U[i, i] == 1 for i in range(6))


def test_single_particle_system():
    s = spec(n=1)
    system = biorthogonalize(s, CTX)
    assert system.P[0, 0] == 1 and system.Q[0, 0] == 1
    assert abs(system.h[0] - bimoment(s, 0, 0, CTX)) < 1e-60


def test_two_particle_gram_schmidt():
    s = spec(alpha=0.3, n=2, r=1)
    system = biorthogonalize(s, CTX)
    G = bimoment_matrix(s, 2, CTX)
    with CTX.workprec():
        assert abs(system.P[1, 0] + G[1, 0] / G[0, 0]) < 1e-60
    assert system.P[1, 1] == 1


def test_biorthogonality_residual_shrinks_with_precision():
    s = spec(alpha=0.5, n=8, r=2)
    coarse = biorthogonalize(s, PrecisionContext(bits=128, target_tol=1e-8))
    fine = biorthogonalize(s, PrecisionContext(bits=256, target_tol=1e-8))
    assert fine.residual < coarse.residual
    assert fine.residual < 1e-40


@pytest.mark.parametrize("r,alpha", [(1, 0.31), (2, 0.5), (3, 1.3)])
def test_trace_identity(r, alpha):
    s = spec(alpha=alpha, n=5, r=r)
    system = biorthogonalize(s, CTX)
    report = trace_check(s, system)
    assert report["passed"], report["relative_error"]


def test_reproducing_property():
    s = spec(alpha=0.5, n=4, r=2)
    system = biorthogonalize(s, CTX)
    report = reproducing_check(s, system, mp.mpf("0.3"), mp.mpf("0.7"))
    assert report["passed"], report["relative_error"]


def test_laguerre_oracle_at_r1():
    s = spec(alpha=0.31, n=6, r=1)
    system = biorthogonalize(s, CTX)
    for x, y in [(0.1, 0.1), (0.2, 0.9), (1.3, 0.4)]:
        ours = kernel_finite(s, system, x, y)
        oracle = laguerre_kernel(6, 0.31, x, y, CTX)
        assert abs(ours - oracle) / abs(oracle) < 1e-40


def test_single_term_kernel():
    s = spec(alpha=0.5, n=1, r=2)
    system = biorthogonalize(s, CTX)
    with CTX.workprec():
        x = mp.mpf("0.8")
        expected = mp.power(x, 0.5) * mp.exp(-x) / bimoment(s, 0, 0, CTX)
        assert abs(kernel_finite(s, system, x, 2) - expected) < 1e-60


def test_mop_condition_count():
    for r in (1, 2, 3):
        for n in range(12):
            assert len(mop_conditions(n, r)) == n


def test_mop_degree_zero_and_one():
    assert mop_polynomial(spec(n=3), degree=0, ctx=CTX).coefficients == [1]
    s = spec(alpha=0.5, n=3, r=2)
    mop = mop_polynomial(s, degree=1, ctx=CTX)
    with CTX.workprec():
        assert abs(mop.coefficients[0] + mp.mpf(1.5) / 3) < 1e-60


@pytest.mark.parametrize("r", [2, 3])
@pytest.mark.parametrize("degree", range(3, 11))
def test_mop_matches_biorthogonal_family(r, degree):
    s = spec(alpha=0.5, n=degree, r=r)
    mop = mop_polynomial(s, ctx=CTX)
    system = biorthogonalize(s, CTX, size=degree + 1)
    scale = max(abs(c) for c in mop.coefficients)
    for i in range(degree + 1):
        assert abs(system.P[degree, i] - mop.coefficients[i]) <= 1e-20 * scale
    assert mop.residual < 1e-40


def test_shifted_weight_moment_is_a_bimoment():
    s = spec(alpha=0.5, n=3, r=3)
    with CTX.workprec():
        assert abs(shifted_weight_moment(s, 3, 1, CTX) - bimoment(s, 1, 2, CTX)) < 1e-60
    with pytest.raises(ValueError):
        shifted_weight_moment(s, 4, 0, CTX)


def test_correlation_determinants():
    s = spec(alpha=0.5, n=4, r=2)
    system = biorthogonalize(s, CTX)
    assert correlation_det(s, system, [0.5]) > 0
    assert abs(correlation_det(s, system, [0.5, 0.5])) < 1e-50
    assert correlation_det(s, system, [0.2, 0.9, 1.7]) > 0


def test_det2_gauge_invariance():
    s = spec(alpha=0.5, n=4, r=2)
    system = biorthogonalize(s, CTX)

    def kernel(x, y):
        return kernel_finite(s, system, x, y)

    def conjugated(x, y):
        return mp.power(mp.mpf(x) / y, 0.5) * kernel(x, y)

    with CTX.workprec():
        a = gauge_invariant_det2(kernel, mp.mpf("0.3"), mp.mpf("1.1"))
        b = gauge_invariant_det2(conjugated, mp.mpf("0.3"), mp.mpf("1.1"))
        assert abs(a - b) < 1e-50 * abs(a)


def test_kernel_table_and_persistence(tmp_path):
    s = spec(alpha=0.5, n=3, r=2)
    system = biorthogonalize(s, CTX)
    table = kernel_table(s, system, [(0.5, 0.5), (0.5, 1.0)], scale=27)
    assert list(table.columns) == ["n", "x", "y", "K", "rescaledK"]
    path = save_biorth_system(system, tmp_path / "biorth.json")
    data = read_report(path)
    assert data["size"] == 3
    assert data["header"]["command"] == "biorthogonalize"
    assert len(data["P"]) == 3
