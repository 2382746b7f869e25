import numpy as np
import pandas as pd
import pytest
from mpmath import mp

from hard_edge.errors import OutOfDomainError
from hard_edge.finite_ensemble import gauge_invariant_det2
from hard_edge.limit_kernel import (
    LimitKernelSpec,
    bessel_kernel,
    discrepancy_ledger,
    fit_convergence_rate,
    hard_edge_kernel,
    hard_edge_kernel_psi_scale,
    hard_edge_kernel_series,
    hard_edge_scale,
    kernel_comparison_table,
    ledger_frame,
    psi_scale,
    richardson_extrapolate,
    universality_report,
    wright_bessel,
)
from hard_edge.meijer import psi_kernel_at
from hard_edge.models import FieldSpec
from hard_edge.precision import PrecisionContext

CTX = PrecisionContext(bits=128, target_tol=1e-20)


def test_wright_at_zero():
    value = wright_bessel(mp.mpf("2.5"), mp.mpf("0.5"), 0, CTX)
    with CTX.workprec():
        assert abs(value - mp.rgamma(mp.mpf("2.5"))) < 1e-30


@pytest.mark.parametrize("x", ["0.3", "4", "25"])
def test_wright_reduces_to_bessel_j0(x):
    with CTX.workprec():
        t = mp.mpf(x)
        value = wright_bessel(1, 1, t, CTX)
        assert abs(value - mp.besselj(0, 2 * mp.sqrt(t))) < 1e-30


def test_wright_alternating_tail_bound():
    with CTX.workprec():
        x = mp.mpf("0.2")
        full = wright_bessel(2, 1, x, CTX)
        partial = mp.fsum((-x) ** k * mp.rgamma(2 + k) / mp.factorial(k) for k in range(4))
        first_omitted = x ** 4 * mp.rgamma(6) / mp.factorial(4)
        assert abs(full - partial) <= first_omitted


def test_wright_rejects_bad_parameters():
    with pytest.raises(OutOfDomainError):
        wright_bessel(0, 1, 1, CTX)


@pytest.mark.parametrize("x,y", [(1.0, 2.0), (0.5, 0.5), (3.0, 0.7)])
def test_r1_limit_is_bessel_kernel(x, y):
    spec = LimitKernelSpec(alpha=0.31, r=1)
    k = hard_edge_kernel(x, y, spec, CTX)
    expected = bessel_kernel(0.31, x, y, CTX)
    assert abs(k - expected) < 1e-15 * max(abs(expected), 1)


@pytest.mark.parametrize("r,alpha", [(2, 0.31), (3, 1.3), (2, -0.4)])
def test_quadrature_matches_termwise_series(r, alpha):
    spec = LimitKernelSpec(alpha=alpha, r=r)
    for x, y in ((1.0, 2.0), (0.4, 0.4)):
        quad = hard_edge_kernel(x, y, spec, CTX)
        series = hard_edge_kernel_series(x, y, spec, CTX)
        assert abs(quad - series) < 1e-14 * max(abs(series), 1)


def test_diagonal_positive():
    spec = LimitKernelSpec(alpha=0.5, r=2)
    for x in (0.1, 1.0, 4.0, 10.0):
        assert hard_edge_kernel_series(x, x, spec, CTX) > 0


def test_gauge_invariant_determinant_symmetric():
    spec = LimitKernelSpec(alpha=0.5, r=2)

    def k(a, b):
        return hard_edge_kernel_series(a, b, spec, CTX)

    d12 = gauge_invariant_det2(k, 1.0, 2.0)
    d21 = gauge_invariant_det2(k, 2.0, 1.0)
    assert d12 > 0
    assert abs(d12 - d21) < 1e-25


def test_tolerance_refinement_is_stable():
    coarse = hard_edge_kernel(1.0, 2.0, LimitKernelSpec(alpha=0.31, r=2, tol=1e-10), CTX)
    fine = hard_edge_kernel(1.0, 2.0, LimitKernelSpec(alpha=0.31, r=2, tol=1e-20), CTX)
    assert abs(coarse - fine) < 1e-10


def test_limit_kernel_spec_validation():
    with pytest.raises(ValueError):
        LimitKernelSpec(alpha=-1.0, r=2)
    with pytest.raises(ValueError):
        LimitKernelSpec(alpha=0.5, r=0)


def test_psi_form_matches_limit_kernel_r2():
    ctx = PrecisionContext(bits=256, target_tol=1e-20)
    spec = LimitKernelSpec(alpha=0.31, r=2)
    k_limit = hard_edge_kernel_psi_scale(1.0, 2.0, spec, ctx, series=True)
    k_psi = psi_kernel_at(1.0, 2.0, 0.31, 2, ctx)
    assert abs(k_psi - k_limit) / (1 + abs(k_limit)) < 1e-8


@pytest.mark.parametrize("r", [2, 3])
def test_psi_form_diagonal_sits_at_scale_r_to_the_r(r):
    ctx = PrecisionContext(bits=192, target_tol=1e-15)
    spec = LimitKernelSpec(alpha=0.31, r=r)
    assert psi_scale(r) == r ** r
    k_psi = psi_kernel_at(0.5, 0.5, 0.31, r, ctx)
    k_scaled = hard_edge_kernel_psi_scale(0.5, 0.5, spec, ctx)
    k_bare = hard_edge_kernel(0.5, 0.5, spec, ctx)
    assert abs(k_psi - k_scaled) / (1 + abs(k_scaled)) < 1e-8
    assert abs(k_psi - k_bare) > 0.1 * abs(k_bare)


def test_hard_edge_scale_linear_field():
    assert hard_edge_scale(FieldSpec.linear(), 2) == 1.0
    assert hard_edge_scale(FieldSpec.linear(8.0), 2) == pytest.approx(2.0)


@pytest.mark.slow
@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("alpha", [0.31, 0.5, 1.3])
def test_dual_formula_agreement(r, alpha):
    rng = np.random.default_rng(r * 100 + int(alpha * 10))
    points = [tuple(rng.uniform(0.05, 5.0, size=2)) for _ in range(20)]
    table = kernel_comparison_table(points, alpha, r, PrecisionContext(bits=256, target_tol=1e-12))
    assert (table["relative_difference"] < 1e-8).all(), table


def test_fit_convergence_rate_recovers_power():
    n = [8, 16, 32, 64]
    errors = [3.0 * k ** -0.5 for k in n]
    fit = fit_convergence_rate(n, errors)
    assert abs(fit["rate"] - 0.5) < 1e-12
    assert abs(fit["constant"] - 3.0) < 1e-10


def test_richardson_removes_leading_term():
    n = [8, 16, 32, 48]
    values = [1.25 + 0.7 * k ** -0.5 for k in n]
    result = richardson_extrapolate(n, values, rate=0.5)
    assert abs(result["limit"] - 1.25) < 1e-12
    second = [1.25 + 0.7 * k ** -0.5 - 0.3 * k ** -1.0 for k in n]
    result = richardson_extrapolate(n, second, rate=0.5, order=2)
    assert abs(result["limit"] - 1.25) < 1e-10


@pytest.fixture(scope="module")
def ledger_r2():
    return discrepancy_ledger(2, 1.0, ctx=CTX)


def test_discrepancy_ledger_records_printed_and_derived(ledger_r2):
    entries = ledger_r2
    by_name = {e["quantity"]: e for e in entries}
    c_q = by_name["c_q"]
    with CTX.workprec():
        assert abs(c_q["printed"] - mp.mpf(3) / 2) < 1e-30
        assert abs(c_q["derived"] - mp.mpf(27) / 4) < 1e-30
        support = by_name["linear-field support endpoint"]
        assert abs(support["derived"] - mp.mpf(27) / 8) < 1e-30
        assert abs(support["printed"] - mp.mpf(4) / 3) < 1e-30
        scale = by_name["hard-edge scale c for V = x"]
        assert abs(scale["derived"] - mp.cbrt(mp.mpf(1) / 4)) < 1e-30
    frame = ledger_frame(entries)
    assert len(frame) == len(entries) == 9
    assert set(frame["used"].str.startswith("derived")) == {True}


def test_discrepancy_ledger_checks_are_independent_residuals(ledger_r2):
    by_name = {e["quantity"]: e["check_residual"] for e in ledger_r2}
    assert all(v is not None for v in by_name.values())
    assert by_name["c_q"] < 1e-30
    assert by_name["linear-field support endpoint"] < 1e-8
    assert by_name["xi_0 leading coefficient at infinity"] < 1e-8
    assert by_name["C_n composition weights"] < 1e-12
    assert by_name["last D^- entry"] < 0.05
    assert by_name["C_beta(0,0) normalisation"] < 1e-12
    assert by_name["psi_0 prefactor and argument"] < 1e-25
    assert by_name["equation solved by psi_j"] < 1e-25
    assert by_name["hard-edge scale c for V = x"] < 1e-6


def test_ledger_last_d_minus_entry_r7():
    entries = {e["quantity"]: e for e in discrepancy_ledger(7, ctx=CTX, with_checks=False)}
    entry = entries["last D^- entry"]
    assert entry["check_residual"] is None
    with CTX.workprec():
        assert abs(entry["derived"] + mp.expjpi(mp.mpf(3) / 7)) < 1e-30
        assert abs(entry["printed"] + mp.expjpi(-mp.mpf(3) / 7)) < 1e-30


@pytest.mark.slow
def test_universality_linear_field():
    report = universality_report(FieldSpec.linear(), 2, 0.5, [8, 16, 32, 48], [0.5, 1.0, 2.0],
                                 PrecisionContext(bits=256, target_tol=1e-12))
    assert report["c"] == 1.0
    assert len(report["table"]) == 4 * 6
    assert report["passed"], report["summary"]


@pytest.mark.slow
def test_universality_second_field():
    field = FieldSpec.polynomial([0.0, 1.0, 0.05])
    report = universality_report(field, 2, 0.5, [8, 16, 32, 48], [0.5, 1.0, 2.0],
                                 PrecisionContext(bits=256, target_tol=1e-12),
                                 diag_threshold=0.05, det_threshold=0.05)
    assert report["passed"], report["summary"]


def test_universality_verdict_uses_extrapolated_determinant(monkeypatch):
    n_list = [8, 16, 32, 48]

    def fake_probe(spec, c, n_values, x_list, reference, ctx, workers):
        rows = []
        for n in n_values:
            for x, y, kind, ref, slope in ((0.5, 0.5, "diag", 0.3, 0.1), (0.5, 1.0, "det2", 0.2, 0.6)):
                value = ref * (1 + slope * n ** -0.5)
                rows.append({"n": n, "x": x, "y": y, "kind": kind, "rescaled": value,
                             "reference": ref, "relative_error": abs(value - ref) / ref, "bits": 128})
        return pd.DataFrame(rows)

    monkeypatch.setattr("hard_edge.limit_kernel.scaling_probe", fake_probe)
    report = universality_report(FieldSpec.linear(), 2, 0.5, n_list, [0.5, 1.0], CTX)
    det = report["summary"].set_index("kind").loc["det2"]
    assert det["error_at_largest_n"] > 0.05
    assert det["extrapolated_error"] < 1e-10
    assert report["passed"]
