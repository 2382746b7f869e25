import random

import mpmath
import pytest
from mpmath import mp

from hard_edge.errors import ConfigError, PoleError, PrecisionExhaustedError
from hard_edge.precision import (
    PrecisionContext,
    eval_gamma,
    eval_gamma_spouge,
    poly_roots,
    quad_finite,
    quad_semiinfinite,
    rgamma_shifts,
    sum_ratio_series,
    sum_series,
    with_escalation,
)

CTX = PrecisionContext(bits=256, target_tol=1e-30)


def test_context_rejects_low_precision():
    with pytest.raises(ConfigError):
        PrecisionContext(bits=32)


def test_escalate_doubles_and_caps():
    ctx = PrecisionContext(bits=128, max_bits=256)
    assert ctx.escalate().bits == 256
    with pytest.raises(PrecisionExhaustedError):
        ctx.escalate().escalate()


def test_gamma_classical_values():
    with CTX.workprec():
        assert abs(eval_gamma(mp.mpf("0.5"), CTX) - mp.sqrt(mp.pi)) < mp.mpf(10) ** -70
        assert abs(eval_gamma(5, CTX) - 24) < mp.mpf(10) ** -70
        assert abs(eval_gamma(mp.mpf("-0.5"), CTX) + 2 * mp.sqrt(mp.pi)) < mp.mpf(10) ** -70


def test_gamma_pole():
    with pytest.raises(PoleError):
        eval_gamma(-3, CTX)
    with pytest.raises(PoleError):
        eval_gamma(0, CTX)


def test_gamma_recurrence_random():
    rng = random.Random(7)
    with CTX.workprec():
        for _ in range(200):
            x = mp.mpf(rng.uniform(0.01, 50))
            lhs = eval_gamma(x + 1, CTX)
            rhs = x * eval_gamma(x, CTX)
            assert abs(lhs - rhs) <= mp.mpf(10) ** -70 * abs(lhs)


def test_spouge_matches_mpmath():
    with CTX.workprec():
        for x in ["1", "2.25", "17.5", "40.125"]:
            ref = mp.gamma(mp.mpf(x))
            assert abs(eval_gamma_spouge(mp.mpf(x), CTX) / ref - 1) < mp.mpf(10) ** -70


def test_rgamma_shifts_recurrence():
    with CTX.workprec():
        values = rgamma_shifts(mp.mpf("0.3"), 6, 2, CTX)
        for k, v in enumerate(values):
            assert abs(v - 1 / mp.gamma(mp.mpf("0.3") + 2 * k)) < mp.mpf(10) ** -70
        at_pole = rgamma_shifts(-2, 5, 1, CTX)
        assert at_pole[:3] == [0, 0, 0]
        assert abs(at_pole[3] - 1) < mp.mpf(10) ** -70


def test_quad_finite_polynomial_and_singular():
    with CTX.workprec():
        res = quad_finite(lambda x: x ** 2, 0, 1, CTX)
        assert abs(res.value - mp.mpf(1) / 3) < mp.mpf(10) ** -30
        res = quad_finite(lambda x: 1 / mp.sqrt(x), 0, 1, CTX)
        assert abs(res.value - 2) < mp.mpf(10) ** -30
        assert res.error < mp.mpf(10) ** -29


def test_quad_finite_gauss_legendre_smooth():
    with CTX.workprec():
        res = quad_finite(mp.exp, 0, 1, CTX, method="gauss-legendre")
        assert abs(res.value - (mp.e - 1)) < mp.mpf(10) ** -30


def test_quad_finite_refinement_self_consistent():
    f = lambda u: mp.sqrt(u) * mp.besselj(0, 2 * mp.sqrt(3 * u))
    coarse = quad_finite(f, 0, 1, CTX.with_tol(1e-15))
    fine = quad_finite(f, 0, 1, CTX.with_tol(1e-30))
    with CTX.workprec():
        assert abs(coarse.value - fine.value) <= coarse.error + mp.mpf(10) ** -30


def test_quad_semiinfinite():
    with CTX.workprec():
        assert abs(quad_semiinfinite(lambda x: mp.exp(-x), 1, CTX).value - 1) < mp.mpf(10) ** -28
        res = quad_semiinfinite(lambda x: mp.sqrt(x) * mp.exp(-x), 1, CTX, power=0.5)
        assert abs(res.value - mp.gamma(mp.mpf(1.5))) < mp.mpf(10) ** -28
        res = quad_semiinfinite(lambda x: x * mp.exp(-2 * x), 2, CTX, power=1)
        assert abs(res.value - mp.mpf(1) / 4) < mp.mpf(10) ** -28


def test_poly_roots_simple():
    with CTX.workprec():
        roots = poly_roots([1, 0, 1], CTX).roots
        assert abs(roots[0] + 1j) < mp.mpf(10) ** -60
        assert abs(roots[1] - 1j) < mp.mpf(10) ** -60
        cube = poly_roots([1, 0, 0, -1], CTX)
        assert abs(cube.roots[-1] - 1) < mp.mpf(10) ** -60
        assert not cube.degenerate


def test_poly_roots_vieta():
    coeffs = [2, -3, mp.mpf("0.5"), 7, -1]
    with CTX.workprec():
        roots = poly_roots(coeffs, CTX).roots
        assert abs(mp.fsum(roots) - mp.mpf(3) / 2) < mp.mpf(10) ** -60
        assert abs(mp.fprod(roots) - mp.mpf(-1) / 2) < mp.mpf(10) ** -60


def test_poly_roots_double_root_flagged():
    with CTX.workprec():
        result = poly_roots([1, -1, mp.mpf(1) / 4], CTX)
        assert result.degenerate
        for z in result.roots:
            assert abs(z - mp.mpf(1) / 2) < mp.mpf(10) ** -30


def test_sum_series_examples():
    with CTX.workprec():
        res = sum_series(lambda k: mp.mpf(-1) ** k / mp.factorial(k), CTX)
        assert abs(res.value - mp.exp(-1)) < mp.mpf(10) ** -70
        res = sum_series(lambda k: 1 / mp.factorial(k) ** 2, CTX)
        assert abs(res.value - mp.besseli(0, 2)) < mp.mpf(10) ** -70
        assert sum_series(lambda k: mp.zero, CTX).value == 0


def test_sum_ratio_series_growing_then_decaying():
    with CTX.workprec():
        res = sum_ratio_series(1, lambda k: mp.mpf(20) / (k + 1), CTX)
        assert abs(res.value / mp.exp(20) - 1) < mp.mpf(10) ** -70


def test_with_escalation_converges():
    def compute(ctx):
        with ctx.workprec():
            return mp.exp(mp.mpf(1) / 3) - 1

    out = with_escalation(compute, PrecisionContext(bits=128, target_tol=1e-30))
    assert out.bits == 256
    with mp.workprec(256):
        assert abs(out.value - (mp.exp(mp.mpf(1) / 3) - 1)) < mp.mpf(10) ** -35
