"""
Global parametrix.

Builds the constant matrices U^+-, D^+- and the global parametrix

    N(z) = C_beta N_0(z) (z^-beta + I) diag(exp(-beta log(1 - xi_j(z))))

from the xi-sheets of the spectral curve, where N_0 has entries
p_k(xi_j(z)) F(xi_j(z)). The polynomials p_k and the matrix C_beta are fixed
by the normalization at infinity; both are read off as constant Laurent terms,
computed as trapezoid means over a large ring (the functions involved are
analytic outside |z| = q), together with the exact constraints p_0(xi) = xi^r
and p_k(1) = 0.

Verifiers cover the jumps on (0, q), (q, inf) and (-inf, 0), the decay of
N(z) T(z)^-1 - I at infinity and the growth rates at the hard and soft edge.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import mpmath
import numpy as np
from mpmath import mp

from . import config
from .errors import ConvergenceError, CutEvaluationError, OutOfDomainError
from .precision import PrecisionContext, get_context
from .spectral_curve import CurveConfig, omega_big, sheet_phase_exponent, xi_sheets

logger = logging.getLogger(__name__)

C_BETA_SOURCES = ("contour", "printed")


# ---------------------------------------------------------------------------
# U, D and the cyclic shift
# ---------------------------------------------------------------------------

@dataclass
class RhAlgebra:
    r: int
    Uplus: Any
    Uminus: Any
    Dplus: Any
    Dminus: Any
    unitarity: Any = None

    def U(self, half: int):
        return self.Uplus if half > 0 else self.Uminus

    def D(self, half: int):
        return self.Dplus if half > 0 else self.Dminus


def _sigma(j: int, half: int) -> int:
    """Cut count sigma(xi_j(z)) for large z in the half-plane sign(Im z) = half."""
    if half > 0:
        return j - 1 if j % 2 == 0 else 0
    return j - 1 if j % 2 == 1 else 0


def d_entry(j: int, half: int, r: int):
    """D^+-_{jj} = (-1)^{sigma(j) + floor(j/2)} Omega^{+-(-1)^j floor(j/2) / 2}, j >= 1."""
    sign = (-1) ** (_sigma(j, half) + j // 2)
    return sign * mp.expjpi(mp.mpf(half * (-1) ** j * (j // 2)) / r)


def build_rh_algebra(r: int, ctx: Optional[PrecisionContext] = None) -> RhAlgebra:
    """
    U^+ has columns (Omega^{(i-1) e_j})_i / sqrt(r) with e_j = (-1)^j floor(j/2);
    U^- = conj(U^+); D^+- follow the alternating sign and half-power pattern.
    """
    if r < 1:
        raise OutOfDomainError(f"r must be a positive integer, got {r}")
    ctx = ctx or get_context()
    with ctx.workprec():
        big = omega_big(r)
        Up = mp.matrix(r, r)
        for i in range(r):
            for j in range(1, r + 1):
                Up[i, j - 1] = big ** (i * sheet_phase_exponent(j)) / mp.sqrt(r)
        Um = Up.conjugate()
        Dp = mp.diag([d_entry(j, 1, r) for j in range(1, r + 1)])
        Dm = mp.diag([d_entry(j, -1, r) for j in range(1, r + 1)])
        unitarity = mp.mnorm(Up * Up.H - mp.eye(r), 1)
        return RhAlgebra(r=r, Uplus=Up, Uminus=Um, Dplus=Dp, Dminus=Dm, unitarity=unitarity)


def cyclic_shift_check(alg: RhAlgebra, ctx: Optional[PrecisionContext] = None):
    """max over +- of |U diag(Omega^{+-e_j}) U^-1 - S| where (S v)_i = v_{i+1 mod r}."""
    ctx = ctx or get_context()
    r = alg.r
    with ctx.workprec():
        big = omega_big(r)
        shift = mp.matrix(r, r)
        for i in range(r):
            shift[i, (i + 1) % r] = 1
        worst = mp.zero
        for half in (1, -1):
            U = alg.U(half)
            lam = mp.diag([big ** (half * sheet_phase_exponent(j)) for j in range(1, r + 1)])
            diff = U * lam * U.H - shift
            worst = max(worst, max(abs(diff[i, j]) for i in range(r) for j in range(r)))
        return worst


# ---------------------------------------------------------------------------
# F(xi)
# ---------------------------------------------------------------------------

def _f_sign(j: int, half: int) -> int:
    """Constant sign relating F on sheet j to the principal-branch formula."""
    if j == 0:
        return 1
    tau = (-1) ** j * half
    return -tau * (-1) ** _sigma(j, half)


def _f_principal(xi, r: int):
    return mp.power(xi, mp.mpf(1 - r) / 2) / mp.sqrt((r + 1) * xi - r)


def f_on_sheet(xi, j: int, half: int, r: int):
    """F(xi_j(z)) for z in the half-plane sign(Im z) = half."""
    return _f_sign(j, half) * _f_principal(xi, r)


def _sheet_index(values, xi, ctx: PrecisionContext) -> int:
    j = min(range(len(values)), key=lambda i: abs(values[i] - xi))
    if abs(values[j] - xi) > mp.ldexp(max(abs(xi), 1), -ctx.bits // 3):
        raise ConvergenceError(f"xi = {mpmath.nstr(xi, 10)} not matched by any sheet")
    return j


def eval_F(xi, cfg: CurveConfig, side: Optional[int] = None,
           ctx: Optional[PrecisionContext] = None):
    """
    F(xi) = 1 / sqrt((r+1) xi^r - r xi^{r-1}) with cuts xi_{j,+}(Delta_j), j < r.

    The point z = 1 / (c_q xi^r (1 - xi)) and the sheet j with xi_j(z) = xi
    locate xi on the surface; F is then a fixed sign times the principal
    formula. Points over the real z-axis are accepted when both boundary
    values agree (no cut there); otherwise a side is required.
    """
    ctx = ctx or get_context()
    r = cfg.r
    with ctx.workprec():
        xi = mp.mpc(xi)
        if xi == 1:
            return mp.mpc(1)
        if xi == 0 and r > 1:
            raise OutOfDomainError("F has a branch point at xi = 0")
        z = 1 / (cfg.scale * xi ** r * (1 - xi))
        real_axis = abs(mp.im(z)) <= mp.ldexp(abs(z), -ctx.bits + 16)
        if not real_axis:
            half = 1 if mp.im(z) > 0 else -1
            sv = xi_sheets(z, cfg, ctx=ctx)
            return f_on_sheet(xi, _sheet_index(sv.values, xi, ctx), half, r)
        z = mp.mpf(mp.re(z))
        values = {}
        for half in (1, -1):
            sv = xi_sheets(z, cfg, side=half, ctx=ctx)
            j = _sheet_index(sv.values, xi, ctx)
            values[half] = f_on_sheet(sv.values[j], j, half, r)
        if abs(values[1] - values[-1]) <= mp.ldexp(abs(values[1]), -ctx.bits // 4):
            return values[1]
        if side in (1, -1):
            return values[side]
        raise CutEvaluationError(f"xi = {mpmath.nstr(xi, 10)} lies on a cut of F; pass side")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

@dataclass
class GlobalN:
    """Data of the global parametrix; immutable once built."""
    cfg: CurveConfig
    alg: RhAlgebra
    p_coeffs: List[List[Any]]
    beta: Any = 0
    C_beta: Any = None
    C_beta_source: str = "contour"
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def r(self) -> int:
        return self.cfg.r

    @property
    def q(self):
        return self.cfg.q

    @property
    def c_q(self):
        return self.cfg.scale


def _half(z) -> int:
    return 1 if mp.im(z) > 0 else -1


def n_asymptotic_factor(z, gn, half: Optional[int] = None):
    """T(z) = (1 + z^{(r-1)/(2r)} diag(z^{-(j-1)/r})) (1 + U^+-D^+-)."""
    r = gn.r
    alg = gn.alg if isinstance(gn, GlobalN) else gn
    z = mp.mpc(z)
    half = half or _half(z)
    scale = mp.matrix(r + 1, r + 1)
    scale[0, 0] = 1
    lead = mp.power(z, mp.mpf(r - 1) / (2 * r))
    for j in range(1, r + 1):
        scale[j, j] = lead * mp.power(z, -mp.mpf(j - 1) / r)
    block = mp.matrix(r + 1, r + 1)
    block[0, 0] = 1
    UD = alg.U(half) * alg.D(half)
    for i in range(r):
        for j in range(r):
            block[i + 1, j + 1] = UD[i, j]
    return scale * block


def _ring(cfg: CurveConfig, radius, count: int, ctx: PrecisionContext):
    """Sheets at count points of |z| = radius, offset half a step from the real axis."""
    out = []
    for i in range(count):
        z = radius * mp.expjpi(mp.mpf(2 * i + 1) / count)
        out.append(xi_sheets(z, cfg, ctx=ctx))
    return out


def _ring_means(samples: List[Any], count: int):
    """Trapezoid mean of matrices over all ring points and over the even ones."""
    full = samples[0] * 0
    half = samples[0] * 0
    for i, s in enumerate(samples):
        full += s
        if i % 2 == 0:
            half += s
    return full / count, half / (count // 2)


def _max_entry(M):
    return max(abs(M[i, j]) for i in range(M.rows) for j in range(M.cols))


def _collocation_rows(sv, alg: RhAlgebra, r: int):
    """Rows v_m T^{-1} with v_m = (xi_j^m F(xi_j))_j, m = 0..r."""
    z = sv.z
    half = _half(z)
    Tinv = mp.inverse(n_asymptotic_factor(z, alg, half))
    B = mp.matrix(r + 1, r + 1)
    for m in range(r + 1):
        v = mp.matrix(1, r + 1)
        for j, xi in enumerate(sv.values):
            v[0, j] = xi ** m * f_on_sheet(xi, j, half, r)
        row = v * Tinv
        for l in range(r + 1):
            B[m, l] = row[0, l]
    return B


def build_n0(cfg: CurveConfig, ctx: Optional[PrecisionContext] = None,
             ring_factor: Optional[float] = None, count: Optional[int] = None) -> GlobalN:
    """
    Polynomials p_0..p_r of N_0 by ring collocation.

    For each row k >= 1 the constant Laurent terms of (N_0 T^{-1})_{k,l},
    l = 1..r, must equal delta_{kl}; each is linear in the coefficients of
    p_k and is measured as the trapezoid mean over |z| = ring_factor * q.
    p_k(1) = 0 closes the (r+1) x (r+1) system. The ring is pushed outward
    when the aliasing estimate (full mean against every-other-point mean)
    exceeds tolerance.
    """
    ctx = ctx or get_context()
    r = cfg.r
    alg = build_rh_algebra(r, ctx)
    count = count or 8 * (r + 1)
    factor = ring_factor or config.COLLOCATION_RING_FACTOR
    with ctx.workprec():
        p0 = [mp.zero] * r + [mp.one]
        for attempt in range(4):
            radius = mp.mpf(factor) * mp.mpf(cfg.q)
            samples = [_collocation_rows(sv, alg, r) for sv in _ring(cfg, radius, count, ctx)]
            mean, coarse = _ring_means(samples, count)
            aliasing = _max_entry(mean - coarse)
            if aliasing <= ctx.tol * max(_max_entry(mean), 1):
                break
            logger.info(f"ring |z| = {mpmath.nstr(radius, 5)} aliasing {mpmath.nstr(aliasing, 3)}; widening")
            factor *= 10
        else:
            logger.warning(f"collocation aliasing {mpmath.nstr(aliasing, 3)} above tolerance")

        # system rows: columns l = 1..r of the constant term, then p(1) = 0
        A = mp.matrix(r + 1, r + 1)
        for l in range(1, r + 1):
            for m in range(r + 1):
                A[l - 1, m] = mean[m, l]
        for m in range(r + 1):
            A[r, m] = 1
        try:
            inverse = mp.inverse(A)
        except ZeroDivisionError as e:
            raise ConvergenceError("collocation system is singular") from e
        condition = mp.mnorm(A, 1) * mp.mnorm(inverse, 1)
        coeffs = [p0]
        for k in range(1, r + 1):
            rhs = mp.matrix(r + 1, 1)
            rhs[k - 1] = 1
            sol = inverse * rhs
            coeffs.append([sol[m] for m in range(r + 1)])
        residual = mp.zero
        for k in range(1, r + 1):
            for l in range(1, r + 1):
                value = mp.fsum(coeffs[k][m] * mean[m, l] for m in range(r + 1))
                residual = max(residual, abs(value - (1 if k == l else 0)))
        gn = GlobalN(cfg=cfg, alg=alg, p_coeffs=coeffs, beta=mp.zero,
                     C_beta=mp.eye(r + 1), C_beta_source="contour",
                     diagnostics={"ring_radius": radius, "ring_points": count,
                                  "aliasing": aliasing, "condition": condition,
                                  "collocation_residual": residual})
    logger.info(f"N_0 built for r={r}: condition {mpmath.nstr(condition, 3)}, "
                f"aliasing {mpmath.nstr(aliasing, 3)}")
    return gn


def _printed_c_beta(gn: GlobalN, beta):
    r = gn.r
    c = gn.c_q
    inner = mp.matrix(r + 1, r + 1)
    inner[0, 0] = mp.power(r, beta - 1) * mp.power(c, -beta)
    for k in range(1, r + 1):
        for l in range(k, r + 1):
            n = l - k
            inner[k, l] = mp.binomial(beta + mp.mpf(n) / r, n)
    scale = mp.diag([c ** i for i in range(r + 1)])
    return r * scale * inner * mp.inverse(scale)


def _contour_c_beta(gn: GlobalN, beta, ctx: PrecisionContext, count: int):
    r = gn.r
    alg = gn.alg
    radius = mp.mpf(gn.diagnostics.get("ring_radius", config.COLLOCATION_RING_FACTOR * gn.q))
    samples = []
    for sv in _ring(gn.cfg, radius, count, ctx):
        z = sv.z
        half = _half(z)
        M = mp.matrix(r + 1, r + 1)
        M[0, 0] = mp.power(z * (1 - sv.values[0]), beta)
        U = alg.U(half)
        Z = mp.diag([mp.power(z, -mp.mpf(k) / r) for k in range(r)])
        W = mp.diag([mp.power(1 - sv.values[j], beta) for j in range(1, r + 1)])
        block = Z * U * W * U.H * mp.inverse(Z)
        for i in range(r):
            for j in range(r):
                M[i + 1, j + 1] = block[i, j]
        samples.append(M)
    mean, coarse = _ring_means(samples, count)
    return mean, _max_entry(mean - coarse)


def build_c_beta(gn: GlobalN, beta=None, source: str = "contour",
                 ctx: Optional[PrecisionContext] = None):
    """
    C_beta from the constant Laurent term of the normalization at infinity.

    "contour" takes trapezoid means of (z (1 - xi_0))^beta and of
    Z U diag((1 - xi_j)^beta) U^{-1} Z^{-1} over the collocation ring;
    "printed" evaluates the closed-form matrix with binomial entries as
    written. Only the contour matrix normalizes N to I + O(1/z).
    """
    if source not in C_BETA_SOURCES:
        raise ValueError(f"C_beta source must be one of {C_BETA_SOURCES}, got {source!r}")
    ctx = ctx or get_context()
    with ctx.workprec():
        beta = gn.beta if beta is None else mp.mpf(beta)
        if source == "printed":
            return _printed_c_beta(gn, beta)
        count = int(gn.diagnostics.get("ring_points", 8 * (gn.r + 1)))
        mean, aliasing = _contour_c_beta(gn, beta, ctx, count)
        if aliasing > ctx.tol * max(_max_entry(mean), 1):
            logger.warning(f"C_beta ring aliasing {mpmath.nstr(aliasing, 3)}")
        return mean


def build_global_parametrix(cfg: CurveConfig, beta=0, ctx: Optional[PrecisionContext] = None,
                            source: str = "contour") -> GlobalN:
    """N_0 plus C_beta for the given beta."""
    ctx = ctx or get_context()
    gn = build_n0(cfg, ctx)
    with ctx.workprec():
        gn.beta = mp.mpf(beta)
        gn.C_beta = build_c_beta(gn, gn.beta, source, ctx)
        gn.C_beta_source = source
    return gn


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _p_value(coeffs, xi):
    total = mp.zero
    for c in reversed(coeffs):
        total = total * xi + c
    return total


def eval_N0(z, gn: GlobalN, side: Optional[int] = None, ctx: Optional[PrecisionContext] = None):
    ctx = ctx or get_context()
    r = gn.r
    sv = xi_sheets(z, gn.cfg, side=side, ctx=ctx)
    with ctx.workprec():
        half = _half(sv.z)
        N0 = mp.matrix(r + 1, r + 1)
        for j, xi in enumerate(sv.values):
            F = f_on_sheet(xi, j, half, r)
            for k in range(r + 1):
                N0[k, j] = _p_value(gn.p_coeffs[k], xi) * F
        return N0, sv


def eval_N(z, gn: GlobalN, side: Optional[int] = None, ctx: Optional[PrecisionContext] = None):
    """N(z) = C_beta N_0(z) (z^-beta + I) diag(exp(-beta log(1 - xi_j(z))))."""
    ctx = ctx or get_context()
    N0, sv = eval_N0(z, gn, side, ctx)
    with ctx.workprec():
        r = gn.r
        beta = gn.beta
        dressing = [mp.exp(-beta * mp.log(1 - xi)) for xi in sv.values]
        dressing[0] *= mp.power(sv.z, -beta)
        return gn.C_beta * N0 * mp.diag(dressing)


def _pair_block(J, i, x_beta=None):
    if x_beta is None:
        J[i, i + 1] = 1
        J[i + 1, i] = -1
    else:
        J[i, i + 1] = x_beta
        J[i + 1, i] = -1 / x_beta


def jump_matrix_n(x, gn: GlobalN, ctx: Optional[PrecisionContext] = None):
    """Jump J with N_+ = N_- J on (0, q), (q, inf) or (-inf, 0)."""
    ctx = ctx or get_context()
    r = gn.r
    with ctx.workprec():
        x = mp.mpf(x)
        if x == 0 or x == gn.q:
            raise OutOfDomainError("no jump matrix at the endpoints 0 and q")
        J = mp.matrix(r + 1, r + 1)
        if x > 0:
            if x < gn.q:
                _pair_block(J, 0, mp.power(x, gn.beta))
            else:
                J[0, 0] = J[1, 1] = 1
            start = 2
        else:
            J[0, 0] = 1
            start = 1
        i = start
        while i + 1 <= r:
            _pair_block(J, i)
            i += 2
        if i == r:
            J[r, r] = 1
        return J


def _boundary(x, gn, side, offset, ctx):
    if offset is None:
        return eval_N(x, gn, side=side, ctx=ctx)
    with ctx.workprec():
        z = mp.mpc(x, side * mp.mpf(offset))
    return eval_N(z, gn, ctx=ctx)


def jump_residual(x, gn: GlobalN, offset=None, ctx: Optional[PrecisionContext] = None):
    """|N_+ - N_- J| / |N_-|; contours touching 0 point away from it, so + is below on x < 0."""
    ctx = ctx or get_context()
    plus_side = 1 if x > 0 else -1
    Np = _boundary(x, gn, plus_side, offset, ctx)
    Nm = _boundary(x, gn, -plus_side, offset, ctx)
    with ctx.workprec():
        J = jump_matrix_n(x, gn, ctx)
        return _max_entry(Np - Nm * J) / _max_entry(Nm)


def verify_N_jumps(gn: GlobalN, points: Optional[Sequence] = None, offset=None,
                   ctx: Optional[PrecisionContext] = None, threshold: float = 1e-20) -> Dict[str, Any]:
    """Jump residuals on the three parts of the real line plus a determinant check."""
    ctx = ctx or get_context()
    q = mp.mpf(gn.q)
    if points is None:
        points = [q * t for t in (mp.mpf("0.2"), mp.mpf("0.6"))] \
            + [q * t for t in (mp.mpf("1.5"), mp.mpf(4))] \
            + [-q * t for t in (mp.mpf("0.3"), mp.mpf(2))]
    residuals = [jump_residual(x, gn, offset, ctx) for x in points]
    worst = max(residuals)
    dets = []
    for z in (mp.mpc("0.3", "0.4") * q, mp.mpc("-1", "0.2") * q, mp.mpc("2", "-0.5") * q):
        dets.append(abs(mp.det(eval_N(z, gn, ctx=ctx))))
    report = {
        "check": "jumps",
        "points": list(points),
        "residuals": residuals,
        "residual_max": worst,
        "min_abs_det": min(dets),
        "passed": bool(worst < threshold and min(dets) > 0),
    }
    if not report["passed"]:
        logger.warning(f"N jump check failed: residual {mpmath.nstr(worst, 3)}")
    return report


def _slope(xs, ys) -> float:
    return float(np.polyfit(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), 1)[0])


def verify_N_asymptotics(gn: GlobalN, radii: Optional[Sequence] = None, angle=None,
                         ctx: Optional[PrecisionContext] = None) -> Dict[str, Any]:
    """|N(z) T(z)^{-1} - I| along a ray; the log-log slope should be -1."""
    ctx = ctx or get_context()
    radii = radii or [mp.mpf(10) ** k for k in (2, 2.5, 3, 3.5, 4)]
    angle = mp.pi / 4 if angle is None else angle
    logs_r, logs_e = [], []
    with ctx.workprec():
        for R in radii:
            z = mp.mpf(R) * mp.mpf(gn.q) * mp.expj(angle)
            N = eval_N(z, gn, ctx=ctx)
            E = N * mp.inverse(n_asymptotic_factor(z, gn)) - mp.eye(gn.r + 1)
            logs_r.append(mp.log(abs(z)))
            logs_e.append(mp.log(_max_entry(E)))
    slope = _slope(logs_r, logs_e)
    report = {
        "check": "asymptotics",
        "points": [float(mp.exp(v)) for v in logs_r],
        "residual_max": float(mp.exp(logs_e[-1])),
        "fitted_exponent": slope,
        "passed": bool(abs(slope + 1) <= 0.05),
    }
    return report


def verify_N_edges(gn: GlobalN, ctx: Optional[PrecisionContext] = None,
                   tolerance: float = 0.02) -> Dict[str, Any]:
    """
    Growth exponents at 0 (after the beta-compensating diagonal) and at q.

    At 0 the fit is of log max|N diag(z^{r beta/(r+1)}, z^{-beta/(r+1)}, ...)|
    against log|z|; at q the first two columns and the remaining ones are
    fitted separately.
    """
    ctx = ctx or get_context()
    r = gn.r
    with ctx.workprec():
        q = mp.mpf(gn.q)
        beta = gn.beta
        phase = mp.expjpi(mp.mpf(1) / 3)
        xs, ys = [], []
        for k in (8, 9, 10, 11, 12):
            z = q * mp.mpf(10) ** (-k) * phase
            comp = mp.diag([mp.power(z, r * beta / (r + 1))] + [mp.power(z, -beta / (r + 1))] * r)
            xs.append(mp.log(abs(z)))
            ys.append(mp.log(_max_entry(eval_N(z, gn, ctx=ctx) * comp)))
        zero_exp = _slope(xs, ys)

        xs, y12, yrest = [], [], []
        for k in (6, 7, 8, 9, 10):
            d = q * mp.mpf(10) ** (-k) * phase
            N = eval_N(q + d, gn, ctx=ctx)
            xs.append(mp.log(abs(d)))
            y12.append(mp.log(max(abs(N[i, j]) for i in range(r + 1) for j in range(2))))
            if r >= 2:
                yrest.append(mp.log(max(abs(N[i, j]) for i in range(r + 1) for j in range(2, r + 1))))
        q_exp = _slope(xs, y12)
        rest_exp = _slope(xs, yrest) if r >= 2 else None
    expected_zero = -r / (2 * (r + 1))
    checks = [
        {"check": "hard_edge", "fitted_exponent": zero_exp, "expected": expected_zero,
         "passed": bool(abs(zero_exp - expected_zero) <= tolerance)},
        {"check": "soft_edge_columns_0_1", "fitted_exponent": q_exp, "expected": -0.25,
         "passed": bool(abs(q_exp + 0.25) <= tolerance)},
    ]
    if rest_exp is not None:
        checks.append({"check": "soft_edge_other_columns", "fitted_exponent": rest_exp,
                       "expected": 0.0, "passed": bool(abs(rest_exp) <= tolerance)})
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}
