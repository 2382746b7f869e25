"""
Spectral curve module.

Solves and labels the two (r+1)-sheeted algebraic curves of the hard-edge
analysis:

    zeta-curve:  zeta^{r+1} = (zeta - 1/(r z))^r
    xi-curve:    c_q z = 1 / ((1 - xi) xi^r)

Sheets are labeled at a far base point (|z| = 10^6) from their large-|z|
behaviour and carried to the query point by Newton continuation along a path
that stays in the open half-plane of the query point.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import mpmath
from mpmath import mp

from . import config
from .errors import (
    BranchPointProximityError,
    ConvergenceError,
    CutEvaluationError,
    OutOfDomainError,
)
from .precision import PrecisionContext, get_context, poly_roots

logger = logging.getLogger(__name__)

ZETA = "zeta"
XI = "xi"


def sheet_phase_exponent(j: int) -> int:
    """Exponent e_j = (-1)^j floor(j/2) of the Omega phase carried by sheet j >= 1."""
    return (-1) ** j * (j // 2)


def omega_big(r: int):
    """Omega = exp(2 pi i / r)."""
    return mp.expjpi(mp.mpf(2) / r)


def omega_small(r: int):
    """omega = exp(2 pi i / (r + 1))."""
    return mp.expjpi(mp.mpf(2) / (r + 1))


@dataclass(frozen=True)
class CurveConfig:
    """
    Parameters of the two curve families.

    Args:
        r: number of sheets minus one (theta = 1/r)
        q: soft-edge location for the xi-curve
        c_q: scale constant; derived from the branch condition xi_0(q) = r/(r+1)
            when omitted
    """
    r: int
    q: float = 1.0
    c_q: Optional[float] = None

    def __post_init__(self):
        if self.r < 1:
            raise OutOfDomainError(f"r must be a positive integer, got {self.r}")
        if not self.q > 0:
            raise OutOfDomainError(f"q must be positive, got {self.q}")
        if self.c_q is not None and not self.c_q > 0:
            raise OutOfDomainError(f"c_q must be positive, got {self.c_q}")

    @property
    def scale(self):
        """c_q as an mpf, defaulting to (r+1)^{r+1} / (r^r q)."""
        if self.c_q is not None:
            return mp.mpf(self.c_q)
        r = self.r
        return mp.mpf(r + 1) ** (r + 1) / (mp.mpf(r) ** r * mp.mpf(self.q))

    @property
    def printed_c_q(self):
        return mp.mpf(self.r + 1) / (2 * mp.mpf(self.q))


@dataclass
class SheetValues:
    z: mpmath.mpc
    values: List[mpmath.mpc]
    curve_kind: str
    side: Optional[int] = None
    residual: mpmath.mpf = field(default_factory=lambda: mp.zero)

    def __getitem__(self, j):
        return self.values[j]


@dataclass
class BranchPoint:
    z: object
    value: object
    order: int


# ---------------------------------------------------------------------------
# Curve families
# ---------------------------------------------------------------------------

class _Curve:
    kind = None

    def __init__(self, cfg: CurveConfig):
        self.cfg = cfg
        self.r = cfg.r

    def coeffs(self, z) -> list:
        raise NotImplementedError

    def value(self, v, z):
        raise NotImplementedError

    def d_value(self, v, z):
        raise NotImplementedError

    def d_z(self, v, z):
        raise NotImplementedError

    def asymptotic(self, z) -> list:
        raise NotImplementedError


class _ZetaCurve(_Curve):
    kind = ZETA

    def coeffs(self, z):
        r = self.r
        w = 1 / (r * z)
        out = [mp.one]
        for k in range(r, -1, -1):
            out.append(-mp.binomial(r, k) * (-w) ** (r - k))
        return out

    def value(self, v, z):
        w = 1 / (self.r * z)
        return v ** (self.r + 1) - (v - w) ** self.r

    def d_value(self, v, z):
        r = self.r
        w = 1 / (r * z)
        return (r + 1) * v ** r - r * (v - w) ** (r - 1)

    def d_z(self, v, z):
        r = self.r
        w = 1 / (r * z)
        return -(v - w) ** (r - 1) / z ** 2

    def asymptotic(self, z):
        r = self.r
        w = 1 / (r * z)
        sign = 1 if mp.im(z) >= 0 else -1
        root = mp.power(r * z, -mp.one / r)
        big = omega_big(r)
        out = [1 - 1 / z]
        for j in range(1, r + 1):
            out.append(w + w * root * big ** (sign * sheet_phase_exponent(j)))
        return out


class _XiCurve(_Curve):
    kind = XI

    def coeffs(self, z):
        c = self.cfg.scale
        r = self.r
        out = [-c * z, c * z] + [mp.zero] * (r - 1) + [mp.mpf(-1)]
        return out

    def value(self, v, z):
        return self.cfg.scale * z * v ** self.r * (1 - v) - 1

    def d_value(self, v, z):
        r = self.r
        return self.cfg.scale * z * (r * v ** (r - 1) - (r + 1) * v ** r)

    def d_z(self, v, z):
        return self.cfg.scale * v ** self.r * (1 - v)

    def asymptotic(self, z):
        r = self.r
        cz = self.cfg.scale * z
        sign = 1 if mp.im(z) >= 0 else -1
        root = mp.power(cz, -mp.one / r)
        big = omega_big(r)
        out = [1 - 1 / cz]
        for j in range(1, r + 1):
            out.append(root * big ** (sign * sheet_phase_exponent(j)))
        return out


def _curve(cfg: CurveConfig, kind: str) -> _Curve:
    if kind == ZETA:
        return _ZetaCurve(cfg)
    if kind == XI:
        return _XiCurve(cfg)
    raise OutOfDomainError(f"unknown curve kind {kind!r}")


# ---------------------------------------------------------------------------
# Root matching and continuation
# ---------------------------------------------------------------------------

def _min_separation(values):
    n = len(values)
    if n < 2:
        return mp.inf
    return min(abs(values[i] - values[j]) for i in range(n) for j in range(i + 1, n))


def _match(targets, roots):
    """Assign each target to a distinct nearest root; returns reordered roots."""
    remaining = list(roots)
    out = []
    for t in targets:
        idx = min(range(len(remaining)), key=lambda i: abs(remaining[i] - t))
        out.append(remaining.pop(idx))
    return out


def _newton(curve: _Curve, v, z, tol, max_iter=60):
    for _ in range(max_iter):
        dv = curve.d_value(v, z)
        if dv == 0:
            return v, False
        step = curve.value(v, z) / dv
        v = v - step
        if abs(step) <= tol * max(abs(v), 1):
            return v, True
    return v, False


def _label_far(curve: _Curve, z_far, ctx: PrecisionContext):
    roots = poly_roots(curve.coeffs(z_far), ctx).roots
    guesses = curve.asymptotic(z_far)
    labeled = _match(guesses, roots)
    sep = _min_separation(labeled)
    for g, v in zip(guesses, labeled):
        if abs(g - v) > sep / 4:
            raise ConvergenceError(
                f"{curve.kind}-curve asymptotic labels ambiguous at |z| = {mpmath.nstr(abs(z_far), 3)}"
            )
    return labeled


def _continue(curve: _Curve, values, leg, u0, u1, ctx: PrecisionContext, steps=16):
    """
    Carry labeled roots along z = leg(u) for u from u0 to u1.

    Tangent predictor plus Newton corrector; a step is accepted only when every
    root converges and the Newton correction stays below a quarter of the
    separation of the corrected roots, so clustered roots that drift together
    keep their labels.
    """
    tol = ctx.eps * 64
    u = mp.mpf(u0)
    u1 = mp.mpf(u1)
    span = u1 - u
    if span == 0:
        return values
    du = span / steps
    z = leg(u)
    for _ in range(config.TRACK_MAX_STEPS):
        if (u1 - u) * span <= 0:
            return values
        if abs(du) > abs(u1 - u):
            du = u1 - u
        z_new = leg(u + du)
        dz = z_new - z
        ok = True
        predicted, new_values = [], []
        for v in values:
            pred = v - curve.d_z(v, z) / curve.d_value(v, z) * dz
            corrected, converged = _newton(curve, pred, z_new, tol)
            if not converged:
                ok = False
                break
            predicted.append(pred)
            new_values.append(corrected)
        if ok:
            sep = _min_separation(new_values)
            ok = sep > 0 and all(abs(c - p) < sep / 4 for c, p in zip(new_values, predicted))
        if ok:
            u, z, values = u + du, z_new, new_values
            du *= mp.mpf(1.5)
            continue
        du /= 2
        if abs(du) < config.TRACK_MIN_STEP * abs(span):
            logger.error(f"{curve.kind}-curve continuation stalled near z = {mpmath.nstr(z_new, 8)}")
            raise BranchPointProximityError(
                f"root continuation step underflow near z = {mpmath.nstr(z_new, 8)}"
            )
    raise ConvergenceError("root continuation exceeded the maximum number of steps")


def _sheets(curve: _Curve, z, side, ctx: PrecisionContext) -> SheetValues:
    with ctx.workprec():
        z = mp.mpc(z)
        if z == 0:
            raise OutOfDomainError("the curves are singular at z = 0")
        if mp.im(z) == 0:
            if side not in (1, -1):
                raise CutEvaluationError(
                    f"z = {mpmath.nstr(z, 8)} lies on a cut; pass side=+1 or side=-1"
                )
            eps = mp.ldexp(max(abs(z), 1), -ctx.bits // 2)
            z = z + mp.mpc(0, side) * eps
        s = 1 if mp.im(z) > 0 else -1
        top_im = max(abs(z), mp.one)
        corner = mp.mpc(mp.re(z), s * top_im)
        radius = mp.mpf(config.LABEL_RADIUS) * max(abs(corner), 1)
        direction = corner / abs(corner)
        values = _label_far(curve, radius * direction, ctx)

        # radial leg: |z| from radius down to |corner|, log-spaced
        values = _continue(curve, values, lambda u: direction * mp.exp(u),
                           mp.log(radius), mp.log(abs(corner)), ctx)
        # vertical leg: Im from top_im down to |Im z|, log-spaced
        if abs(mp.im(z)) < top_im:
            values = _continue(curve, values,
                               lambda u: mp.mpc(mp.re(z), s * mp.exp(u)),
                               mp.log(top_im), mp.log(abs(mp.im(z))), ctx)
        roots = poly_roots(curve.coeffs(z), ctx)
        polished = _match(values, roots.roots)
        residual = max(abs(curve.value(v, z)) for v in polished)
        return SheetValues(z=z, values=polished, curve_kind=curve.kind, side=side,
                           residual=residual)


def zeta_sheets(z, cfg: CurveConfig, side: Optional[int] = None,
                ctx: Optional[PrecisionContext] = None) -> SheetValues:
    """
    Labeled roots zeta_0..zeta_r of zeta^{r+1} - (zeta - 1/(rz))^r at z.

    Real z needs side=+1 (boundary value from above) or side=-1 (from below).
    """
    return _sheets(_curve(cfg, ZETA), z, side, ctx or get_context())


def xi_sheets(z, cfg: CurveConfig, side: Optional[int] = None,
              ctx: Optional[PrecisionContext] = None) -> SheetValues:
    """Labeled roots xi_0..xi_r of c_q z xi^r (1 - xi) = 1 at z."""
    return _sheets(_curve(cfg, XI), z, side, ctx or get_context())


def sheets(z, cfg: CurveConfig, kind: str, side: Optional[int] = None,
           ctx: Optional[PrecisionContext] = None) -> SheetValues:
    return _sheets(_curve(cfg, kind), z, side, ctx or get_context())


def curve_coefficients(z, cfg: CurveConfig, kind: str,
                       ctx: Optional[PrecisionContext] = None) -> List:
    """Coefficients of the curve polynomial in the sheet variable at z, highest degree first."""
    ctx = ctx or get_context()
    with ctx.workprec():
        return _curve(cfg, kind).coeffs(mp.mpmathify(z))


def track_sheets(path: Sequence, cfg: CurveConfig, kind: str,
                 ctx: Optional[PrecisionContext] = None) -> List[SheetValues]:
    """
    Carry sheet labels from path[0] along the polygon through the given points.

    The first point is labeled by sheets(); the rest follow by continuation
    only, so a path that crosses a cut swaps labels exactly as analytic
    continuation does.
    """
    ctx = ctx or get_context()
    curve = _curve(cfg, kind)
    first = _sheets(curve, path[0], None, ctx)
    out = [first]
    values = first.values
    with ctx.workprec():
        for a, b in zip(path[:-1], path[1:]):
            a, b = mp.mpc(a), mp.mpc(b)
            values = _continue(curve, values, lambda u, a=a, b=b: a + (b - a) * u, 0, 1, ctx)
            residual = max(abs(curve.value(v, b)) for v in values)
            out.append(SheetValues(z=b, values=list(values), curve_kind=kind, residual=residual))
    return out


# ---------------------------------------------------------------------------
# Branch points and densities
# ---------------------------------------------------------------------------

def branch_points(cfg: CurveConfig, curve_kind: str,
                  ctx: Optional[PrecisionContext] = None) -> List[BranchPoint]:
    """Branch points of the curve: z = 0 (order r) and the soft edge (square root)."""
    ctx = ctx or get_context()
    r = cfg.r
    with ctx.workprec():
        if curve_kind == ZETA:
            z_star = (mp.mpf(r + 1) / r) ** (r + 1)
            v_star = mp.mpf(r + 1) / (r * z_star)
        elif curve_kind == XI:
            v_star = mp.mpf(r) / (r + 1)
            z_star = mp.mpf(r + 1) ** (r + 1) / (cfg.scale * mp.mpf(r) ** r)
        else:
            raise OutOfDomainError(f"unknown curve kind {curve_kind!r}")
        return [BranchPoint(mp.zero, mp.inf, r), BranchPoint(z_star, v_star, 1)]


def soft_edge(cfg: CurveConfig, curve_kind: str = ZETA, ctx: Optional[PrecisionContext] = None):
    return branch_points(cfg, curve_kind, ctx)[1].z


def density_from_curve(s, cfg: CurveConfig, ctx: Optional[PrecisionContext] = None):
    """rho(s) = Im zeta_{0,+}(s) / pi on (0, z*)."""
    ctx = ctx or get_context()
    z_star = soft_edge(cfg, ZETA, ctx)
    with ctx.workprec():
        s = mp.mpf(s)
        if not 0 < s < z_star:
            raise OutOfDomainError(
                f"s = {mpmath.nstr(s, 8)} outside the support (0, {mpmath.nstr(z_star, 8)})"
            )
        zeta0 = zeta_sheets(s, cfg, side=1, ctx=ctx)[0]
        return mp.im(zeta0) / mp.pi


def _edge_fit(sample, points, ctx):
    """Least-squares fit of sample(t) = a0 + a1 t + a2 t^2 + a3 t^3; returns a0."""
    with ctx.workprec():
        rows = [[t ** k for k in range(4)] for t in points]
        rhs = [sample(t) for t in points]
        A = mp.matrix(rows)
        b = mp.matrix(rhs)
        coef = mp.qr_solve(A, b)[0]
        return coef[0]


def curve_density_table(cfg: CurveConfig, s_grid: Sequence,
                        ctx: Optional[PrecisionContext] = None) -> Dict[str, object]:
    """
    Density samples of the curve measure plus its two edge coefficients.

    Returns:
        dict with keys s, rho, hard_edge_coefficient (lim s^{r/(r+1)} rho(s))
        and soft_edge_coefficient (lim rho(s) / sqrt(z* - s))
    """
    ctx = ctx or get_context()
    r = cfg.r
    z_star = soft_edge(cfg, ZETA, ctx)
    with ctx.workprec():
        rho = [density_from_curve(s, cfg, ctx) for s in s_grid]
        p = mp.one / (r + 1)
        hard_t = [mp.ldexp(z_star, -8 * k) ** p for k in range(3, 9)]
        hard = _edge_fit(lambda t: density_from_curve(t ** (r + 1), cfg, ctx) * t ** r,
                         hard_t, ctx)
        soft_t = [mp.sqrt(mp.ldexp(z_star, -4 * k)) for k in range(3, 9)]
        soft = _edge_fit(lambda t: density_from_curve(z_star - t ** 2, cfg, ctx) / t,
                         soft_t, ctx)
        return {"s": list(s_grid), "rho": rho,
                "hard_edge_coefficient": hard, "soft_edge_coefficient": soft}


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def symmetric_function_check(z, cfg: CurveConfig, kind: str, side: Optional[int] = None,
                             ctx: Optional[PrecisionContext] = None):
    """Max deviation between elementary symmetric functions of the roots and the coefficients."""
    ctx = ctx or get_context()
    curve = _curve(cfg, kind)
    sv = _sheets(curve, z, side, ctx)
    with ctx.workprec():
        coeffs = curve.coeffs(sv.z)
        lead = coeffs[0]
        poly = [mp.one]
        for v in sv.values:
            poly = [a - v * b for a, b in zip(poly + [mp.zero], [mp.zero] + poly)]
        scale = max(abs(c / lead) for c in coeffs)
        return max(abs(a - c / lead) for a, c in zip(poly, coeffs)) / scale


def _cut_samples(cfg: CurveConfig, j: int):
    q = mp.mpf(cfg.q)
    if j == 0:
        return [q * t for t in (mp.mpf("0.1"), mp.mpf("0.3"), mp.mpf("0.5"), mp.mpf("0.9"))]
    if j % 2 == 1:
        return [-q * t for t in (mp.mpf("0.3"), mp.mpf(1), mp.mpf(3))]
    return [q * t for t in (mp.mpf("0.3"), mp.mpf(1), mp.mpf(3))]


def verify_sheet_properties(cfg: CurveConfig, sample_points: Optional[Sequence] = None,
                            ctx: Optional[PrecisionContext] = None,
                            threshold: float = 1e-25) -> Dict[str, object]:
    """
    Check cut gluing, Schwarz symmetry and the sign law of the xi-sheets.

    Returns:
        dict report with per-check residuals and a passed flag; never raises on
        a failed check
    """
    ctx = ctx or get_context()
    r = cfg.r
    report = {"checks": []}
    with ctx.workprec():
        gluing = mp.zero
        for j in range(r):
            for x in _cut_samples(cfg, j):
                up = xi_sheets(x, cfg, side=1, ctx=ctx)
                down = xi_sheets(x, cfg, side=-1, ctx=ctx)
                gluing = max(gluing, abs(up[j] - down[j + 1]), abs(down[j] - up[j + 1]))
        report["checks"].append({"check": "cut_gluing", "residual_max": gluing,
                                 "passed": bool(gluing < threshold)})

        if sample_points is None:
            sample_points = [mp.mpc("0.3", "0.7") * cfg.q, mp.mpc("-1.2", "0.4") * cfg.q,
                             mp.mpc("2.5", "0.01") * cfg.q, mp.mpc("0.02", "1.5") * cfg.q]
        schwarz = mp.zero
        sign_failures = 0
        for z in sample_points:
            z = mp.mpc(z)
            upper = xi_sheets(z, cfg, ctx=ctx)
            lower = xi_sheets(mp.conj(z), cfg, ctx=ctx)
            for j in range(r + 1):
                schwarz = max(schwarz, abs(lower[j] - mp.conj(upper[j])))
                expected = (-1) ** j * mp.sign(mp.im(z))
                if mp.sign(mp.im(upper[j])) != expected:
                    sign_failures += 1
        report["checks"].append({"check": "schwarz_symmetry", "residual_max": schwarz,
                                 "passed": bool(schwarz < threshold)})
        report["checks"].append({"check": "sign_law", "failures": sign_failures,
                                 "passed": sign_failures == 0})
    report["passed"] = all(c["passed"] for c in report["checks"])
    if not report["passed"]:
        logger.warning(f"Sheet property check failed for r={r}")
    return report
