"""
Hard-edge limit kernel.

Wright's generalized Bessel function J_{a,b}(x) = sum_k (-x)^k / (k! Gamma(a + b k))
and the limiting kernel at theta = 1/r,

    K(x, y) = theta y^alpha int_0^1 J_{(alpha+1)/theta, 1/theta}(u x)
                                   J_{alpha+1, theta}((u y)^theta) u^alpha du,

together with the universality harness that compares rescaled finite-n
kernels against it, and the ledger of printed against derived constants.

K is the limit under the scaling n^{r+1} that makes c = 1 for V = x. The
Psi-form kernel lives on the scale c = pi c0 / sin(pi/(r+1)), which is
r^{-r/(r+1)} for V = x, so the two agree after x -> r^r x.
"""

import math
import logging
from typing import Any, Dict, List, Optional, Sequence

import mpmath
import numpy as np
import pandas as pd
from mpmath import mp
from pydantic import BaseModel, field_validator

from . import config
from .equilibrium import composition_coefficients, hard_edge_constants, minimize_energy
from .errors import OutOfDomainError
from .finite_ensemble import scaling_probe
from .global_parametrix import build_global_parametrix, d_entry, verify_N_asymptotics
from .meijer import (
    confluence_gap,
    frobenius_basis,
    ode_residual,
    psi0_hypergeometric,
    psi_j,
    psi_kernel_at,
)
from .models import FieldSpec, WeightSpec
from .precision import PrecisionContext, get_context, quad_finite, sum_series
from .spectral_curve import (
    XI,
    ZETA,
    CurveConfig,
    curve_coefficients,
    curve_density_table,
    xi_sheets,
    zeta_sheets,
)

logger = logging.getLogger(__name__)


class LimitKernelSpec(BaseModel):
    """Parameters of the limit kernel K^{(alpha, 1/r)}."""

    alpha: float
    r: int = 1
    tol: Optional[float] = None

    @field_validator("alpha")
    @classmethod
    def alpha_range(cls, v):
        if not v > -1:
            raise ValueError(f"alpha must exceed -1, got {v}")
        return v

    @field_validator("r")
    @classmethod
    def r_positive(cls, v):
        if v < 1:
            raise ValueError(f"r must be a positive integer, got {v}")
        return v

    @property
    def theta(self):
        return mp.one / self.r

    def wright_parameters(self):
        """((a, b) for the x-factor, (a, b) for the y-factor)."""
        a = mp.mpf(self.alpha) + 1
        return (a * self.r, mp.mpf(self.r)), (a, self.theta)


# ---------------------------------------------------------------------------
# Wright's function
# ---------------------------------------------------------------------------

def _wright_guard_bits(b, x) -> int:
    """Bits lost to cancellation: the largest term is about exp((1+b)(|x| b^-b)^{1/(1+b)})."""
    b = float(b)
    peak = (1 + b) * (abs(float(x)) * b ** (-b)) ** (1 / (1 + b))
    return int(peak / math.log(2)) + 16


def wright_bessel(a, b, x, ctx: Optional[PrecisionContext] = None):
    """
    J_{a,b}(x) = sum_{k>=0} (-x)^k / (k! Gamma(a + b k)) for a, b > 0.

    Summed at raised precision so the alternating cancellation for large x
    does not eat into the target digits.
    """
    ctx = ctx or get_context()
    if not (a > 0 and b > 0):
        raise OutOfDomainError(f"Wright's function needs a, b > 0, got a={a}, b={b}")
    with mp.workprec(ctx.bits + _wright_guard_bits(b, x)):
        a, b, x = mp.mpf(a), mp.mpf(b), mp.mpf(x)
        if x == 0:
            value = mp.rgamma(a)
        else:
            inner = PrecisionContext(bits=mp.prec, target_tol=ctx.target_tol, max_bits=max(ctx.max_bits, mp.prec))
            value = sum_series(lambda k: (-x) ** k * mp.rgamma(a + b * k) / mp.factorial(k),
                               inner).value
    with ctx.workprec():
        return +value


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def hard_edge_kernel(x, y, spec: LimitKernelSpec, ctx: Optional[PrecisionContext] = None):
    """
    K^{(alpha, 1/r)}(x, y) by tanh-sinh quadrature of the u-integral; the
    u^alpha endpoint factor is handled by the double-exponential nodes.
    """
    ctx = ctx or get_context()
    if spec.tol is not None:
        ctx = ctx.with_tol(spec.tol)
    (a1, b1), (a2, b2) = spec.wright_parameters()
    with ctx.workprec():
        x, y = mp.mpf(x), mp.mpf(y)
        if x <= 0 or y <= 0:
            raise OutOfDomainError("the limit kernel needs x, y > 0")
        theta = spec.theta
        alpha = mp.mpf(spec.alpha)

        def integrand(u):
            if u == 0:
                return mp.zero
            return (wright_bessel(a1, b1, u * x, ctx)
                    * wright_bessel(a2, b2, mp.power(u * y, theta), ctx)
                    * mp.power(u, alpha))

        integral = quad_finite(integrand, 0, 1, ctx).value
        return theta * mp.power(y, alpha) * integral


def hard_edge_kernel_series(x, y, spec: LimitKernelSpec, ctx: Optional[PrecisionContext] = None):
    """
    The same kernel with the u-integral done termwise:

        theta y^alpha sum_{k,m} (-x)^k (-y^theta)^m
            / (k! m! Gamma(r(alpha+1+k)) Gamma(alpha+1+m/r) (alpha+1+k+m/r)).
    """
    ctx = ctx or get_context()
    r = spec.r
    with mp.workprec(ctx.bits + _wright_guard_bits(r, x) + _wright_guard_bits(mp.one / r, y)):
        x, y = mp.mpf(x), mp.mpf(y)
        if x <= 0 or y <= 0:
            raise OutOfDomainError("the limit kernel needs x, y > 0")
        alpha = mp.mpf(spec.alpha)
        yt = mp.power(y, mp.one / r)
        inner = PrecisionContext(bits=mp.prec, target_tol=ctx.target_tol, max_bits=max(ctx.max_bits, mp.prec))
        x_terms = []
        k = 0
        while True:
            t = (-x) ** k * mp.rgamma(r * (alpha + 1 + k)) / mp.factorial(k)
            x_terms.append(t)
            if k > x and abs(t) < mp.eps * max(abs(v) for v in x_terms):
                break
            k += 1

        def row(m):
            ym = (-yt) ** m * mp.rgamma(alpha + 1 + mp.mpf(m) / r) / mp.factorial(m)
            return ym * mp.fsum(t / (alpha + 1 + kk + mp.mpf(m) / r) for kk, t in enumerate(x_terms))

        total = sum_series(row, inner).value
        value = total * mp.power(y, alpha) / r
    with ctx.workprec():
        return +value


def bessel_kernel(alpha, x, y, ctx: Optional[PrecisionContext] = None):
    """
    Classical r = 1 hard-edge kernel in the (y/x)^{alpha/2} gauge:

        (y/x)^{alpha/2} [sqrt(y) J_a(2 sqrt x) J_a'(2 sqrt y) - sqrt(x) J_a'(2 sqrt x) J_a(2 sqrt y)] / (x - y),

    with diagonal J_a(2 sqrt x)^2 - J_{a+1}(2 sqrt x) J_{a-1}(2 sqrt x).
    """
    ctx = ctx or get_context()
    with ctx.workprec():
        a, x, y = mp.mpf(alpha), mp.mpf(x), mp.mpf(y)
        sx, sy = mp.sqrt(x), mp.sqrt(y)
        if x == y:
            return mp.besselj(a, 2 * sx) ** 2 - mp.besselj(a + 1, 2 * sx) * mp.besselj(a - 1, 2 * sx)
        num = (sy * mp.besselj(a, 2 * sx) * mp.besselj(a, 2 * sy, derivative=1)
               - sx * mp.besselj(a, 2 * sx, derivative=1) * mp.besselj(a, 2 * sy))
        return mp.power(y / x, a / 2) * num / (x - y)


# ---------------------------------------------------------------------------
# Convergence helpers
# ---------------------------------------------------------------------------

def fit_convergence_rate(n_list: Sequence[int], errors: Sequence[float]) -> Dict[str, float]:
    """Least-squares fit of |error| ~ C n^{-rate} on a log-log scale."""
    n = np.asarray(n_list, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    if len(n) < 2 or np.any(e == 0):
        return {"rate": float("nan"), "constant": float("nan")}
    slope, intercept = np.polyfit(np.log(n), np.log(e), 1)
    return {"rate": float(-slope), "constant": float(np.exp(intercept))}


def richardson_extrapolate(n_list: Sequence[int], values: Sequence[float], rate: float = 0.5,
                           order: int = 1) -> Dict[str, float]:
    """
    Fit values(n) = L + sum_{i<=order} A_i n^{-i rate} and return L.

    The order is capped so the fit keeps at least one degree of freedom.
    """
    n = np.asarray(n_list, dtype=float)
    v = np.asarray(values, dtype=float)
    order = max(1, min(order, len(n) - 2)) if len(n) > 2 else 1
    design = np.column_stack([np.ones_like(n)] + [n ** (-i * rate) for i in range(1, order + 1)])
    coef, _, _, _ = np.linalg.lstsq(design, v, rcond=None)
    fitted = design @ coef
    return {"limit": float(coef[0]), "order": order, "rate": rate,
            "fit_residual": float(np.max(np.abs(fitted - v)))}


# ---------------------------------------------------------------------------
# Universality
# ---------------------------------------------------------------------------

def hard_edge_scale(field_spec: FieldSpec, r: int, eq=None) -> float:
    """
    The constant c with (c n)^{-(r+1)} K_n(x/(c n)^{r+1}, .) converging to
    K^{(alpha, 1/r)}.

    For V = lam x this is lam^{1/(r+1)}; otherwise it is c_wright from the
    equilibrium density, pi c0 r^{r/(r+1)} / sin(pi/(r+1)).
    """
    if field_spec.kind == "linear":
        return field_spec.coefficients[1] ** (1.0 / (r + 1))
    eq = eq or minimize_energy(field_spec, r)
    return hard_edge_constants(eq)["c_wright"]


def universality_report(field_spec: FieldSpec, r: int, alpha: float, n_list: Sequence[int],
                        x_list: Sequence[float], ctx: Optional[PrecisionContext] = None,
                        workers: Optional[int] = None, c: Optional[float] = None,
                        diag_threshold: float = 0.02, det_threshold: float = 0.05,
                        eq=None) -> Dict[str, Any]:
    """
    Rescaled finite-n kernels against K^{(alpha, 1/r)}.

    Returns the raw probe table, a per-point summary with the fitted
    convergence rate and the Richardson limit, and a pass/fail verdict: every
    extrapolated diagonal within diag_threshold and every extrapolated 2x2
    determinant within det_threshold. The determinant error at the largest n
    is reported alongside.
    """
    ctx = ctx or get_context()
    field_spec.check_admissible()
    c = c if c is not None else hard_edge_scale(field_spec, r, eq)
    logger.info(f"universality: r={r}, alpha={alpha}, V={field_spec.label()}, c={c:.6g}")
    spec = LimitKernelSpec(alpha=alpha, r=r)
    kernel_ctx = ctx.with_tol(min(ctx.target_tol, 1e-12))

    def reference(x, y):
        return hard_edge_kernel(x, y, spec, kernel_ctx)

    weight = WeightSpec(alpha=alpha, field=field_spec, n=1, r=r)
    table = scaling_probe(weight, c, n_list, x_list, reference, ctx, workers)

    rows = []
    n_max = max(n_list)
    for (x, y, kind), group in table.groupby(["x", "y", "kind"], sort=False):
        group = group.sort_values("n")
        ns = group["n"].tolist()
        values = group["rescaled"].to_numpy()
        ref = float(group["reference"].iloc[0])
        errors = values - ref
        fit = fit_convergence_rate(ns, errors)
        rate = fit["rate"] if 0.1 <= fit["rate"] <= 2.0 else 0.5
        extrap = richardson_extrapolate(ns, values, rate) if len(ns) > 1 else {"limit": values[-1]}
        last = float(group.loc[group["n"] == n_max, "relative_error"].iloc[0])
        extrap_error = abs(extrap["limit"] - ref) / abs(ref)
        threshold = diag_threshold if kind == "diag" else det_threshold
        rows.append({
            "x": x, "y": y, "kind": kind, "reference": ref,
            "error_at_largest_n": last, "fitted_rate": fit["rate"],
            "extrapolated": extrap["limit"], "extrapolated_error": extrap_error,
            "passed": bool(extrap_error < threshold),
        })
    summary = pd.DataFrame(rows)
    passed = bool(summary["passed"].all())
    if not passed:
        logger.warning(f"universality check failed for V={field_spec.label()}")
    return {"c": c, "table": table, "summary": summary, "passed": passed}


def psi_scale(r: int) -> int:
    """
    r^r, the ratio between the two natural scalings of the hard edge.

    With c = pi c0 / sin(pi/(r+1)) the field V = x has c^{r+1} = r^{-r}, so the
    Psi-form limit is r^r K^{(alpha, 1/r)}(r^r x, r^r y).
    """
    return r ** r


def hard_edge_kernel_psi_scale(x, y, spec: LimitKernelSpec, ctx: Optional[PrecisionContext] = None,
                               series: bool = False):
    """r^r K^{(alpha, 1/r)}(r^r x, r^r y), by quadrature or by the double series."""
    ctx = ctx or get_context()
    s = psi_scale(spec.r)
    kernel = hard_edge_kernel_series if series else hard_edge_kernel
    with ctx.workprec():
        xs, ys = s * mp.mpf(x), s * mp.mpf(y)
    value = kernel(xs, ys, spec, ctx)
    with ctx.workprec():
        return s * value


def kernel_comparison_table(points: Sequence[tuple], alpha: float, r: int,
                            ctx: Optional[PrecisionContext] = None) -> pd.DataFrame:
    """
    (x, y, K_limit, K_psi, relative_difference) rows for the two limit formulas.

    K_limit is the Wright-form kernel at the Psi-form scale, see psi_scale.
    """
    ctx = ctx or get_context()
    spec = LimitKernelSpec(alpha=alpha, r=r)
    rows = []
    for x, y in points:
        k_limit = hard_edge_kernel_psi_scale(x, y, spec, ctx)
        k_psi = psi_kernel_at(x, y, alpha, r, ctx)
        with ctx.workprec():
            diff = abs(k_limit - k_psi) / (1 + abs(k_limit))
        rows.append({"x": x, "y": y, "K_limit": float(k_limit), "K_psi": float(k_psi),
                     "relative_difference": float(diff)})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Printed versus derived constants
# ---------------------------------------------------------------------------

LEDGER_FAR_POINT = mp.mpf(10) ** 6


def _far_limit(f, z):
    """lim f at infinity from two radii, for f = L + A/z + O(1/z^2)."""
    return 2 * f(2 * z) - f(z)


def _double_root_residual(coeffs, root):
    value, slope = mp.polyval(coeffs, root, derivative=True)
    return (abs(value) + abs(slope)) / max(abs(c) for c in coeffs)


def _check_alpha(beta, r: int):
    alpha = mp.mpf(beta) - mp.mpf(r - 1) / (2 * r)
    if alpha <= -1 or confluence_gap(alpha, r) < config.CONFLUENT_GAP:
        logger.info(f"beta = {beta} gives no usable alpha at r={r}; Meijer checks use alpha = 0.31")
        return mp.mpf("0.31")
    return alpha


def _ledger_checks(cfg: CurveConfig, beta, ctx: PrecisionContext) -> Dict[str, Any]:
    """One residual per ledger quantity, each computed without the closed form it tests."""
    r = cfg.r
    rr = mp.mpf(r)
    zeta_cfg = CurveConfig(r=r)
    gn = build_global_parametrix(cfg, beta, ctx)
    basis = frobenius_basis(_check_alpha(beta, r), r, ctx)
    density = curve_density_table(zeta_cfg, [], ctx)
    lower = verify_N_asymptotics(gn, angle=-mp.pi / 4, ctx=ctx)

    weights = [0.7 ** k / k for k in range(1, 6)]
    composed = composition_coefficients(weights, 5.0, 6)
    binomial = [math.comb(5, j) * (-0.7) ** j for j in range(6)]

    with ctx.workprec():
        c = cfg.scale
        q = mp.mpf(cfg.q)
        far = LEDGER_FAR_POINT * mp.expjpi(mp.mpf(1) / 3)
        support = ((rr + 1) / rr) ** (r + 1)

        def curve_mean(z):
            zeta0 = zeta_sheets(z, zeta_cfg, ctx=ctx)[0]
            return -z ** 2 * (zeta0 - 1 + 1 / z)

        def xi_lead(z):
            return z * (1 - xi_sheets(z, cfg, ctx=ctx)[0])

        mean_gap = abs(_far_limit(curve_mean, far) - (rr + 1) / (2 * rr))
        edge_gap = _double_root_residual(curve_coefficients(support, zeta_cfg, ZETA, ctx),
                                         (rr + 1) / (rr * support))
        z0 = mp.mpc("0.8", "0.3")
        psi0 = psi_j(z0, 0, basis)[0]
        c0 = mp.sin(mp.pi / (r + 1)) * mp.power(rr, -rr / (r + 1)) / mp.pi
        return {
            "c_q": _double_root_residual(curve_coefficients(q, cfg, XI, ctx), rr / (rr + 1)),
            "linear-field support endpoint": max(edge_gap, mean_gap),
            "xi_0 leading coefficient at infinity": abs(c * _far_limit(xi_lead, far) - 1),
            "C_n composition weights": max(abs(a - b) for a, b in zip(composed, binomial)),
            "last D^- entry": abs(lower["fitted_exponent"] + 1),
            "C_beta(0,0) normalisation": abs(gn.C_beta[0, 0] - mp.power(c, -mp.mpf(beta))),
            "psi_0 prefactor and argument": abs(psi0_hypergeometric(z0, basis)[0] - psi0) / abs(psi0),
            "equation solved by psi_j": max(ode_residual(z0, basis, j) for j in range(1, r + 2)),
            "hard-edge scale c for V = x": abs(density["hard_edge_coefficient"] - c0) / c0,
        }


def discrepancy_ledger(r: int, q: float = 1.0, beta: float = 0.5,
                       ctx: Optional[PrecisionContext] = None,
                       with_checks: bool = True) -> List[Dict[str, Any]]:
    """
    Entries recording where the printed closed forms and the values this code
    derives and uses disagree. Numbers are evaluated at (r, q, beta); each
    check_residual measures the property the derived value controls, computed
    independently of the closed form (None when with_checks is off).
    """
    ctx = ctx or get_context()
    cfg = CurveConfig(r=r, q=q)
    with ctx.workprec():
        rr = mp.mpf(r)
        derived_c = cfg.scale
        b = mp.mpf(beta)
        last_d = d_entry(r, -1, r)
        last_d_printed = last_d * mp.expjpi(mp.mpf(2 * (-1) ** r * (r // 2)) / r)
        entries = [
            {
                "quantity": "c_q",
                "printed": cfg.printed_c_q,
                "derived": derived_c,
                "used": "derived",
                "check": "xi polynomial at z = q has a double root at r/(r+1)",
            },
            {
                "quantity": "linear-field support endpoint",
                "printed": 2 * rr / (r + 1),
                "derived": ((rr + 1) / rr) ** (r + 1),
                "used": "derived",
                "check": "zeta polynomial has a double root there; curve mean is (r+1)/(2r)",
            },
            {
                "quantity": "xi_0 leading coefficient at infinity",
                "printed": "1 - r/(c z)",
                "derived": "1 - 1/(c z)",
                "used": "derived",
                "check": "c lim z (1 - xi_0(z)) = 1 along a ray",
            },
            {
                "quantity": "C_n composition weights",
                "printed": "m_{k/r}",
                "derived": "m_{k/r}/k",
                "used": "derived",
                "check": "point mass composes to (1 - s^{1/r} x)^n",
            },
            {
                "quantity": "last D^- entry",
                "printed": last_d_printed,
                "derived": last_d,
                "used": "derived",
                "check": "N T^-1 - I decays like 1/z in the lower half-plane (slope + 1)",
            },
            {
                "quantity": "C_beta(0,0) normalisation",
                "printed": mp.power(rr, b) * mp.power(derived_c, -b),
                "derived": mp.power(derived_c, -b),
                "used": "derived (contour mean, unit lower block diagonal)",
                "check": "contour C_beta(0,0) against c^-beta",
            },
            {
                "quantity": "psi_0 prefactor and argument",
                "printed": "(-1)^{r+1} (2 pi i)^r ... 0F_r((-1)^{r+1} z)",
                "derived": "(-1)^r (2 pi i)^r ... 0F_r(-z)",
                "used": "derived",
                "check": "entire form against psi_1 + psi_2",
            },
            {
                "quantity": "equation solved by psi_j",
                "printed": "theta prod(theta + alpha + j/r) psi + (-1)^r z psi = 0",
                "derived": "theta prod(theta + alpha + j/r) psi + z psi = 0",
                "used": "derived (identical for even r)",
                "check": "termwise ODE residual of psi_1..psi_{r+1}",
            },
            {
                "quantity": "hard-edge scale c for V = x",
                "printed": mp.one,
                "derived": mp.power(rr, -rr / (r + 1)),
                "used": "derived; the Psi-form limit is r^r K(r^r x, r^r y)",
                "check": "zeta-curve hard-edge coefficient against sin(pi/(r+1)) r^{-r/(r+1)} / pi",
            },
        ]
    residuals = _ledger_checks(cfg, beta, ctx) if with_checks else {}
    for entry in entries:
        entry["check_residual"] = residuals.get(entry["quantity"])
    return entries


def ledger_frame(entries: List[Dict[str, Any]], digits: int = 20) -> pd.DataFrame:
    def show(v):
        if isinstance(v, (mpmath.mpf, mpmath.mpc)):
            return mpmath.nstr(v, digits)
        return v

    return pd.DataFrame([{k: show(v) for k, v in e.items()} for e in entries])
