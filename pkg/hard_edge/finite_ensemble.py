"""
Finite-n Muttalib-Borodin ensemble at theta = 1/r.

Bimoments of the weight x^alpha exp(-n V(x)), the biorthogonal families
p_j(x), q_j(x^(1/r)) read off an unpivoted LDU factorization of the bimoment
matrix, the multiple-orthogonality characterization of p_n, and the exact
correlation kernel with its hard-edge rescaling.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence

import mpmath
import numpy as np
import pandas as pd
from mpmath import mp

from . import config
from .errors import ConvergenceError, SingularSystemError
from .models import WeightSpec
from .precision import (
    PrecisionContext,
    eval_gamma,
    get_context,
    quad_semiinfinite,
    tanh_sinh_nodes,
    with_escalation,
)
from .utils import make_header, ordered_sweep, write_report

logger = logging.getLogger(__name__)

MOMENT_METHODS = ("auto", "gamma", "quadrature")


def _doubled(ctx: PrecisionContext) -> PrecisionContext:
    """Twice the bits, allowed past the escalation cap (residual checks only)."""
    bits = 2 * ctx.bits
    return replace(ctx, bits=bits, max_bits=max(ctx.max_bits, bits))


def _check_method(spec: WeightSpec, method: str) -> str:
    if method not in MOMENT_METHODS:
        raise ValueError(f"moment method must be one of {MOMENT_METHODS}, got {method!r}")
    if method == "auto":
        return "gamma" if spec.is_linear else "quadrature"
    if method == "gamma" and not spec.is_linear:
        raise ValueError("the gamma closed form needs a linear field")
    return method


def weight(spec: WeightSpec, x, shift=0):
    """w_{alpha+shift}(x) = x^(alpha+shift) exp(-n V(x)) at the current precision."""
    x = mp.mpf(x)
    return mp.power(x, mp.mpf(spec.alpha) + shift) * mp.exp(-spec.n * spec.field.mp_value(x))


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def _closed_moment(spec: WeightSpec, exponent, ctx: PrecisionContext):
    """int_0^inf x^exponent exp(-lam x) dx = Gamma(exponent+1) / lam^(exponent+1)."""
    with ctx.workprec():
        lam = mp.mpf(spec.n) * mp.mpf(spec.field.coefficients[1])
        a = mp.mpf(exponent) + 1
        return eval_gamma(a, ctx) / mp.power(lam, a)


def _quad_moment(spec: WeightSpec, exponent, ctx: PrecisionContext):
    with ctx.workprec():
        e = mp.mpf(exponent)

        def f(x):
            return mp.power(x, e) * mp.exp(-spec.n * spec.field.mp_value(x))

        return quad_semiinfinite(f, spec.decay_rate, ctx, power=max(float(e), 0.0)).value


def _moment_tol(ctx: PrecisionContext):
    """Relative accuracy the shared quadrature rule must reach."""
    return mp.ldexp(1, -(3 * ctx.bits) // 4)


def _cutoff(spec: WeightSpec, power: float, ctx: PrecisionContext) -> float:
    """Right end L past which x^p exp(-n V(x)) is negligible for every p in use."""
    target = -0.75 * ctx.bits * math.log(2) - 8

    def logf(x, p):
        return p * math.log(x) - spec.n * float(np.real(spec.field(x)))

    powers = {max(spec.alpha, 0.0), max(power, 0.0)}
    cut = 1.0
    for _ in range(200):
        done = True
        for p in powers:
            peak = max(logf(cut * k / 64, p) for k in range(1, 65))
            if logf(cut, p) - peak > target or logf(2 * cut, p) > logf(cut, p):
                done = False
                break
        if done:
            return cut
        cut *= 1.5
    raise ConvergenceError("could not find a truncation point for the weight")


def _quadrature_moments(spec: WeightSpec, count: int, ctx: PrecisionContext) -> List:
    """
    Moments int x^(alpha + t/r) exp(-nV) dx, t < count, on one shared rule.

    Tanh-sinh levels are added until every moment is stable; the fractional
    powers are built by repeated multiplication with x^(1/r).
    """
    r = spec.r
    cut = _cutoff(spec, spec.alpha + (count - 1) / r, ctx)
    with ctx.workprec():
        alpha = mp.mpf(spec.alpha)
        inv_r = mp.one / r
        edges = [mp.zero] + [mp.mpf(cut) / 2 ** k for k in (3, 2, 1, 0)]
        sums = [mp.zero] * count
        previous = None
        limit = _moment_tol(ctx)
        for level in range(config.TANH_SINH_MAX_LEVEL + 1):
            for lo, hi in zip(edges[:-1], edges[1:]):
                for x, w in tanh_sinh_nodes(lo, hi, level, ctx.bits):
                    term = w * mp.power(x, alpha) * mp.exp(-spec.n * spec.field.mp_value(x))
                    u = mp.power(x, inv_r)
                    for t in range(count):
                        sums[t] += term
                        term *= u
            values = [s * mp.ldexp(1, -level) for s in sums]
            if previous is not None and level >= 4:
                change = max(abs(v - p) / abs(v) for v, p in zip(values, previous))
                if change <= limit:
                    return values
            previous = values
    logger.error(f"shared moment rule did not settle for {count} moments")
    raise ConvergenceError("moment quadrature failed to converge")


def _gamma_moments(spec: WeightSpec, count: int, ctx: PrecisionContext) -> List:
    """Same moments for V = lam x / n, one gamma per residue class mod r."""
    r = spec.r
    with ctx.workprec():
        lam = mp.mpf(spec.n) * mp.mpf(spec.field.coefficients[1])
        alpha = mp.mpf(spec.alpha)
        out = [None] * count
        for rho in range(min(r, count)):
            a = alpha + 1 + mp.mpf(rho) / r
            value = eval_gamma(a, ctx) / mp.power(lam, a)
            for t in range(rho, count, r):
                out[t] = value
                value = value * a / lam
                a += 1
        return out


def fractional_moments(spec: WeightSpec, count: int, ctx: Optional[PrecisionContext] = None,
                       method: str = "auto") -> List:
    """[int_0^inf x^(t/r) w_alpha(x) dx for t in range(count)]."""
    ctx = ctx or get_context()
    method = _check_method(spec, method)
    if method == "gamma":
        return _gamma_moments(spec, count, ctx)
    return _quadrature_moments(spec, count, ctx)


def bimoment(spec: WeightSpec, j: int, k: int, ctx: Optional[PrecisionContext] = None,
             method: str = "auto"):
    """
    int_0^inf x^(j + k/r) w_alpha(x) dx.

    Args:
        spec: weight parameters
        j, k: non-negative degrees in x and in x^(1/r)
        ctx: precision context
        method: "gamma" (linear V only), "quadrature" or "auto"
    """
    if j < 0 or k < 0:
        raise ValueError(f"bimoment degrees must be non-negative, got ({j}, {k})")
    ctx = ctx or get_context()
    method = _check_method(spec, method)
    with ctx.workprec():
        exponent = mp.mpf(spec.alpha) + j + mp.mpf(k) / spec.r
    if method == "gamma":
        return _closed_moment(spec, exponent, ctx)
    return _quad_moment(spec, exponent, ctx)


def bimoment_matrix(spec: WeightSpec, size: int, ctx: Optional[PrecisionContext] = None,
                    method: str = "auto") -> mpmath.matrix:
    """G_{jk} = bimoment(j, k) for j, k < size."""
    ctx = ctx or get_context()
    r = spec.r
    moments = fractional_moments(spec, (size - 1) * (r + 1) + 1, ctx, method)
    with ctx.workprec():
        G = mp.matrix(size, size)
        for j in range(size):
            for k in range(size):
                G[j, k] = moments[r * j + k]
        return G


def shifted_weight_moment(spec: WeightSpec, j: int, k: int, ctx: Optional[PrecisionContext] = None,
                          method: str = "auto"):
    """int_0^inf x^k w_{alpha + (j-1)/r}(x) dx for the j-th multiple-orthogonality weight."""
    if not 1 <= j <= spec.r:
        raise ValueError(f"weight index j must be in 1..{spec.r}, got {j}")
    ctx = ctx or get_context()
    method = _check_method(spec, method)
    with ctx.workprec():
        exponent = mp.mpf(spec.alpha) + mp.mpf(j - 1) / spec.r + k
    if method == "gamma":
        return _closed_moment(spec, exponent, ctx)
    return _quad_moment(spec, exponent, ctx)


# ---------------------------------------------------------------------------
# Biorthogonal system
# ---------------------------------------------------------------------------

def ldu_factor(G: mpmath.matrix, ctx: PrecisionContext):
    """
    G = L diag(h) U^T with L, U unit lower-triangular.

    Doolittle order without pivoting, so row j of L^{-1} stays the
    coefficient vector of a degree-j polynomial.
    """
    size = G.rows
    with ctx.workprec():
        L = mp.eye(size)
        U = mp.eye(size)
        h = [mp.zero] * size
        for i in range(size):
            d = G[i, i] - mp.fsum(L[i, m] * h[m] * U[i, m] for m in range(i))
            if abs(d) <= 64 * ctx.eps * abs(G[i, i]):
                raise SingularSystemError(
                    f"leading principal minor of order {i + 1} vanishes at {ctx.bits} bits"
                )
            h[i] = d
            for j in range(i + 1, size):
                L[j, i] = (G[j, i] - mp.fsum(L[j, m] * h[m] * U[i, m] for m in range(i))) / d
                U[j, i] = (G[i, j] - mp.fsum(L[i, m] * h[m] * U[j, m] for m in range(i))) / d
        return L, h, U


def _unit_lower_inverse(L: mpmath.matrix) -> mpmath.matrix:
    size = L.rows
    X = mp.eye(size)
    for i in range(size):
        for j in range(i):
            X[i, j] = -mp.fsum(L[i, m] * X[m, j] for m in range(j, i))
    return X


def _max_abs(M: mpmath.matrix):
    return max(abs(M[i, j]) for i in range(M.rows) for j in range(M.cols))


@dataclass(frozen=True)
class BiorthSystem:
    """Monic p_j (rows of P, powers of x) and q_j (rows of Q, powers of x^(1/r)) with h_j."""
    spec: WeightSpec
    P: Any
    Q: Any
    h: List[Any]
    bits: int
    residual: Any
    reconstruction: Any

    @property
    def size(self) -> int:
        return self.P.rows

    def _contract(self, M, u):
        with mp.workprec(self.bits):
            u = mp.mpmathify(u)
            powers = [mp.one]
            for _ in range(1, self.size):
                powers.append(powers[-1] * u)
            return [mp.fsum(M[j, i] * powers[i] for i in range(j + 1)) for j in range(self.size)]

    def p_values(self, x) -> List[Any]:
        """[p_j(x) for j < size]."""
        return self._contract(self.P, x)

    def q_values(self, y) -> List[Any]:
        """[q_j(y^(1/r)) for j < size]."""
        with mp.workprec(self.bits):
            u = mp.root(mp.mpf(y), self.spec.r)
        return self._contract(self.Q, u)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.model_dump(),
            "size": self.size,
            "bits": self.bits,
            "P": self.P,
            "Q": self.Q,
            "h": self.h,
            "residual": self.residual,
            "reconstruction": self.reconstruction,
        }


def _biorthogonalize_at(spec: WeightSpec, size: int, ctx: PrecisionContext, method: str) -> BiorthSystem:
    G = bimoment_matrix(spec, size, ctx, method)
    L, h, U = ldu_factor(G, ctx)
    with ctx.workprec():
        P = _unit_lower_inverse(L)
        Q = _unit_lower_inverse(U)
        reconstruction = _max_abs(L * mp.diag(h) * U.T - G) / _max_abs(G)
    if reconstruction > mp.ldexp(1, -ctx.bits // 2):
        logger.warning(f"LDU reconstruction error {mpmath.nstr(reconstruction, 3)} at {ctx.bits} bits")

    fine = _doubled(ctx)
    G_fine = bimoment_matrix(spec, size, fine, method)
    with fine.workprec():
        M = P * G_fine * Q.T
        residual = mp.zero
        for j in range(size):
            for k in range(size):
                if j != k:
                    residual = max(residual, abs(M[j, k]) / abs(h[j]))
    return BiorthSystem(spec=spec, P=P, Q=Q, h=h, bits=ctx.bits,
                        residual=residual, reconstruction=reconstruction)


def biorthogonalize(spec: WeightSpec, ctx: Optional[PrecisionContext] = None,
                    size: Optional[int] = None, method: str = "auto") -> BiorthSystem:
    """
    Biorthogonal families p_0..p_{size-1}, q_0..q_{size-1} for the weight.

    The biorthogonality residual max_{j != k} |int p_j q_k w| / |h_j| is
    measured against moments recomputed at twice the working precision;
    precision is doubled until it meets the context tolerance.

    Raises:
        SingularSystemError: a principal minor vanishes at the escalation cap
        PrecisionExhaustedError: the residual never meets tolerance
    """
    ctx = ctx or get_context()
    size = size or spec.n
    while True:
        try:
            system = _biorthogonalize_at(spec, size, ctx, method)
        except SingularSystemError:
            if 2 * ctx.bits > ctx.max_bits:
                logger.error(f"bimoment matrix singular up to {ctx.bits} bits")
                raise
            ctx = ctx.escalate()
            continue
        if system.residual <= ctx.tol:
            logger.debug(f"biorthogonal system n={spec.n} size={size} r={spec.r} at {ctx.bits} bits")
            return system
        logger.info(
            f"biorthogonality residual {mpmath.nstr(system.residual, 3)} above tolerance "
            f"at {ctx.bits} bits"
        )
        ctx = ctx.escalate()


def save_biorth_system(system: BiorthSystem, path, header: Optional[dict] = None):
    return write_report(path, system.to_dict(), header or make_header("biorthogonalize", bits=system.bits))


# ---------------------------------------------------------------------------
# Multiple orthogonal polynomial
# ---------------------------------------------------------------------------

class MopPolynomial(NamedTuple):
    coefficients: List[Any]
    residual: Any
    conditions: List[tuple]


def mop_conditions(degree: int, r: int) -> List[tuple]:
    """(j, k) pairs: int p(x) x^k w_{alpha+(j-1)/r}(x) dx = 0 for k <= (degree - j) // r."""
    return [(j, k) for j in range(1, r + 1) for k in range((degree - j) // r + 1)]


def mop_polynomial(spec: WeightSpec, degree: Optional[int] = None,
                   ctx: Optional[PrecisionContext] = None, method: str = "auto") -> MopPolynomial:
    """
    Monic p_n from the multiple-orthogonality conditions.

    There are floor((n-j)/r) + 1 conditions for weight j, n in total, so the
    system for the lower coefficients is square for every n. Coefficients
    are returned in ascending powers of x.
    """
    ctx = ctx or get_context()
    degree = spec.n if degree is None else degree
    if degree == 0:
        return MopPolynomial([mp.one], mp.zero, [])
    conditions = mop_conditions(degree, spec.r)
    cache = {}

    def moment(j, m):
        if (j, m) not in cache:
            cache[(j, m)] = shifted_weight_moment(spec, j, m, ctx, method)
        return cache[(j, m)]

    with ctx.workprec():
        A = mp.matrix(degree, degree)
        rhs = mp.matrix(degree, 1)
        for row, (j, k) in enumerate(conditions):
            for i in range(degree):
                A[row, i] = moment(j, k + i)
            rhs[row] = -moment(j, k + degree)
        try:
            sol = mp.lu_solve(A, rhs)
        except ZeroDivisionError as e:
            logger.error(f"multiple-orthogonality system singular at degree {degree}")
            raise SingularSystemError(f"MOP system for degree {degree} is singular") from e
        coefficients = [sol[i] for i in range(degree)] + [mp.one]
        residual = mp.zero
        for j, k in conditions:
            value = mp.fsum(coefficients[i] * moment(j, k + i) for i in range(degree + 1))
            residual = max(residual, abs(value) / abs(moment(j, k + degree)))
    return MopPolynomial(coefficients, residual, conditions)


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

def kernel_finite(spec: WeightSpec, system: BiorthSystem, x, y):
    """K_n(x, y) = w_alpha(x) sum_{j<n} p_j(x) q_j(y^(1/r)) / h_j."""
    pv = system.p_values(x)
    qv = system.q_values(y)
    with mp.workprec(system.bits):
        total = mp.fsum(pv[j] * qv[j] / system.h[j] for j in range(system.size))
        return weight(spec, x) * total


def _kernel_power(spec: WeightSpec, size: int) -> float:
    return spec.alpha + (size - 1) * (1 + 1.0 / spec.r)


def trace_check(spec: WeightSpec, system: BiorthSystem, tol: float = 1e-12) -> Dict[str, Any]:
    """int_0^inf K_n(x, x) dx against n."""
    ctx = PrecisionContext(bits=system.bits, target_tol=tol)
    value = quad_semiinfinite(lambda x: kernel_finite(spec, system, x, x), spec.decay_rate, ctx,
                              power=_kernel_power(spec, system.size)).value
    rel = abs(value - system.size) / system.size
    return {"value": value, "expected": system.size, "relative_error": rel, "passed": bool(rel < 1e-10)}


def reproducing_check(spec: WeightSpec, system: BiorthSystem, x, y, tol: float = 1e-12) -> Dict[str, Any]:
    """int_0^inf K_n(x, s) K_n(s, y) ds against K_n(x, y)."""
    ctx = PrecisionContext(bits=system.bits, target_tol=tol)
    value = quad_semiinfinite(
        lambda s: kernel_finite(spec, system, x, s) * kernel_finite(spec, system, s, y),
        spec.decay_rate, ctx, power=_kernel_power(spec, system.size),
    ).value
    expected = kernel_finite(spec, system, x, y)
    rel = abs(value - expected) / abs(expected)
    return {"value": value, "expected": expected, "relative_error": rel, "passed": bool(rel < 1e-8)}


def laguerre_kernel(n: int, alpha, x, y, ctx: Optional[PrecisionContext] = None):
    """
    Laguerre kernel for the weight x^alpha e^{-nx}, the r = 1 finite kernel.

    K(x, y) = x^alpha e^{-nx} sum_{j<n} L_j(nx) L_j(ny) j! n^(alpha+1) / Gamma(j+alpha+1).
    """
    ctx = ctx or get_context()
    with ctx.workprec():
        a = mp.mpf(alpha)
        x, y = mp.mpf(x), mp.mpf(y)
        total = mp.fsum(
            mp.laguerre(j, a, n * x) * mp.laguerre(j, a, n * y) * mp.factorial(j) / mp.gamma(j + a + 1)
            for j in range(n)
        )
        return mp.power(x, a) * mp.exp(-n * x) * mp.power(n, a + 1) * total


def gauge_invariant_det2(kernel: Callable, x, y):
    """K(x,x) K(y,y) - K(x,y) K(y,x), unchanged by K -> g(x)/g(y) K."""
    return kernel(x, x) * kernel(y, y) - kernel(x, y) * kernel(y, x)


def correlation_det(spec: WeightSpec, system: BiorthSystem, points: Sequence):
    """det[K_n(x_i, x_j)]."""
    with mp.workprec(system.bits):
        size = len(points)
        M = mp.matrix(size, size)
        for i, a in enumerate(points):
            for j, b in enumerate(points):
                M[i, j] = kernel_finite(spec, system, a, b)
        return mp.det(M)


def kernel_table(spec: WeightSpec, system: BiorthSystem, points: Sequence[tuple], scale=1) -> pd.DataFrame:
    """Rows (n, x, y, K, rescaledK) with rescaledK = K(x/s, y/s) / s."""
    rows = []
    with mp.workprec(system.bits):
        s = mp.mpf(scale)
        for x, y in points:
            rows.append({
                "n": spec.n,
                "x": x,
                "y": y,
                "K": mpmath.nstr(kernel_finite(spec, system, x, y), 25),
                "rescaledK": mpmath.nstr(kernel_finite(spec, system, mp.mpf(x) / s, mp.mpf(y) / s) / s, 25),
            })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Hard-edge scaling probe
# ---------------------------------------------------------------------------

def _probe_values(spec: WeightSpec, c, xs, pairs, ctx: PrecisionContext):
    system = biorthogonalize(spec, ctx)
    with mp.workprec(system.bits):
        scale = (mp.mpf(c) * spec.n) ** (spec.r + 1)

        def rescaled(a, b):
            return kernel_finite(spec, system, mp.mpf(a) / scale, mp.mpf(b) / scale) / scale

        diag = [rescaled(x, x) for x in xs]
        dets = [gauge_invariant_det2(rescaled, a, b) for a, b in pairs]
    return diag + dets


def scaling_probe(spec_base: WeightSpec, c, n_list: Sequence[int], x_list: Sequence[float],
                  reference: Callable, ctx: Optional[PrecisionContext] = None,
                  workers: Optional[int] = None) -> pd.DataFrame:
    """
    Rescaled kernel (cn)^{-(r+1)} K_n(x/(cn)^{r+1}, y/(cn)^{r+1}) against a limit.

    Args:
        spec_base: weight; its n is replaced by each entry of n_list
        c: hard-edge constant (1 for V = x)
        n_list: ensemble sizes
        x_list: points of the diagonal; every pair also gives a 2x2 determinant
        reference: limit kernel K(x, y)
        ctx: starting precision; each n is rerun at doubled bits until stable
        workers: joblib workers over n

    Returns:
        DataFrame with columns n, x, y, kind, rescaled, reference,
        relative_error, bits
    """
    ctx = ctx or get_context()
    xs = list(x_list)
    pairs = [(xs[i], xs[j]) for i in range(len(xs)) for j in range(i + 1, len(xs))]

    with ctx.workprec():
        ref_diag = [reference(x, x) for x in xs]
        ref_dets = [gauge_invariant_det2(reference, a, b) for a, b in pairs]
    refs = ref_diag + ref_dets

    def probe(n):
        spec = spec_base.with_n(n)
        logger.info(f"scaling probe: n={n}, r={spec.r}, alpha={spec.alpha}")
        return with_escalation(lambda work: _probe_values(spec, c, xs, pairs, work), ctx)

    results = ordered_sweep(probe, list(n_list), workers)
    rows = []
    labels = [(x, x, "diag") for x in xs] + [(a, b, "det2") for a, b in pairs]
    for n, est in zip(n_list, results):
        for (x, y, kind), value, ref in zip(labels, est.value, refs):
            rows.append({
                "n": n,
                "x": x,
                "y": y,
                "kind": kind,
                "rescaled": float(value),
                "reference": float(ref),
                "relative_error": float(abs(value - ref) / abs(ref)),
                "bits": est.bits,
            })
    return pd.DataFrame(rows)
