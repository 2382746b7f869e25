"""
Precision core: working-precision handle and the shared numeric engines
(gamma, quadrature, polynomial roots, guarded series summation).

All routines run on mpmath numbers. The working precision is carried by an
immutable PrecisionContext and applied locally with ``mp.workprec``.
"""

import math
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Callable, List, NamedTuple, Optional, Sequence

import mpmath
from mpmath import mp

from . import config
from .errors import (
    ConfigError,
    ConvergenceError,
    PoleError,
    PrecisionExhaustedError,
)

logger = logging.getLogger(__name__)

BigComplex = mpmath.mpc


@dataclass(frozen=True)
class PrecisionContext:
    """Binary working precision plus the tolerance composite results must meet."""

    bits: int = config.PRECISION_BITS
    target_tol: float = config.TOLERANCE
    max_bits: int = config.MAX_BITS

    def __post_init__(self):
        if self.bits < 64:
            raise ConfigError(f"precision must be at least 64 bits, got {self.bits}")
        if not self.target_tol > 0:
            raise ConfigError(f"target tolerance must be positive, got {self.target_tol}")

    @property
    def digits(self) -> int:
        return int(self.bits * math.log10(2))

    @property
    def eps(self):
        with self.workprec():
            return mp.mpf(2) ** (-self.bits)

    @property
    def tol(self):
        with self.workprec():
            return mp.mpf(self.target_tol)

    def workprec(self):
        return mp.workprec(self.bits)

    def with_tol(self, target_tol: float) -> "PrecisionContext":
        return replace(self, target_tol=target_tol)

    def escalate(self) -> "PrecisionContext":
        """Return a copy at twice the precision."""
        bits = 2 * self.bits
        if bits > self.max_bits:
            raise PrecisionExhaustedError(
                f"precision escalation past cap: {bits} > {self.max_bits} bits"
            )
        logger.info(f"Escalating precision {self.bits} -> {bits} bits")
        return replace(self, bits=bits)


_default_context = None


def get_context() -> PrecisionContext:
    """Get or create the environment-configured default context."""
    global _default_context
    if _default_context is None:
        _default_context = PrecisionContext()
    return _default_context


class Estimate(NamedTuple):
    """A numeric value with an absolute error estimate."""
    value: Any
    error: Any


class Escalated(NamedTuple):
    value: Any
    error: Any
    bits: int


def distance(a, b):
    """Max-abs distance between numbers, mpmath matrices or nested sequences."""
    if isinstance(a, mpmath.matrix):
        return max((abs(a[i, j] - b[i, j]) for i in range(a.rows) for j in range(a.cols)),
                   default=mp.zero)
    if isinstance(a, (list, tuple)):
        return max((distance(x, y) for x, y in zip(a, b)), default=mp.zero)
    if isinstance(a, Estimate):
        return distance(a.value, b.value)
    return abs(a - b)


def magnitude(a):
    if isinstance(a, mpmath.matrix):
        return mp.mnorm(a, 1) if a.rows and a.cols else mp.zero
    if isinstance(a, (list, tuple)):
        return max((magnitude(x) for x in a), default=mp.zero)
    if isinstance(a, Estimate):
        return magnitude(a.value)
    return abs(a)


def with_escalation(fn: Callable[[PrecisionContext], Any], ctx: PrecisionContext,
                    relative: bool = True) -> Escalated:
    """
    Rerun ``fn`` at doubled precision until two successive results agree.

    Args:
        fn: computation taking a PrecisionContext
        ctx: starting context
        relative: compare relative to the result magnitude

    Returns:
        Escalated: the higher-precision value, the observed change and its bits
    """
    current = fn(ctx)
    while True:
        finer = ctx.escalate()
        refined = fn(finer)
        with finer.workprec():
            change = distance(refined, current)
            scale = max(magnitude(refined), mp.one) if relative else mp.one
            if change <= ctx.tol * scale:
                return Escalated(refined, change, finer.bits)
        logger.info(f"Values still moving at {finer.bits} bits (change {mpmath.nstr(change, 5)})")
        ctx, current = finer, refined


# ---------------------------------------------------------------------------
# Gamma function
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _spouge_coefficients(a: int, wp: int):
    with mp.workprec(wp):
        coeffs = [mp.sqrt(2 * mp.pi)]
        fact = mp.one
        for k in range(1, a):
            if k > 1:
                fact *= (k - 1)
            c = (-1) ** (k - 1) / fact * mp.power(a - k, k - mp.mpf(0.5)) * mp.exp(a - k)
            coeffs.append(c)
        return tuple(coeffs)


def eval_gamma_spouge(x, ctx: Optional[PrecisionContext] = None):
    """Spouge approximation of Gamma(x) for x >= 1 at the context precision."""
    ctx = ctx or get_context()
    a = int(math.ceil(ctx.bits * math.log(2) / math.log(2 * math.pi))) + 2
    wp = 2 * ctx.bits + 20
    coeffs = _spouge_coefficients(a, wp)
    with mp.workprec(wp):
        z = mp.mpf(x) - 1
        s = coeffs[0]
        for k in range(1, a):
            s += coeffs[k] / (z + k)
        value = mp.power(z + a, z + mp.mpf(0.5)) * mp.exp(-z - a) * s
    with ctx.workprec():
        return +value


def eval_gamma(x, ctx: Optional[PrecisionContext] = None):
    """
    Gamma function of a real argument.

    Uses the Spouge series for x >= 1, the recurrence on [0.5, 1) and the
    reflection formula below 0.5.
    """
    ctx = ctx or get_context()
    with mp.workprec(ctx.bits + 20):
        x = mp.mpf(x)
        if x <= 0 and x == mp.floor(x):
            raise PoleError(f"Gamma has a pole at {x}")
        if x < 0.5:
            value = mp.pi / (mp.sinpi(x) * eval_gamma(1 - x, replace(ctx, bits=ctx.bits + 20)))
        elif x < 1:
            value = eval_gamma_spouge(x + 1, replace(ctx, bits=ctx.bits + 20)) / x
        else:
            value = eval_gamma_spouge(x, replace(ctx, bits=ctx.bits + 20))
    with ctx.workprec():
        return +value


def rgamma_shifts(base, count: int, step: int, ctx: Optional[PrecisionContext] = None):
    """Return [1/Gamma(base + step*k) for k < count] using the recurrence."""
    ctx = ctx or get_context()
    with ctx.workprec():
        base = mp.mpf(base)
        out = []
        if base <= 0 and base == mp.floor(base):
            value = mp.zero
            k0 = 0
            while base + step * k0 <= 0 and k0 < count:
                out.append(mp.zero)
                k0 += 1
            if k0 == count:
                return out
            value = 1 / eval_gamma(base + step * k0, ctx)
        else:
            k0 = 0
            value = 1 / eval_gamma(base, ctx)
        out.append(value)
        for k in range(k0 + 1, count):
            arg = base + step * (k - 1)
            for i in range(step):
                value /= arg + i
            out.append(value)
        return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _tanh_sinh_level(level: int, bits: int):
    """
    Nodes of one tanh-sinh refinement level on [-1, 1].

    Each node is (d, w, side): d = distance to the nearer endpoint, w the
    weight without the step factor, side = +1 (near 1), -1 (near -1), 0 (centre).
    Level 0 holds t = k for integer k; level L > 0 only the new odd multiples of 2^-L.
    """
    with mp.workprec(bits + 20):
        t_max = mp.asinh(8 * (bits * mp.log(2) + 10) / mp.pi)
        h = mp.ldexp(1, -level)
        nodes = []
        k = 0 if level == 0 else 1
        stride = 1 if level == 0 else 2
        while k * h <= t_max:
            t = k * h
            u = mp.pi / 2 * mp.sinh(t)
            d = 2 / (mp.exp(2 * u) + 1)
            w = mp.pi / 2 * mp.cosh(t) / mp.cosh(u) ** 2
            if k == 0:
                nodes.append((mp.one, w, 0))
            else:
                nodes.append((d, w, 1))
                nodes.append((d, w, -1))
            k += stride
        return tuple(nodes)


def _tanh_sinh_sum(f, a, b, level, bits):
    total = mp.zero
    for x, w in tanh_sinh_nodes(a, b, level, bits):
        total += w * f(x)
    return total


def tanh_sinh_nodes(a, b, level: int, bits: int):
    """
    Yield (x, weight) for the nodes a tanh-sinh level adds on [a, b].

    Weights exclude the step factor 2^-level, so summing levels 0..L and
    multiplying by 2^-L reproduces the level-L rule. Used where many moments
    share one rule.
    """
    half = (b - a) / 2
    for d, w, side in _tanh_sinh_level(level, bits):
        if side == 0:
            x = a + half
        elif side > 0:
            x = b - half * d
        else:
            x = a + half * d
        yield x, w * half


def quad_finite(f: Callable, a, b, ctx: Optional[PrecisionContext] = None,
                tol=None, method: str = "tanh-sinh") -> Estimate:
    """
    Integrate f over [a, b].

    Args:
        f: integrand, may carry algebraic or logarithmic endpoint singularities
        a, b: finite limits
        ctx: precision context
        tol: absolute tolerance (defaults to target_tol relative to the value)
        method: "tanh-sinh" (endpoint-singular integrands) or
            "gauss-legendre" (smooth integrands)

    Returns:
        Estimate: value and error estimate
    """
    ctx = ctx or get_context()
    with ctx.workprec():
        a, b = mp.mpf(a), mp.mpf(b)
        if a == b:
            return Estimate(mp.zero, mp.zero)
        if method == "gauss-legendre":
            value, err = mp.quad(f, [a, b], method="gauss-legendre", error=True)
            limit = tol if tol is not None else ctx.tol * max(abs(value), 1)
            if err > limit:
                raise ConvergenceError(
                    f"Gauss-Legendre on [{mpmath.nstr(a, 5)}, {mpmath.nstr(b, 5)}] "
                    f"stalled at error {mpmath.nstr(err, 3)}"
                )
            return Estimate(value, err)

        step_sum = _tanh_sinh_sum(f, a, b, 0, ctx.bits)
        previous = None
        for level in range(1, config.TANH_SINH_MAX_LEVEL + 1):
            h = mp.ldexp(1, -level)
            step_sum += _tanh_sinh_sum(f, a, b, level, ctx.bits)
            value = step_sum * h
            if previous is not None and level >= 4:
                err = abs(value - previous)
                limit = tol if tol is not None else ctx.tol * max(abs(value), 1)
                if err <= limit:
                    return Estimate(value, err)
            previous = value
        logger.error(f"tanh-sinh did not converge on [{mpmath.nstr(a, 5)}, {mpmath.nstr(b, 5)}]")
        raise ConvergenceError(
            f"tanh-sinh quadrature failed to converge after level {config.TANH_SINH_MAX_LEVEL}"
        )


def quad_semiinfinite(f: Callable, decay_rate, ctx: Optional[PrecisionContext] = None,
                      tol=None, power=0) -> Estimate:
    """
    Integrate f over [0, inf) for |f(x)| <= C x^power exp(-decay_rate x).

    The range is cut at L where the tail bound |f(L)| / (decay_rate - power/L)
    drops below tolerance; the bound is folded into the error estimate.
    """
    ctx = ctx or get_context()
    with ctx.workprec():
        lam = mp.mpf(decay_rate)
        if lam <= 0:
            raise ConvergenceError("semi-infinite quadrature needs a positive decay rate")
        peak = max(mp.mpf(power) / lam, 1 / lam)
        head_scale = max(abs(f(peak / 2)), abs(f(peak)), abs(f(2 * peak))) * peak
        cut = 4 * peak
        for _ in range(200):
            rate = lam - mp.mpf(power) / cut
            if rate > lam / 4:
                fc = abs(f(cut))
                tail = fc / rate
                if tail <= ctx.tol * head_scale / 100 and abs(f(2 * cut)) <= fc:
                    break
            cut *= 2
        else:
            raise ConvergenceError("tail bound never met for the semi-infinite integral")
        pieces = [mp.zero, cut / 8, cut / 4, cut / 2, cut]
        value = mp.zero
        error = tail
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            part = quad_finite(f, lo, hi, ctx, tol=None if tol is None else tol / 4)
            value += part.value
            error += part.error
        limit = tol if tol is not None else ctx.tol * max(abs(value), ctx.eps)
        if tail > limit:
            raise ConvergenceError("tail bound exceeds tolerance")
        return Estimate(value, error)


# ---------------------------------------------------------------------------
# Polynomial roots
# ---------------------------------------------------------------------------

class RootSet(NamedTuple):
    roots: List[Any]
    residual: Any
    min_separation: Any
    degenerate: bool


def poly_roots(coeffs: Sequence, ctx: Optional[PrecisionContext] = None) -> RootSet:
    """
    All roots of a polynomial given highest-degree coefficient first.

    Roots are sorted by (Re, Im). Near-multiple roots are flagged in the
    result and logged rather than silently returned.
    """
    ctx = ctx or get_context()
    with ctx.workprec():
        coeffs = [mp.mpmathify(c) for c in coeffs]
        if coeffs[0] == 0:
            raise ConvergenceError("leading coefficient must be nonzero")
        degree = len(coeffs) - 1
        if degree == 0:
            return RootSet([], mp.zero, mp.inf, False)
        roots = None
        for attempt, (steps, extra) in enumerate([(100, 2 * ctx.bits), (400, 4 * ctx.bits),
                                                  (2000, 8 * ctx.bits)]):
            try:
                roots, _ = mp.polyroots(coeffs, maxsteps=steps, extraprec=extra, error=True)
                break
            except mpmath.libmp.libhyper.NoConvergence:
                logger.info(f"polyroots retry {attempt + 1} with more steps")
        if roots is None:
            raise ConvergenceError(f"root finder failed for degree {degree} polynomial")
        roots = [mp.mpc(z) for z in roots]
        roots.sort(key=lambda z: (float(z.real), float(z.imag)))
        scale = max(abs(z) for z in roots) + 1
        residual = max(abs(mp.polyval(coeffs, z)) / max(abs(coeffs[0]) * scale ** degree, ctx.eps)
                       for z in roots)
        if degree > 1:
            separation = min(abs(roots[i] - roots[j])
                             for i in range(degree) for j in range(i + 1, degree))
        else:
            separation = mp.inf
        degenerate = separation < mp.ldexp(scale, -ctx.bits // 4)
        if degenerate:
            logger.warning(f"Near-multiple roots: separation {mpmath.nstr(separation, 3)}")
        return RootSet(roots, residual, separation, bool(degenerate))


# ---------------------------------------------------------------------------
# Series summation
# ---------------------------------------------------------------------------

def _tail_bound(last_abs, prev_abs, gap):
    if prev_abs == 0:
        return None
    rho = (last_abs / prev_abs) ** (mp.one / gap)
    if rho >= 1:
        return None
    return last_abs * rho / (1 - rho)


def sum_series(term: Callable[[int], Any], ctx: Optional[PrecisionContext] = None,
               tol=None, start: int = 0, max_terms: int = None,
               zero_run: int = 8) -> Estimate:
    """
    Sum term(k) for k >= start with a ratio-based tail majorant.

    The sum stops once |t_k| rho / (1 - rho) falls below the tolerance, where
    rho is the per-index decay ratio between the last two nonzero terms.
    Terms must eventually decay superlinearly.
    """
    ctx = ctx or get_context()
    max_terms = max_terms or config.SERIES_MAX_TERMS
    with ctx.workprec():
        total = mp.zero
        last = prev = None
        last_k = prev_k = None
        zeros = 0
        quiet = 0
        for k in range(start, start + max_terms):
            t = term(k)
            total += t
            if t == 0:
                zeros += 1
                if last is None and zeros >= zero_run:
                    return Estimate(total, mp.zero)
                continue
            zeros = 0
            prev, prev_k = last, last_k
            last, last_k = abs(t), k
            if prev is None:
                continue
            bound = _tail_bound(last, prev, last_k - prev_k)
            limit = tol if tol is not None else ctx.eps * max(abs(total), ctx.eps)
            if bound is None or bound > limit:
                quiet = 0
                continue
            # two consecutive small bounds guard against a dip before the terms peak
            quiet += 1
            if quiet >= 2:
                return Estimate(total, bound)
        logger.error(f"series did not decay within {max_terms} terms")
        raise ConvergenceError(f"series failed to converge within {max_terms} terms")


def sum_ratio_series(first, ratio: Callable[[int], Any], ctx: Optional[PrecisionContext] = None,
                     tol=None, max_terms: int = None) -> Estimate:
    """
    Sum t_0 + t_1 + ... where t_0 = first and t_{k+1} = t_k * ratio(k).

    Same stopping rule as sum_series; terms are produced by the recurrence so
    no special function is evaluated per term.
    """
    ctx = ctx or get_context()
    state = {"k": -1, "t": None}

    def term(k):
        if k == 0:
            state["t"] = mp.mpmathify(first)
        else:
            state["t"] = state["t"] * ratio(k - 1)
        state["k"] = k
        return state["t"]

    return sum_series(term, ctx, tol=tol, max_terms=max_terms)
