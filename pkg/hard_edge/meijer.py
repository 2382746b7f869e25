"""
Meijer-G parametrix.

The Meijer G-function

    G(z) = 1/(2 pi i) int Gamma(s) prod_{j<r} Gamma(s - alpha - j/r) z^-s ds

is evaluated through its Frobenius basis at the origin,

    G(z) = sum_h c_h z^{b_h} 0F_r(-; 1 + b_h - b_j (j != h); (-1)^{r+1} z),

with b = (0, -alpha, -alpha - 1/r, ..., -alpha - (r-1)/r) and
c_h = prod_{j != h} Gamma(b_j - b_h). Winding k times around the origin
multiplies z^{b_h} by exp(2 pi i k b_h) and z by exp(2 pi i k), so every
continuation psi_j(z) = gamma_j G(z exp(2 pi i k_j)) is exact. The
Mellin-Barnes integral is kept as an independent oracle.

The psi_j assemble quadrant by quadrant into the (r+1)x(r+1) matrix Psi_alpha
whose rows are theta-derivatives (theta = z d/dz). The module also builds the
asymptotic factor L_alpha, the constant jumps on the four rays and the
hard-edge kernel in Psi form.

Every psi_j, j = 0..r+1, solves theta prod_j (theta + alpha + j/r) psi + z psi = 0;
G itself solves the same equation with z replaced by (-1)^r z.
"""

import math
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from mpmath import mp

from . import config
from .errors import (
    ConfluentExponentError,
    ConvergenceError,
    CutEvaluationError,
    OutOfDomainError,
)
from .precision import PrecisionContext, get_context, quad_finite

logger = logging.getLogger(__name__)

RAYS = ("positive", "upper", "negative", "lower")

# (plus quadrant, minus quadrant) for each ray oriented away from the origin
_RAY_SIDES = {"positive": (1, 4), "upper": (2, 1), "negative": (3, 2), "lower": (4, 3)}


def winding(j: int, r: int) -> int:
    """Twice the winding number, 2 k_j = (-1)^{j-1} (r - 2 floor((j-1)/2))."""
    if not 1 <= j <= r + 1:
        raise OutOfDomainError(f"psi index must lie in 1..{r + 1}, got {j}")
    return (-1) ** (j - 1) * (r - 2 * ((j - 1) // 2))


def winding_number(j: int, r: int) -> Fraction:
    return Fraction(winding(j, r), 2)


# ---------------------------------------------------------------------------
# Frobenius basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrobeniusBasis:
    """
    Parameters of the Frobenius representation of G at the origin.

    Exponents and connection constants are regenerated at whatever precision
    is current, since the sums over h cancel heavily for large |z|.
    """
    alpha: Any
    r: int
    bits: int
    guard_bits: int
    gamma_scale: Tuple = ()

    @property
    def beta(self):
        return self.alpha + mp.mpf(self.r - 1) / (2 * self.r)

    @property
    def eta(self):
        return -mp.mpf(self.r) / (self.r + 1) * (self.beta + mp.mpf(1) / 2)

    @property
    def sign(self) -> int:
        return (-1) ** (self.r + 1)

    @property
    def size(self) -> int:
        return self.r + 1

    def context(self) -> PrecisionContext:
        return PrecisionContext(bits=self.bits)

    def exponents(self) -> List:
        return [mp.zero] + [-self.alpha - mp.mpf(j) / self.r for j in range(self.r)]

    def connection(self) -> List:
        b = self.exponents()
        return [mp.fprod(mp.gamma(b[j] - b[h]) for j in range(self.size) if j != h)
                for h in range(self.size)]

    def gamma_j(self, j: int):
        """gamma_j = (-1)^{r(j-1)} exp(2 pi i beta k_j)."""
        g = (-1) ** (self.r * (j - 1)) * mp.expjpi(self.beta * winding(j, self.r))
        if self.gamma_scale:
            g *= self.gamma_scale[j - 1]
        return g


def confluence_gap(alpha, r: int) -> float:
    """Distance of r*alpha from the nearest integer."""
    ra = r * float(alpha)
    return abs(ra - round(ra))


def frobenius_basis(alpha, r: int, ctx: Optional[PrecisionContext] = None) -> FrobeniusBasis:
    """
    Build the Frobenius basis for exponent alpha.

    Raises:
        ConfluentExponentError: r*alpha is an integer, so two exponents b_h
            differ by an integer and logarithmic solutions appear
    """
    ctx = ctx or get_context()
    if r < 1:
        raise OutOfDomainError(f"r must be a positive integer, got {r}")
    with mp.workprec(ctx.bits + 64):
        a = mp.mpf(alpha)
        if a <= -1:
            raise OutOfDomainError(f"alpha must exceed -1, got {mpmath.nstr(a, 8)}")
        gap = abs(r * a - mp.nint(r * a))
        if gap < config.CONFLUENT_GAP:
            raise ConfluentExponentError(
                f"r*alpha = {mpmath.nstr(r * a, 10)} is an integer: Frobenius exponents collide"
            )
        guard = 16 + 2 * int(mp.ceil(mp.log(r / gap, 2)))
    logger.debug(f"Frobenius basis r={r} alpha={mpmath.nstr(a, 8)} guard={guard} bits")
    return FrobeniusBasis(alpha=a, r=r, bits=ctx.bits, guard_bits=guard)


# ---------------------------------------------------------------------------
# Series engine
# ---------------------------------------------------------------------------

def _working_bits(z, basis: FrobeniusBasis) -> int:
    """Working precision covering the cancellation between the h-terms."""
    growth = 2 * basis.size * abs(complex(z)) ** (1.0 / basis.size)
    return basis.bits + basis.guard_bits + int(growth / math.log(2)) + 16


def _branch_log(z, side: Optional[int] = None):
    z = mp.mpmathify(z)
    if z == 0:
        raise OutOfDomainError("z = 0 is the branch point of the Meijer G-function")
    if mp.im(z) == 0 and mp.re(z) < 0:
        if side is None:
            raise CutEvaluationError(
                f"z = {mpmath.nstr(z, 8)} lies on the cut (-inf, 0]; pass side=+1 or -1"
            )
        return z, mp.mpc(mp.log(-mp.re(z)), mp.pi if side > 0 else -mp.pi)
    return z, mp.log(z)


def _hyp_stack(u, offset, shifts: Sequence, orders: int) -> List:
    """sum_m u^m (offset + m)^l / (m! prod_d (d)_m) for l = 0..orders."""
    sums = [mp.zero] * (orders + 1)
    t = mp.one
    knee = abs(u) ** (mp.one / (len(shifts) + 1)) + 2
    quiet = 0
    for m in range(config.SERIES_MAX_TERMS):
        e = offset + m
        p = t
        for l in range(orders + 1):
            sums[l] += p
            p *= e
        if m > knee:
            if abs(p) <= mp.eps * max(abs(s) for s in sums):
                quiet += 1
                if quiet >= 2:
                    return sums
            else:
                quiet = 0
        t = t * u / ((m + 1) * mp.fprod(d + m for d in shifts))
    logger.error(f"Frobenius series did not converge for |u| = {mpmath.nstr(abs(u), 5)}")
    raise ConvergenceError(f"Frobenius series failed within {config.SERIES_MAX_TERMS} terms")


def _g_stack(z, logz, two_k: int, basis: FrobeniusBasis, orders: int) -> List:
    """theta^l G(z exp(i pi two_k)) for l = 0..orders, at the current precision."""
    b = basis.exponents()
    c = basis.connection()
    w = logz + mp.j * mp.pi * two_k
    u = basis.sign * (-1) ** two_k * z
    stack = [mp.zero] * (orders + 1)
    for h in range(basis.size):
        shifts = [1 + b[h] - b[j] for j in range(basis.size) if j != h]
        partial = _hyp_stack(u, b[h], shifts, orders)
        lead = c[h] * mp.exp(b[h] * w)
        for l in range(orders + 1):
            stack[l] += lead * partial[l]
    return stack


def _psi_stacks(z, side, indices: Sequence[int], basis: FrobeniusBasis, orders: int) -> Dict[int, List]:
    """Stacks of psi_j for the requested j; call inside the working precision."""
    z, logz = _branch_log(z, side)
    wanted = set(indices)
    if 0 in wanted:
        wanted |= {1, 2}
    stacks = {}
    for j in sorted(wanted - {0}):
        g = basis.gamma_j(j)
        stacks[j] = [g * v for v in _g_stack(z, logz, winding(j, basis.r), basis, orders)]
    if 0 in indices:
        stacks[0] = [a + b for a, b in zip(stacks[1], stacks[2])]
    return stacks


def _rounded(values, bits: int):
    with mp.workprec(bits):
        return [+v for v in values]


# ---------------------------------------------------------------------------
# G and psi_j
# ---------------------------------------------------------------------------

def meijer_g(z, basis: FrobeniusBasis, k=0, side: Optional[int] = None):
    """
    G(z exp(2 pi i k)) for half-integer k, with z at its principal argument.

    On the negative axis the side selects arg z = +pi (side=+1) or -pi.
    """
    two_k = Fraction(k) * 2
    if two_k.denominator != 1:
        raise OutOfDomainError(f"winding must be a half-integer, got {k}")
    with mp.workprec(_working_bits(z, basis)):
        zz, logz = _branch_log(z, side)
        value = _g_stack(zz, logz, int(two_k), basis, 0)[0]
    return _rounded([value], basis.bits)[0]


def meijer_g_mellin_barnes(z, basis: FrobeniusBasis, ctx: Optional[PrecisionContext] = None):
    """
    Vertical-line Mellin-Barnes integral, used only as an oracle.

    The line Re s = s0 sits half a unit right of every pole. The integrand
    decays like exp(-((r+1) pi/2 - |arg z|) |t|), which sets the truncation.
    """
    ctx = ctx or basis.context()
    r, alpha = basis.r, basis.alpha
    with ctx.workprec():
        z = mp.mpmathify(z)
        if z == 0:
            raise OutOfDomainError("Mellin-Barnes integral needs z != 0")
        rate = (r + 1) * mp.pi / 2 - abs(mp.arg(z))
        if rate <= mp.pi / 8:
            raise OutOfDomainError(
                f"arg z = {mpmath.nstr(mp.arg(z), 5)} too close to the edge of the Mellin-Barnes sector"
            )
        s0 = max(mp.zero, alpha + mp.mpf(r - 1) / r) + mp.mpf(1) / 2
        logz = mp.log(z)
        shifts = [alpha + mp.mpf(j) / r for j in range(r)]

        def integrand(t):
            s = mp.mpc(s0, t)
            return mp.gamma(s) * mp.fprod(mp.gamma(s - a) for a in shifts) * mp.exp(-s * logz)

        T = (ctx.bits * mp.log(2) + 40) / rate + 20
        pieces = max(2, int(mp.ceil(2 * T / config.MB_PIECE_LENGTH)))
        edges = [-T + 2 * T * i / pieces for i in range(pieces + 1)]
        total = mp.zero
        for a, b in zip(edges[:-1], edges[1:]):
            total += quad_finite(integrand, a, b, ctx, method="gauss-legendre").value
        tail = abs(integrand(T)) + abs(integrand(-T))
        if tail > ctx.tol * max(abs(total), 1):
            raise ConvergenceError(
                f"Mellin-Barnes truncation at |t| = {mpmath.nstr(T, 5)} left tail {mpmath.nstr(tail, 3)}"
            )
        return total / (2 * mp.pi)


def meijer_g_asymptotic(z, basis: FrobeniusBasis):
    """Leading large-z term (2 pi)^{r/2}/sqrt(r+1) exp(-(r+1) z^{1/(r+1)}) z^eta."""
    r = basis.r
    with mp.workprec(basis.bits):
        z = mp.mpmathify(z)
        return (mp.power(2 * mp.pi, mp.mpf(r) / 2) / mp.sqrt(r + 1)
                * mp.exp(-(r + 1) * mp.power(z, mp.mpf(1) / (r + 1)))
                * mp.power(z, basis.eta))


def psi_j(z, j: int, basis: FrobeniusBasis, side: Optional[int] = None,
          orders: Optional[int] = None) -> List:
    """(psi_j, theta psi_j, ..., theta^orders psi_j) at z; orders defaults to r."""
    if not 0 <= j <= basis.size:
        raise OutOfDomainError(f"psi index must lie in 0..{basis.size}, got {j}")
    orders = basis.r if orders is None else orders
    with mp.workprec(_working_bits(z, basis)):
        stack = _psi_stacks(z, side, [j], basis, orders)[j]
    return _rounded(stack, basis.bits)


def psi0_hypergeometric(z, basis: FrobeniusBasis, orders: int = 0) -> List:
    """
    psi_0 through its entire form

        psi_0(z) = (-1)^r (2 pi i)^r prod_j 1/Gamma(1 + alpha + j/r) 0F_r(-; 1 + alpha + j/r; -z).
    """
    r = basis.r
    with mp.workprec(_working_bits(z, basis)):
        z = mp.mpmathify(z)
        shifts = [1 + basis.alpha + mp.mpf(j) / r for j in range(r)]
        lead = (-1) ** r * mp.power(2 * mp.pi * mp.j, r) * mp.fprod(mp.rgamma(d) for d in shifts)
        if z == 0:
            stack = [lead] + [mp.zero] * orders
        else:
            stack = [lead * v for v in _hyp_stack(-z, mp.zero, shifts, orders)]
    return _rounded(stack, basis.bits)


def _ode_coefficients(basis: FrobeniusBasis) -> List:
    """Coefficients (low to high) of theta prod_j (theta + alpha + j/r)."""
    coeffs = [mp.zero, mp.one]
    for j in range(basis.r):
        root = basis.alpha + mp.mpf(j) / basis.r
        shifted = [mp.zero] + coeffs
        coeffs = [s + root * c for s, c in zip(shifted, coeffs + [mp.zero])]
    return coeffs


def ode_residual(z, basis: FrobeniusBasis, j: Optional[int] = None, side: Optional[int] = None):
    """
    Relative residual of the hypergeometric equation for psi_j (or G itself when
    j is None), with theta-derivatives obtained termwise.
    """
    r = basis.r
    with mp.workprec(_working_bits(z, basis)):
        if j is None:
            zz, logz = _branch_log(z, side)
            stack = _g_stack(zz, logz, 0, basis, r + 1)
            sign = (-1) ** r
        else:
            zz = mp.mpmathify(z)
            stack = _psi_stacks(z, side, [j], basis, r + 1)[j]
            sign = 1
        coeffs = _ode_coefficients(basis)
        parts = [c * s for c, s in zip(coeffs, stack)] + [sign * zz * stack[0]]
        residual = abs(mp.fsum(parts)) / max(abs(p) for p in parts)
    with mp.workprec(basis.bits):
        return +residual


# ---------------------------------------------------------------------------
# Psi_alpha
# ---------------------------------------------------------------------------

@dataclass
class PsiMatrix:
    z: Any
    quadrant: int
    value: Any

    def scaled_det(self, basis: FrobeniusBasis):
        """det Psi(z) z^{r beta}, with the branch of z^{r beta} matching the quadrant."""
        side = 1 if self.quadrant in (1, 2) else -1
        with mp.workprec(basis.bits):
            _, logz = _branch_log(self.z, side)
            return mp.det(self.value) * mp.exp(basis.r * basis.beta * logz)


def _quadrant(z, quadrant: Optional[int]) -> int:
    x, y = mp.re(z), mp.im(z)
    if x == 0 and y == 0:
        raise OutOfDomainError("Psi is not defined at z = 0")
    if x != 0 and y != 0:
        found = (1 if x > 0 else 2) if y > 0 else (3 if x < 0 else 4)
        if quadrant is not None and quadrant != found:
            raise OutOfDomainError(f"z = {mpmath.nstr(z, 6)} lies in quadrant {found}, not {quadrant}")
        return found
    if quadrant is None:
        raise CutEvaluationError(f"z = {mpmath.nstr(z, 6)} is on a jump ray; pass the quadrant")
    closure = {1: x >= 0 and y >= 0, 2: x <= 0 and y >= 0, 3: x <= 0 and y <= 0, 4: x >= 0 and y <= 0}
    if quadrant not in closure or not closure[quadrant]:
        raise OutOfDomainError(f"z = {mpmath.nstr(z, 6)} is not on the boundary of quadrant {quadrant}")
    return quadrant


def _arrange(stacks: Dict[int, List], quadrant: int, n: int) -> List[List]:
    if quadrant in (1, 2):
        cols = [stacks[j] for j in range(1, n + 1)]
    else:
        cols = []
        for j in range(1, n + 1, 2):
            if j + 1 <= n:
                cols.append(stacks[j + 1])
                cols.append([-v for v in stacks[j]])
            else:
                cols.append(stacks[j])
    if quadrant in (2, 3):
        cols[0] = stacks[0]
    return cols


def psi_matrix(z, basis: FrobeniusBasis, quadrant: Optional[int] = None) -> PsiMatrix:
    """
    Psi_alpha(z). On a ray the quadrant selects the boundary value; on the
    negative axis quadrant 2 means arg z = pi and quadrant 3 means -pi.
    """
    n = basis.size
    with mp.workprec(_working_bits(z, basis)):
        z = mp.mpmathify(z)
        q = _quadrant(z, quadrant)
        side = 1 if q in (1, 2) else -1
        needed = list(range(1, n + 1)) + ([0] if q in (2, 3) else [])
        stacks = _psi_stacks(z, side, needed, basis, basis.r)
        cols = _arrange(stacks, q, n)
    with mp.workprec(basis.bits):
        value = mp.matrix(n, n)
        for c, col in enumerate(cols):
            for l in range(n):
                value[l, c] = +col[l]
    return PsiMatrix(z=z, quadrant=q, value=value)


def jump_matrix_psi(ray: str, basis: FrobeniusBasis):
    """Constant jump J with Psi_+ = Psi_- J on the given ray (oriented away from 0)."""
    n = basis.size
    with mp.workprec(basis.bits):
        J = mp.eye(n)
        if ray == "positive":
            for i in range(0, n - 1, 2):
                J[i, i] = J[i + 1, i + 1] = 0
                J[i, i + 1], J[i + 1, i] = 1, -1
        elif ray == "negative":
            e = mp.expjpi(2 * basis.beta)
            for i in range(1, n, 2):
                if i + 1 < n:
                    J[i, i] = J[i + 1, i + 1] = 0
                    J[i, i + 1], J[i + 1, i] = e, -e
                else:
                    J[i, i] = e
        elif ray in ("upper", "lower"):
            J[1, 0] = 1
        else:
            raise ValueError(f"unknown ray {ray!r}; expected one of {RAYS}")
    return J


def _ray_point(ray: str, t):
    return {"positive": t, "upper": mp.j * t, "negative": -t, "lower": -mp.j * t}[ray]


def ray_jump_residual(ray: str, t, basis: FrobeniusBasis, offset=None):
    """
    max |Psi_+ - Psi_- J| / max |Psi_-| at distance t along the ray. With an
    offset the two sides are sampled at z exp(+-i offset) instead of on the ray.
    """
    plus, minus = _RAY_SIDES[ray]
    with mp.workprec(basis.bits):
        z = _ray_point(ray, mp.mpf(t))
        if offset is None:
            P = psi_matrix(z, basis, plus).value
            M = psi_matrix(z, basis, minus).value
        else:
            P = psi_matrix(z * mp.expj(offset), basis).value
            M = psi_matrix(z * mp.expj(-offset), basis).value
        J = jump_matrix_psi(ray, basis)
        return mp.mnorm(P - M * J, 1) / mp.mnorm(M, 1)


# ---------------------------------------------------------------------------
# L_alpha
# ---------------------------------------------------------------------------

def _pair_block(n: int, sign: int):
    B = mp.zeros(n, n)
    for i in range(0, n - 1, 2):
        B[i, i + 1], B[i + 1, i] = -sign, sign
    if n % 2:
        B[n - 1, n - 1] = 1
    return B


def m_matrix(basis: FrobeniusBasis, half: int):
    """
    M^+ = diag((-1)^l) V diag(exp(2 pi i (beta + eta) k_j)) diag((-1)^{jr}) with
    V_{lj} = omega^{l k_j}, omega = exp(2 pi i/(r+1)); M^- = M^+ (+) [[0,-1],[1,0]].
    """
    r, n = basis.r, basis.size
    two_k = [winding(j, r) for j in range(1, n + 1)]
    M = mp.matrix(n, n)
    for l in range(n):
        for c in range(n):
            M[l, c] = ((-1) ** l * mp.expjpi(mp.mpf(l * two_k[c]) / n)
                       * mp.expjpi((basis.beta + basis.eta) * two_k[c]) * (-1) ** (c * r))
    if half < 0:
        M = M * _pair_block(n, 1)
    return M


def l_alpha(z, basis: FrobeniusBasis, half: Optional[int] = None):
    """
    L_alpha(z) = (2 pi)^{r/2}/sqrt(r+1) z^{-r beta/(r+1)}
                 diag(z^{-r/(2(r+1)) + l/(r+1)}) M^{+-}.

    For real z the half-plane whose boundary value is wanted must be given.
    """
    r, n = basis.r, basis.size
    with mp.workprec(basis.bits + 16):
        z = mp.mpmathify(z)
        if mp.im(z) != 0:
            half = 1 if mp.im(z) > 0 else -1
        elif half is None:
            raise CutEvaluationError(f"z = {mpmath.nstr(z, 6)} is real; pass half=+1 or -1")
        _, logz = _branch_log(z, half)
        pref = (mp.power(2 * mp.pi, mp.mpf(r) / 2) / mp.sqrt(n)
                * mp.exp(-r * basis.beta / n * logz))
        D = mp.diag([mp.exp((mp.mpf(l) / n - mp.mpf(r) / (2 * n)) * logz) for l in range(n)])
        L = pref * D * m_matrix(basis, half)
    with mp.workprec(basis.bits):
        return L * 1


def l_alpha_jump_permutation(r: int):
    """
    Permutation pairing column a with the column b for which
    k_a + k_b + 1 = 0 mod (r+1): the exponential factors of the
    asymptotic form swap this way across the negative axis.
    """
    n = r + 1
    two_k = [winding(j, r) for j in range(1, n + 1)]
    P = mp.zeros(n, n)
    for a in range(n):
        partners = [b for b in range(n) if (two_k[a] + two_k[b] + 2) % (2 * n) == 0]
        if len(partners) != 1:
            raise ArithmeticError(f"column {a} has partners {partners}")
        P[a, partners[0]] = 1
    return P


def l_alpha_jump_residual(x, basis: FrobeniusBasis):
    """|L_-^{-1} L_+ - J| on the real axis at x (either sign)."""
    with mp.workprec(basis.bits):
        x = mp.mpf(x)
        if x > 0:
            plus, minus, ray = 1, -1, "positive"
        else:
            plus, minus, ray = -1, 1, "negative"
        jump = mp.inverse(l_alpha(x, basis, minus)) * l_alpha(x, basis, plus)
        return mp.mnorm(jump - jump_matrix_psi(ray, basis), 1)


def asymptotic_residual(z, basis: FrobeniusBasis):
    """max |L^{-1} Psi diag(exp((r+1) omega^{+-k_j} z^{1/(r+1)})) - I| off the axes."""
    r, n = basis.r, basis.size
    Psi = psi_matrix(z, basis).value
    with mp.workprec(basis.bits):
        z = mp.mpmathify(z)
        half = 1 if mp.im(z) > 0 else -1
        root = mp.power(z, mp.mpf(1) / n)
        E = mp.diag([mp.exp(n * mp.expjpi(mp.mpf(half * winding(j, r)) / n) * root)
                     for j in range(1, n + 1)])
        R = mp.inverse(l_alpha(z, basis)) * Psi * E - mp.eye(n)
        return max(abs(R[i, c]) for i in range(n) for c in range(n))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def psi_det_constant(basis: FrobeniusBasis, z=None):
    """The constant in det Psi = const z^{-r beta}, measured at z (default exp(i pi/4))."""
    with mp.workprec(basis.bits):
        z = mp.expjpi(mp.mpf(1) / 4) if z is None else mp.mpmathify(z)
    return psi_matrix(z, basis).scaled_det(basis)


def gamma_sensitivity(basis: FrobeniusBasis, j: int, factor=1e-3, t=1) -> float:
    """Ratio of the worst ray residual after scaling gamma_j by (1 + factor) to the unperturbed one."""
    scale = tuple(1 + factor if i == j - 1 else 1 for i in range(basis.size))
    perturbed = replace(basis, gamma_scale=scale)
    base = max(ray_jump_residual(ray, t, basis) for ray in RAYS)
    broken = max(ray_jump_residual(ray, t, perturbed) for ray in RAYS)
    with mp.workprec(basis.bits):
        return float(broken / max(base, mp.eps))


def _slope(xs, ys) -> float:
    return float(np.polyfit(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), 1)[0])


def verify_psi(basis: FrobeniusBasis, sample_points: Optional[Sequence] = None,
               threshold: float = 1e-25, asymptotic_threshold: float = 1e-2,
               radii: Optional[Sequence] = None) -> Dict[str, Any]:
    """
    RH-Psi property suite: ray jumps, the determinant law, the jumps of L_alpha
    and the decay of L^{-1} Psi E - I at infinity.
    """
    r, n = basis.r, basis.size
    points = [mp.mpf(t) for t in (sample_points or ("0.5", "1", "3"))]
    radii = radii or [mp.mpf(10) ** e for e in (2, 3, 4)]

    rays = {ray: max(ray_jump_residual(ray, t, basis) for t in points) for ray in RAYS}

    with mp.workprec(basis.bits):
        samples = [mp.mpf(R) * mp.expjpi(f) for R in ("0.1", "1", "10")
                   for f in (mp.mpf(1) / 4, mp.mpf(3) / 4, -mp.mpf(3) / 4, -mp.mpf(1) / 4)]
    dets = [psi_matrix(z, basis).scaled_det(basis) for z in samples]
    with mp.workprec(basis.bits):
        det_spread = max(abs(d - dets[0]) for d in dets) / abs(dets[0])

    l_jumps = max(l_alpha_jump_residual(s * t, basis) for t in points for s in (1, -1))

    asymptotics = {}
    for angle in (mp.mpf(1) / 3, -mp.mpf(1) / 3):
        residuals = [asymptotic_residual(mp.mpf(R) * mp.expjpi(angle), basis) for R in radii]
        slope = _slope([mp.log(R) for R in radii], [mp.log(e) for e in residuals])
        asymptotics["upper" if angle > 0 else "lower"] = {
            "radii": [float(R) for R in radii],
            "residuals": [float(e) for e in residuals],
            "fitted_rate": slope,
        }
    rate_ok = all(a["fitted_rate"] < -0.5 / n for a in asymptotics.values())
    worst_far = max(a["residuals"][-1] for a in asymptotics.values())

    worst_ray = max(rays.values())
    report = {
        "check": "psi",
        "r": r,
        "alpha": float(basis.alpha),
        "ray_residuals": {k: float(v) for k, v in rays.items()},
        "det_constant": complex(dets[0]),
        "det_spread": float(det_spread),
        "l_alpha_jump_residual": float(l_jumps),
        "asymptotics": asymptotics,
        "expected_rate": -1.0 / n,
        "asymptotic_within_threshold": bool(worst_far < asymptotic_threshold),
        "passed": bool(worst_ray < threshold and det_spread < threshold
                       and l_jumps < threshold and rate_ok),
    }
    if not report["passed"]:
        logger.warning(f"Psi checks failed for r={r}: rays {mpmath.nstr(worst_ray, 3)}, "
                       f"det spread {mpmath.nstr(det_spread, 3)}, L jumps {mpmath.nstr(l_jumps, 3)}")
    return report


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

def psi_kernel(x, y, basis: FrobeniusBasis):
    """
    K(x, y) = (-1, 1, 0, ...) Psi_+(y)^{-1} Psi_+(x) (1, 1, 0, ...)^T / (2 pi i (x - y))
    with first-quadrant boundary values; at x = y the derivative form is used.

    Raises:
        ConvergenceError: the contraction keeps an imaginary part above
            10^{-bits/8} relative to the value, so the real kernel is not resolved
    """
    n = basis.size
    with mp.workprec(basis.bits):
        x, y = mp.mpf(x), mp.mpf(y)
    if x <= 0 or y <= 0:
        raise OutOfDomainError("the Psi-form kernel needs x, y > 0")
    bits = max(_working_bits(x, basis), _working_bits(y, basis))
    with mp.workprec(bits):
        sy = _psi_stacks(y, None, range(1, n + 1), basis, basis.r)
        Psi_y = mp.matrix(n, n)
        for c in range(n):
            for l in range(n):
                Psi_y[l, c] = sy[c + 1][l]
        e = mp.zeros(n, 1)
        e[0], e[1] = -1, 1
        row = mp.lu_solve(Psi_y.T, e)
        if x == y:
            s0 = _psi_stacks(x, None, [0], basis, basis.r + 1)[0]
            col = [s0[l + 1] / x for l in range(n)]
            denom = 2 * mp.pi * mp.j
        else:
            s0 = _psi_stacks(x, None, [0], basis, basis.r)[0]
            col = s0[:n]
            denom = 2 * mp.pi * mp.j * (x - y)
        value = mp.fsum(row[i] * col[i] for i in range(n)) / denom
    with mp.workprec(basis.bits):
        if abs(mp.im(value)) > mp.mpf(10) ** (-basis.bits // 8) * max(abs(value), 1):
            logger.warning(f"Psi kernel at x={mpmath.nstr(x, 8)}, y={mpmath.nstr(y, 8)} carries "
                           f"imaginary part {mpmath.nstr(mp.im(value), 3)}")
            raise ConvergenceError(
                f"Psi-form kernel not real to {basis.bits // 8} digits at r={basis.r}"
            )
        return +mp.re(value)


def psi_kernel_at(x, y, alpha, r: int, ctx: Optional[PrecisionContext] = None):
    """
    Psi-form kernel for any alpha > -1. When r*alpha is an integer the value
    is the mean of the kernels at alpha +- CONFLUENT_SHIFT, which is accurate
    to second order in the shift.
    """
    ctx = ctx or get_context()
    if confluence_gap(alpha, r) >= config.CONFLUENT_GAP:
        return psi_kernel(x, y, frobenius_basis(alpha, r, ctx))
    shifted = replace(ctx, bits=ctx.bits + 64)
    with mp.workprec(shifted.bits):
        a = mp.mpf(alpha)
        delta = mp.mpf(config.CONFLUENT_SHIFT)
        lo = psi_kernel(x, y, frobenius_basis(a - delta, r, shifted))
        hi = psi_kernel(x, y, frobenius_basis(a + delta, r, shifted))
        value = (lo + hi) / 2
    with ctx.workprec():
        return +value
