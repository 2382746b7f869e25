"""
Equilibrium lab.

Minimizes the scalar logarithmic energy

    1/2 iint log 1/|x-y| + 1/2 iint log 1/|x^(1/r) - y^(1/r)| + int V

over probability densities on [0, M], then builds everything the hard-edge
analysis derives from the minimizer: the auxiliary measures mu_1..mu_{r-1},
the g-functions, the phi-functions, f_m, D_0, the conformal map f and the
hard-edge constants.

The density is piecewise constant on a graded grid t_i = M (i/N)^{r+1}, which
resolves the s^{-r/(r+1)} blow-up at the hard edge. All work is float64.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Dict, List, Optional

import numpy as np
from mpmath import mp
from numpy.polynomial.legendre import leggauss

from . import config
from .errors import (
    ConfigError,
    ConvergenceError,
    CutEvaluationError,
    OutOfDomainError,
    SingularSystemError,
)
from .models import FieldSpec
from .precision import PrecisionContext
from .spectral_curve import CurveConfig, curve_density_table, soft_edge
from .utils import make_header, read_report, write_report

logger = logging.getLogger(__name__)

_GL_X, _GL_W = leggauss(8)
_GL_AVG = _GL_W / 2
_CUT_SHIFT = 1e-13
_CHUNK = 256


def sheet_exponent(j: int) -> int:
    """e_j = (-1)^j floor(j/2), the Omega power attached to sheet j."""
    return (-1) ** j * (j // 2)


@dataclass
class EquilibriumData:
    """Discretized equilibrium measure plus the quantities read off from it."""
    r: int
    field: FieldSpec
    edges: np.ndarray
    rho0: np.ndarray
    support: int
    q: float
    ell: float
    moments: List[float] = field(default_factory=list)
    c0: float = float("nan")
    rho_j: List[np.ndarray] = field(default_factory=list)
    rho_j_grid: List[np.ndarray] = field(default_factory=list)
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def cap(self) -> float:
        return float(self.edges[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return self.rho0 * self.widths

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def density(self, s):
        """Piecewise-constant density of mu_0 at s (zero outside [0, M])."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.searchsorted(self.edges, s, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.rho0))
        out = np.zeros_like(s)
        out[inside] = self.rho0[idx[inside]]
        return out

    def moment(self, a: float) -> float:
        """m_a = int s^a dmu_0(s), exact for the piecewise-constant density."""
        lo, hi = self.edges[:-1], self.edges[1:]
        return float(np.sum(self.rho0 * (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)))

    def cumulative(self, x: float) -> float:
        """mu_0([0, x])."""
        lo, hi = self.edges[:-1], self.edges[1:]
        part = np.clip(np.minimum(hi, x) - lo, 0, None)
        return float(np.sum(self.rho0 * part))


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

def graded_grid(cap: float, size: int, r: int) -> np.ndarray:
    return cap * (np.arange(size + 1) / size) ** (r + 1)


def _cell_nodes(edges: np.ndarray) -> np.ndarray:
    lo, hi = edges[:-1], edges[1:]
    return lo[:, None] + (hi - lo)[:, None] * (1 + _GL_X[None, :]) / 2


def _g2(t):
    """Second antiderivative of log|t|: t^2/2 log|t| - 3t^2/4."""
    t = np.asarray(t, dtype=float)
    out = -0.75 * t * t
    nz = t != 0
    out[nz] += 0.5 * t[nz] ** 2 * np.log(np.abs(t[nz]))
    return out


def _log_sum(u, v, r):
    """log S(u, v) with S = sum_k u^k v^{r-1-k}, so u^r - v^r = (u - v) S."""
    s = np.zeros(np.broadcast(u, v).shape)
    for k in range(r):
        s = s + u ** k * v ** (r - 1 - k)
    return np.log(s)


def _energy_matrix(edges: np.ndarray, r: int) -> np.ndarray:
    """
    Cell-averaged interaction kernel -2 log|x-y| + log S(x^(1/r), y^(1/r)).

    Neighbouring cells (|i-j| <= 2) use the exact double integral of log|x-y|;
    the rest use an 8x8 Gauss-Legendre rule.
    """
    n = len(edges) - 1
    nodes = _cell_nodes(edges)
    roots = nodes ** (1.0 / r)
    log_avg = np.empty((n, n))
    log_s = np.zeros((n, n))
    for i0 in range(0, n, 32):
        i1 = min(i0 + 32, n)
        d = np.abs(nodes[i0:i1, None, :, None] - nodes[None, :, None, :])
        with np.errstate(divide="ignore"):
            block = np.log(d)
        log_avg[i0:i1] = np.einsum("abkl,k,l->ab", block, _GL_AVG, _GL_AVG)
        if r > 1:
            ls = _log_sum(roots[i0:i1, None, :, None], roots[None, :, None, :], r)
            log_s[i0:i1] = np.einsum("abkl,k,l->ab", ls, _GL_AVG, _GL_AVG)

    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    for off in range(-2, 3):
        i = np.arange(max(0, -off), min(n, n - off))
        j = i + off
        a, b, c, d = lo[i], hi[i], lo[j], hi[j]
        exact = (_g2(b - c) - _g2(b - d) - _g2(a - c) + _g2(a - d)) / (width[i] * width[j])
        log_avg[i, j] = exact
    return -2.0 * log_avg + log_s


def _field_averages(edges: np.ndarray, field_spec: FieldSpec) -> np.ndarray:
    nodes = _cell_nodes(edges)
    return np.real(field_spec(nodes)) @ _GL_AVG


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    cond = u - css / ind > 0
    k = ind[cond][-1]
    theta = css[cond][-1] / k
    return np.maximum(v - theta, 0.0)


def _energy(kernel, b, w):
    return 0.5 * w @ kernel @ w + b @ w


def _projected_descent(kernel, b, w0, max_iter):
    """
    Accelerated projected gradient on the simplex with Armijo backtracking.

    Returns the iterate, the iteration count and the final relative energy change.
    """
    lip = max(float(np.max(np.abs(np.linalg.eigvalsh(kernel)))) / 8, 1e-8)
    w = _project_simplex(w0)
    y = w.copy()
    t = 1.0
    e_w = _energy(kernel, b, w)
    change = np.inf
    for it in range(1, max_iter + 1):
        grad = kernel @ y + b
        e_y = _energy(kernel, b, y)
        while True:
            cand = _project_simplex(y - grad / lip)
            diff = cand - y
            if _energy(kernel, b, cand) <= e_y + grad @ diff + 0.5 * lip * diff @ diff + 1e-15:
                break
            lip *= 2.0
        e_cand = _energy(kernel, b, cand)
        if e_cand > e_w:
            # restart momentum on an energy increase
            y, t = w.copy(), 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = cand + ((t - 1) / t_new) * (cand - w)
        change = abs(e_w - e_cand) / max(abs(e_cand), 1.0)
        w, e_w, t = cand, e_cand, t_new
        if change < 1e-12 and it > 50:
            return w, it, change
    logger.warning(f"projected descent hit {max_iter} iterations (relative change {change:.2e})")
    return w, max_iter, change


def _kkt_solve(kernel, b, m):
    """Solve K w + b = lam on the first m cells with sum(w) = 1."""
    system = np.zeros((m + 1, m + 1))
    system[:m, :m] = kernel[:m, :m]
    system[:m, m] = -1.0
    system[m, :m] = 1.0
    rhs = np.concatenate([-b[:m], [1.0]])
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"KKT system on {m} cells is singular: {e}")
    return sol[:m], sol[m]


def _polish_support(kernel, b, m0):
    """Adjust the support [0, t_m) until the discrete KKT conditions hold."""
    n = len(b)
    m = max(2, min(m0, n))
    seen = set()
    for _ in range(4 * n):
        seen.add(m)
        w_s, lam = _kkt_solve(kernel, b, m)
        if w_s[-1] < 0 and m > 2 and (m - 1) not in seen:
            m -= 1
            continue
        full = np.zeros(n)
        full[:m] = w_s
        grad = kernel @ full + b
        if m < n and grad[m] < lam and (m + 1) not in seen:
            m += 1
            continue
        return full, lam, m
    raise ConvergenceError("support adjustment did not settle")


def _solve_on_grid(field_spec, r, cap, size, max_iter):
    edges = graded_grid(cap, size, r)
    kernel = _energy_matrix(edges, r)
    b = _field_averages(edges, field_spec)
    widths = np.diff(edges)
    w0 = np.where(edges[1:] <= cap / 2, widths, 0.0)
    w0 = w0 / w0.sum()
    w, iterations, change = _projected_descent(kernel, b, w0, max_iter)
    rho = w / widths
    above = np.nonzero(rho > config.EQ_DENSITY_THRESHOLD * rho.max())[0]
    m0 = int(above[-1]) + 1 if len(above) else size
    full, lam, m = _polish_support(kernel, b, m0)
    negative = np.sum(full < 0)
    if negative:
        logger.warning(f"{negative} cells carry negative mass after the KKT polish")
    grad = kernel @ full + b
    outside = grad[m:] - lam
    return {
        "edges": edges,
        "weights": full,
        "lam": lam,
        "support": m,
        "iterations": iterations,
        "energy": _energy(kernel, b, full),
        "descent_change": change,
        "kkt_gap_outside": float(outside.min()) if len(outside) else float("inf"),
    }


# ---------------------------------------------------------------------------
# Potentials and fits
# ---------------------------------------------------------------------------

def _log_potential(edges, rho, x):
    """int log|x - s| rho(s) ds for the piecewise-constant density, exact."""
    x = np.asarray(x, dtype=float)[:, None]
    lo, hi = edges[None, :-1], edges[None, 1:]

    def f1(t):
        out = -t.copy()
        nz = t != 0
        out[nz] += t[nz] * np.log(np.abs(t[nz]))
        return out

    return (f1(x - lo) - f1(x - hi)) @ rho


def _theta_potential(edges, rho, x, r):
    """int log|x^(1/r) - s^(1/r)| rho(s) ds."""
    base = _log_potential(edges, rho, x)
    if r == 1:
        return base
    nodes = _cell_nodes(edges)
    widths = np.diff(edges)
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x))
    u = x ** (1.0 / r)
    v = nodes ** (1.0 / r)
    for i0 in range(0, len(x), _CHUNK):
        i1 = min(i0 + _CHUNK, len(x))
        ls = _log_sum(u[i0:i1, None, None], v[None, :, :], r)
        out[i0:i1] = (ls @ _GL_AVG) @ (rho * widths)
    return base - out


def variational_residual(eq: EquilibriumData, x) -> np.ndarray:
    """Euler-Lagrange defect: potentials minus V(x) + ell."""
    x = np.asarray(x, dtype=float)
    lhs = _log_potential(eq.edges, eq.rho0, x) + _theta_potential(eq.edges, eq.rho0, x, eq.r)
    return lhs - np.real(eq.field(x)) - eq.ell


def _effective_nodes(edges, gamma):
    lo, hi = edges[:-1], edges[1:]
    avg = (hi ** (1 - gamma) - lo ** (1 - gamma)) / ((1 - gamma) * (hi - lo))
    return avg ** (-1.0 / gamma)


def _window(eq: EquilibriumData, lo_frac, hi_frac):
    mid = eq.midpoints[: eq.support]
    idx = np.nonzero((mid > lo_frac * eq.q) & (mid < hi_frac * eq.q))[0]
    if len(idx) < 4:
        raise ConvergenceError(
            f"only {len(idx)} cells in the fit window ({lo_frac}q, {hi_frac}q); refine the grid"
        )
    return idx


def _fit_c0(eq: EquilibriumData) -> float:
    r = eq.r
    gamma = r / (r + 1)
    idx = _window(eq, *config.EQ_FIT_WINDOW)
    s = _effective_nodes(eq.edges, gamma)[idx]
    y = eq.rho0[idx] * s ** gamma
    p = 1.0 / (r + 1)
    design = np.stack([np.ones_like(s), s ** p, s ** (2 * p)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    if not coef[0] > 0:
        logger.error(f"hard-edge fit returned a non-positive coefficient {coef[0]:.3e}")
        raise ConvergenceError("density is not consistent with the s^{-r/(r+1)} law near 0")
    return float(coef[0])


def _golden_min(fn, a, b, iters=60):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def edge_exponents(eq: EquilibriumData) -> Dict[str, float]:
    """
    Fit the hard-edge exponent and the soft-edge exponent of rho_0.

    The hard edge uses rho ~ s^{-gamma} (c0 + c1 s^{1/(r+1)}) with gamma found
    by golden-section search; the soft edge fits rho^2 linearly in s to locate
    q and then regresses log rho on log(q - s).
    """
    r = eq.r
    idx = _window(eq, *config.EQ_FIT_WINDOW)
    p = 1.0 / (r + 1)

    def misfit(gamma):
        s = _effective_nodes(eq.edges, gamma)[idx]
        y = eq.rho0[idx] * s ** gamma
        design = np.stack([np.ones_like(s), s ** p], axis=1)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return float(np.sum(((design @ coef - y) / y) ** 2))

    gamma = _golden_min(misfit, 0.05, 0.98)

    soft = _window(eq, 0.80, 0.97)
    mid = eq.midpoints[soft]
    rho = eq.rho0[soft]
    slope, intercept = np.polyfit(mid, rho ** 2, 1)
    q_fit = -intercept / slope if slope < 0 else eq.q
    keep = mid < q_fit
    if keep.sum() >= 3:
        kappa, _ = np.polyfit(np.log(q_fit - mid[keep]), np.log(rho[keep]), 1)
    else:
        kappa = float("nan")
    return {
        "hard_exponent": -gamma,
        "hard_expected": -r / (r + 1),
        "soft_exponent": float(kappa),
        "soft_expected": 0.5,
        "q_fit": float(q_fit),
    }


# ---------------------------------------------------------------------------
# Auxiliary measures mu_j
# ---------------------------------------------------------------------------

def _check_j(r, j):
    if not 1 <= j <= r - 1:
        raise OutOfDomainError(f"auxiliary measure index j must be in 1..{r - 1}, got {j}")


def nu_density(r: int, j: int, a, s):
    """
    Density of the auxiliary measure nu^a_j at s on Delta_j.

    It is the jump of 1 / (r z^{1-1/r} (z^{1/r} - Omega^{e_j} a^{1/r})) across
    Delta_j divided by 2 pi i, i.e. Im of the upper boundary value over pi.
    """
    _check_j(r, j)
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    if j % 2 == 1:
        if np.any(s >= 0):
            raise OutOfDomainError(f"Delta_{j} is the negative half-line")
        root = np.abs(s) ** (1.0 / r) * np.exp(1j * np.pi / r)
    else:
        if np.any(s <= 0):
            raise OutOfDomainError(f"Delta_{j} is the positive half-line")
        root = s.astype(complex) ** (1.0 / r)
    upper = root ** (r - 1)
    phase = np.exp(2j * np.pi * sheet_exponent(j) / r)
    psi = 1.0 / (r * upper * (root - phase * a ** (1.0 / r)))
    return np.imag(psi) / np.pi


def mu_j_from_mu0(eq: EquilibriumData, j: int, s):
    """Density of mu_j at s: int nu^a_j(s) dmu_0(a) by cell-wise Gauss-Legendre."""
    _check_j(eq.r, j)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    nodes = _cell_nodes(eq.edges)[: eq.support].ravel()
    weights = (eq.rho0[: eq.support, None] * eq.widths[: eq.support, None] * _GL_AVG[None, :]).ravel()
    out = np.empty(len(s))
    for i0 in range(0, len(s), _CHUNK):
        i1 = min(i0 + _CHUNK, len(s))
        vals = nu_density(eq.r, j, nodes[None, :], s[i0:i1, None])
        out[i0:i1] = vals @ weights
    return out


def mu_j_mass(eq: EquilibriumData, j: int, step: float = 0.05) -> float:
    """
    Total mass of mu_j by trapezoid quadrature in log|s|.

    The integrand decays like |s|^{1/(r+1)} at 0 and |s|^{-1/r} at infinity in
    this variable, so a wide window with a uniform step is spectrally accurate.
    """
    _check_j(eq.r, j)
    sign = -1.0 if j % 2 == 1 else 1.0
    y = np.arange(math.log(eq.q) - 80, math.log(eq.q) + 80 + step, step)
    s = np.exp(y)
    dens = mu_j_from_mu0(eq, j, sign * s)
    return float(np.sum(dens * s) * step)


# ---------------------------------------------------------------------------
# g-functions
# ---------------------------------------------------------------------------

def _h(t):
    """t log t - t with principal log, zero at t = 0."""
    t = np.asarray(t, dtype=complex)
    out = -t
    nz = t != 0
    out[nz] += t[nz] * np.log(t[nz])
    return out


def _prepare(z, side, cut_start=None):
    z = complex(z)
    if z.imag == 0:
        on_cut = cut_start is None or z.real <= cut_start
        if on_cut:
            if side not in (1, -1):
                raise CutEvaluationError(f"z = {z.real} lies on a cut; pass side=+1 or side=-1")
            z = complex(z.real, side * _CUT_SHIFT * max(1.0, abs(z)))
    return z


def _g0(eq: EquilibriumData, z: complex) -> complex:
    lo, hi = eq.edges[:-1], eq.edges[1:]
    return complex(np.sum(eq.rho0 * (_h(z - lo) - _h(z - hi))))


def d_function(eq: EquilibriumData, l: int, z: complex) -> complex:
    """
    D_l(z) = int log(z^{1/r} - Omega^{+-e_l} a^{1/r}) dmu_0(a), exact per cell.

    With w = z^{1/r}, c the Omega phase and t = c a^{1/r} - w, each cell
    contributes r rho_i [F(c b_hi) - F(c b_lo)] for the antiderivative
    F(u) = sum_k C(r-1,k) w^{r-1-k} t^{k+1}/(k+1) (log(-t) - 1/(k+1)).
    """
    r = eq.r
    sign = 1 if z.imag > 0 else -1
    w = z ** (1.0 / r)
    c = np.exp(2j * np.pi * sign * sheet_exponent(l) / r)
    roots = eq.edges[: eq.support + 1] ** (1.0 / r)

    t = c * roots - w
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(t == 0, 0, np.log(-t + 0j))
    prim = np.zeros(len(t), dtype=complex)
    for k in range(r):
        tk = t ** (k + 1)
        prim += math.comb(r - 1, k) * w ** (r - 1 - k) * tk / (k + 1) * (lg - 1.0 / (k + 1))
    return complex(r * np.sum(eq.rho0[: eq.support] * np.diff(prim)))


def g_function(eq: EquilibriumData, j: int, z, side: Optional[int] = None) -> complex:
    """
    g_j(z) = int log(z - s) dmu_j(s) with the principal branch.

    g_0 is integrated exactly against the stored density; g_j for j >= 1 uses
    g_{l-1} - g_l = D_l, which follows from the explicit construction of mu_j,
    and g_r is 0. Real z needs a side on the cut.
    """
    r = eq.r
    if not 0 <= j <= r:
        raise OutOfDomainError(f"g-function index must be in 0..{r}, got {j}")
    if j == r:
        return 0j
    z = _prepare(z, side, cut_start=eq.q if j == 0 else None)
    if z == 0:
        raise OutOfDomainError("g-functions are evaluated off the branch point z = 0")
    value = _g0(eq, z)
    for l in range(1, j + 1):
        value -= d_function(eq, l, z)
    return value


def g_asymptotic_residual(eq: EquilibriumData, j: int, z) -> complex:
    """
    g_{j-1} - g_j - (1/r) log z + sum_k Omega^{+-k e_j} m_{k/r} z^{-k/r} / k,
    which decays like 1/z (j = 0 checks g_0 - log z).
    """
    z = complex(z)
    r = eq.r
    if j == 0:
        return g_function(eq, 0, z) - np.log(z)
    sign = 1 if z.imag >= 0 else -1
    value = g_function(eq, j - 1, z) - g_function(eq, j, z) - np.log(z) / r
    for k in range(1, r):
        phase = np.exp(2j * np.pi * sign * k * sheet_exponent(j) / r)
        value += phase * eq.moment(k / r) * z ** (-k / r) / k
    return complex(value)


def vector_lagrange_constant(eq: EquilibriumData, samples: int = 40) -> Dict[str, float]:
    """
    Constant of g_{0,+} + g_{0,-} - g_{1,+} - V on (0, q).

    Returns the mean and the spread over interior sample points.
    """
    xs = eq.q * np.linspace(0.05, 0.95, samples)
    vals = []
    for x in xs:
        g1 = g_function(eq, 1, x, side=1) if eq.r > 1 else 0j
        total = g_function(eq, 0, x, side=1) + g_function(eq, 0, x, side=-1) - g1
        vals.append(total.real - float(np.real(eq.field(x))))
    vals = np.array(vals)
    return {"ell": float(vals.mean()), "spread": float(vals.max() - vals.min())}


# ---------------------------------------------------------------------------
# phi-functions, f_m, D_0 and f
# ---------------------------------------------------------------------------

class PhiBundle:
    """
    Evaluators for g_j, phi_j, f_m, D_0 and f built on an EquilibriumData.

    phi_j and everything built from them live on D(0, q) minus the real line;
    real points need a side.
    """

    def __init__(self, eq: EquilibriumData):
        self.eq = eq
        self.r = eq.r
        self.omega = np.exp(2j * np.pi / (eq.r + 1))

    def _domain(self, z, side):
        z = _prepare(z, side)
        if abs(z) >= self.eq.q:
            raise OutOfDomainError(f"|z| = {abs(z):.4g} outside D(0, q = {self.eq.q:.4g})")
        if z == 0:
            raise OutOfDomainError("phi-functions are singular at z = 0; use the f_m instead")
        return z

    def g(self, j: int, z, side: Optional[int] = None) -> complex:
        return g_function(self.eq, j, z, side)

    def g_all(self, z) -> List[complex]:
        r = self.r
        g0 = _g0(self.eq, z)
        out = [g0]
        for l in range(1, r):
            out.append(out[-1] - d_function(self.eq, l, z))
        out.append(0j)
        return out

    def phi_all(self, z, side: Optional[int] = None) -> List[complex]:
        r = self.r
        z = self._domain(z, side)
        sign = 1 if z.imag > 0 else -1
        g = self.g_all(z)
        v = complex(self.eq.field(z))
        out = [-g[0] + 0.5 * g[1] + 0.5 * (v + self.eq.ell) + sign * np.pi * 1j]
        for j in range(1, r):
            const = sign * (-1) ** j * (r - j) / r * np.pi * 1j
            out.append(0.5 * g[j - 1] - g[j] + 0.5 * g[j + 1] + const)
        return out

    def phi(self, j: int, z, side: Optional[int] = None) -> complex:
        if not 0 <= j <= self.r - 1:
            raise OutOfDomainError(f"phi index must be in 0..{self.r - 1}, got {j}")
        return self.phi_all(z, side)[j]

    def fm_coefficients(self, m: int, upper: bool = True) -> np.ndarray:
        """Prefix sums of omega^{m((-1)^k floor((k+1)/2) + 1/2)} (conjugated below)."""
        terms = [self.omega ** (m * ((-1) ** k * ((k + 1) // 2) + 0.5)) for k in range(self.r)]
        coeffs = np.array(list(accumulate(terms)))
        return coeffs if upper else np.conj(coeffs)

    def f_m(self, m: int, z, side: Optional[int] = None) -> complex:
        if not 1 <= m <= self.r:
            raise OutOfDomainError(f"f_m index must be in 1..{self.r}, got {m}")
        z = self._domain(z, side)
        phis = np.array(self.phi_all(z))
        coeffs = self.fm_coefficients(m, upper=z.imag > 0)
        return complex(-z ** (-m / (self.r + 1)) * (coeffs @ phis))

    def sum_identity_residual(self, z, l: int, side: Optional[int] = None) -> complex:
        """
        sum_m omega^{+-(-1)^{l-1}(1/2 + floor(l/2)) m} z^{m/(r+1)} f_m(z) minus
        sum_j (j+1) phi_j - (r+1) sum_{j>=l} phi_j.
        """
        r = self.r
        z = self._domain(z, side)
        sign = 1 if z.imag > 0 else -1
        phis = self.phi_all(z)
        lhs = 0j
        for m in range(1, r + 1):
            expo = sign * (-1) ** (l - 1) * (0.5 + l // 2) * m
            lhs += self.omega ** expo * z ** (m / (r + 1)) * self.f_m(m, z)
        rhs = sum((j + 1) * phis[j] for j in range(r)) - (r + 1) * sum(phis[l:])
        return complex(lhs - rhs)

    def d0(self, z, side: Optional[int] = None) -> np.ndarray:
        """Diagonal of D_0(z) at exponent 1."""
        r = self.r
        phis = self.phi_all(z, side)
        prefactor = 2.0 / (r + 1) * sum((j + 1) * phis[j] for j in range(r))
        return np.array([np.exp(prefactor - 2 * sum(phis[l:])) for l in range(r + 1)])

    def d0_identity_residual(self, z, side: Optional[int] = None) -> complex:
        """
        -2 sum (r-j) phi_j minus (r+1) g_0 - r (V + ell), after removing the
        constant -+2 pi i K carried by the phi constants.

        phi_0 carries +-pi i and phi_j (j >= 1) carries +-(-1)^j (r-j)/r pi i,
        so -2 sum (r-j) phi_j picks up -+2 pi i times
        K = r + sum_{j=1}^{r-1} (-1)^j (r-j)^2 / r.
        """
        r = self.r
        z = self._domain(z, side)
        sign = 1 if z.imag > 0 else -1
        phis = self.phi_all(z)
        lhs = -2 * sum((r - j) * phis[j] for j in range(r))
        rhs = (r + 1) * _g0(self.eq, z) - r * (complex(self.eq.field(z)) + self.eq.ell)
        k_const = r + sum((-1) ** j * (r - j) ** 2 / r for j in range(1, r))
        return complex(lhs - rhs + sign * 2j * np.pi * k_const)

    def f_at_zero(self, m: int = 1, radius: Optional[float] = None, nodes: int = 64) -> complex:
        """f_m(0) as the mean of f_m over a circle (nodes avoid the real axis)."""
        radius = radius or self.eq.q / 4
        theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
        return complex(np.mean([self.f_m(m, radius * np.exp(1j * t)) for t in theta]))

    def f(self, z, side: Optional[int] = None) -> complex:
        """Conformal map f(z) = z (2 f_1(z) / (r+1)^2)^{r+1}."""
        z = complex(z)
        if z == 0:
            return 0j
        z = self._domain(z, side)
        return z * (2 * self.f_m(1, z) / (self.r + 1) ** 2) ** (self.r + 1)


def phi_and_fm(eq: EquilibriumData) -> PhiBundle:
    return PhiBundle(eq)


def conformal_check(bundle: PhiBundle, radius: Optional[float] = None) -> Dict[str, object]:
    """
    f(0) = 0, f maps small positive reals to positive reals, f' != 0 near 0.

    The derivative is taken by central differences on a circle of radius
    q/8 (default).
    """
    q = bundle.eq.q
    radius = radius or q / 8
    xs = q * np.array([0.01, 0.03, 0.06, 0.1])
    images = [bundle.f(x, side=1) for x in xs]
    positive = all(v.real > 0 and abs(v.imag) <= 0.05 * abs(v) for v in images)
    h = radius * 1e-4
    derivs = []
    for t in 2 * np.pi * (np.arange(16) + 0.5) / 16:
        z = radius * np.exp(1j * t)
        derivs.append((bundle.f(z + h) - bundle.f(z - h)) / (2 * h))
    min_deriv = float(min(abs(d) for d in derivs))
    report = {
        "f_at_zero": 0.0,
        "positive_axis_images": images,
        "maps_positive_to_positive": bool(positive),
        "min_abs_derivative": min_deriv,
        "passed": bool(positive and min_deriv > 0),
    }
    if not report["passed"]:
        logger.warning("conformal map check failed")
    return report


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

def hard_edge_constants(eq: EquilibriumData, bundle: Optional[PhiBundle] = None) -> Dict[str, float]:
    """
    c0 from the density fit, c = pi c0 / sin(pi/(r+1)), and f'(0) computed
    both as c^{r+1} and as (2 f_1(0) / (r+1)^2)^{r+1}.

    c_wright = c r^{r/(r+1)} is the scale that pairs with the Wright-form
    kernel K^{(alpha, 1/r)}: for V = x it is 1 while c itself is r^{-r/(r+1)}.
    """
    r = eq.r
    c0 = eq.c0 if math.isfinite(eq.c0) else _fit_c0(eq)
    c = math.pi * c0 / math.sin(math.pi / (r + 1))
    bundle = bundle or PhiBundle(eq)
    f1 = bundle.f_at_zero(1)
    from_f1 = (2 * f1.real / (r + 1) ** 2) ** (r + 1)
    f_prime = c ** (r + 1)
    return {
        "c0": c0,
        "c": c,
        "c_wright": c * r ** (r / (r + 1)),
        "f_prime_0": f_prime,
        "f_prime_0_from_f1": from_f1,
        "f1_at_0": f1.real,
        "f1_at_0_imag": f1.imag,
        "relative_disagreement": abs(from_f1 - f_prime) / f_prime,
    }


def composition_coefficients(weights: List[float], n: float, size: int) -> List[float]:
    """Coefficients a_0..a_{size-1} of exp(-n sum_k weights[k-1] x^k)."""
    a = [1.0] + [0.0] * (size - 1)
    power = [1.0] + [0.0] * (size - 1)
    series = [0.0] + [w for w in weights[: size - 1]]
    series += [0.0] * (size - len(series))
    for l in range(1, size):
        power = [sum(power[i] * series[k - i] for i in range(k + 1)) for k in range(size)]
        factor = (-n) ** l / math.factorial(l)
        a = [x + factor * y for x, y in zip(a, power)]
    return a


def build_cn(eq: EquilibriumData, n: float, printed: bool = False) -> np.ndarray:
    """
    Unit upper-triangular Toeplitz C_n with a_j from the composition sum.

    The weights are m_{k/r}/k, the coefficients of the log expansion in the
    g-function asymptotics; printed=True uses bare m_{k/r}.
    """
    r = eq.r
    moments = eq.moments or [eq.moment(k / r) for k in range(1, r)]
    weights = [m if printed else m / k for k, m in enumerate(moments, start=1)]
    a = composition_coefficients(weights, n, r)
    cn = np.zeros((r, r))
    for i in range(r):
        for j in range(i, r):
            cn[i, j] = a[j - i]
    return cn


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _auto_solve(field_spec: FieldSpec, r: int, size: int, max_iter: int):
    cap = config.EQ_DOMAIN_CAP
    for _ in range(8):
        sol = _solve_on_grid(field_spec, r, cap, size, max_iter)
        if sol["support"] < size:
            break
        logger.info(f"support reached the cap M = {cap:g}; doubling")
        cap *= 2
    else:
        raise OutOfDomainError("support keeps reaching the domain cap; the field may be too weak")
    q = sol["edges"][sol["support"]]
    refined_cap = 1.15 * q
    for _ in range(4):
        refined = _solve_on_grid(field_spec, r, refined_cap, size, max_iter)
        if refined["support"] < size:
            return refined
        refined_cap *= 1.3
    return sol


def minimize_energy(field_spec: FieldSpec, r: int, size: Optional[int] = None,
                    max_iter: Optional[int] = None, sample_aux: bool = True) -> EquilibriumData:
    """
    Discrete minimizer of the scalar log-energy functional.

    Args:
        field_spec: external field with V(0) = 0
        r: theta = 1/r
        size: number of grid cells
        max_iter: iteration cap for the projected descent
        sample_aux: also tabulate the mu_j densities on the mirrored grid

    Returns:
        EquilibriumData with q, ell, rho0, moments and c0 populated
    """
    if r < 1:
        raise ConfigError(f"r must be a positive integer, got {r}")
    size = size or config.EQ_GRID_SIZE
    max_iter = max_iter or config.EQ_MAX_ITER
    field_spec.check_admissible()
    logger.info(f"Minimizing energy: r={r}, V={field_spec.label()}, {size} cells")

    if field_spec.cap is None:
        sol = _auto_solve(field_spec, r, size, max_iter)
    else:
        sol = _solve_on_grid(field_spec, r, field_spec.cap, size, max_iter)
        if sol["support"] >= size:
            logger.error(f"support touches the cap M = {field_spec.cap}")
            raise OutOfDomainError(f"support touches the domain cap M = {field_spec.cap}; raise M")

    edges = sol["edges"]
    rho0 = sol["weights"] / np.diff(edges)
    m = sol["support"]
    eq = EquilibriumData(r=r, field=field_spec, edges=edges, rho0=rho0, support=m,
                         q=float(edges[m]), ell=float(-sol["lam"]))
    eq.moments = [eq.moment(k / r) for k in range(1, r)]

    interior = eq.midpoints[:m]
    interior = interior[(interior > 0.05 * eq.q) & (interior < 0.95 * eq.q)]
    residual = variational_residual(eq, interior)
    outside = eq.midpoints[m:]
    outside_res = variational_residual(eq, outside) if len(outside) else np.array([-1.0])
    eq.diagnostics = {
        "iterations": sol["iterations"],
        "energy": float(sol["energy"]),
        "descent_change": float(sol["descent_change"]),
        "mass_error": float(abs(np.sum(eq.masses) - 1)),
        "el_residual": float(np.max(np.abs(residual))),
        "strict_outside": bool(np.all(outside_res < 0)),
        "cap": eq.cap,
    }
    try:
        eq.c0 = _fit_c0(eq)
    except ConvergenceError as e:
        logger.warning(f"c0 fit failed: {e}")
    if sample_aux:
        for j in range(1, r):
            sign = -1.0 if j % 2 == 1 else 1.0
            grid = sign * eq.midpoints
            eq.rho_j_grid.append(grid)
            eq.rho_j.append(mu_j_from_mu0(eq, j, grid))
    logger.info(
        f"Equilibrium: q={eq.q:.6g}, ell={eq.ell:.6g}, c0={eq.c0:.6g}, "
        f"EL residual {eq.diagnostics['el_residual']:.2e}"
    )
    return eq


def linear_field_cross_check(eq: EquilibriumData, ctx=None, points: int = 12) -> Dict[str, float]:
    """
    Compare rho_0 with the zeta-curve density after fitting one scale factor.

    A linear field rescaled by lam moves the density to rho(s) = lam
    rho_curve(lam s); lam is read from the support ratio and independently
    from the hard-edge coefficients.
    """
    ctx = ctx or PrecisionContext(bits=128, target_tol=1e-12)
    cfg = CurveConfig(r=eq.r)
    z_star = float(soft_edge(cfg, ctx=ctx))
    lam = z_star / eq.q
    s_eq = eq.q * np.linspace(0.1, 0.9, points)
    table = curve_density_table(cfg, [mp.mpf(lam * s) for s in s_eq], ctx)
    curve_rho = np.array([float(v) for v in table["rho"]]) * lam
    mismatch = float(np.max(np.abs(eq.density(s_eq) - curve_rho) / curve_rho))
    hard = float(table["hard_edge_coefficient"])
    lam_hard = (eq.c0 / hard) ** (eq.r + 1) if math.isfinite(eq.c0) else float("nan")
    return {
        "scale_from_support": lam,
        "scale_from_hard_edge": lam_hard,
        "max_relative_mismatch": mismatch,
    }


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_equilibrium(eq: EquilibriumData, path, header: Optional[dict] = None):
    payload = {
        "r": eq.r,
        "field": eq.field.model_dump(),
        "q": eq.q,
        "ell": eq.ell,
        "support": eq.support,
        "grid": eq.edges,
        "rho0": eq.rho0,
        "rho_j": eq.rho_j,
        "rho_j_grid": eq.rho_j_grid,
        "moments": eq.moments,
        "c0": eq.c0,
        "diagnostics": eq.diagnostics,
    }
    return write_report(path, payload, header or make_header("equilibrium"))


def load_equilibrium(path) -> EquilibriumData:
    data = read_report(path)
    field_data = data["field"]
    if field_data.get("kind") == "custom":
        raise ConfigError("custom fields cannot be restored from JSON")
    field_spec = FieldSpec(kind=field_data["kind"],
                           coefficients=[float(c) for c in field_data["coefficients"]],
                           cap=None if field_data.get("cap") is None else float(field_data["cap"]))

    def arr(values):
        return np.array([float(v) for v in values])

    return EquilibriumData(
        r=int(data["r"]),
        field=field_spec,
        edges=arr(data["grid"]),
        rho0=arr(data["rho0"]),
        support=int(data["support"]),
        q=float(data["q"]),
        ell=float(data["ell"]),
        moments=[float(m) for m in data["moments"]],
        c0=float(data["c0"]),
        rho_j=[arr(v) for v in data.get("rho_j", [])],
        rho_j_grid=[arr(v) for v in data.get("rho_j_grid", [])],
        diagnostics=data.get("diagnostics", {}),
    )
