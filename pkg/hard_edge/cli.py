#!/usr/bin/env python3
"""
hard-edge: command-line front end

Usage:
    hard-edge curve --r 2 --grid ray:0.01:4:100       Sheet values along a ray
    hard-edge curve --r 1 --branch-points             Branch points of the curve
    hard-edge equilibrium --r 2 --V quadratic         Discrete equilibrium measure
    hard-edge kernel --r 2 --alpha 0.31               Limit kernel, both formulas
    hard-edge verify --suite psi --r 1,2 --alpha 0.31 Property suites
    hard-edge universality --r 2 --alpha 0.5 --n 8,16,32
    hard-edge ledger --r 2                            Printed vs derived constants

Exit codes: 0 pass, 1 verification failure, 2 config error, 3 numeric failure.
"""

import argparse
import logging
import math
import sys
import time
from typing import Any, Dict, List, Optional

import mpmath
import numpy as np
import pandas as pd
from mpmath import mp
from pydantic import ValidationError

from . import config
from .equilibrium import (
    edge_exponents,
    hard_edge_constants,
    linear_field_cross_check,
    minimize_energy,
    save_equilibrium,
    vector_lagrange_constant,
)
from .errors import ConfigError, HardEdgeError
from .finite_ensemble import biorthogonalize, mop_polynomial, reproducing_check, trace_check
from .global_parametrix import (
    build_global_parametrix,
    verify_N_asymptotics,
    verify_N_edges,
    verify_N_jumps,
)
from .limit_kernel import (
    discrepancy_ledger,
    kernel_comparison_table,
    ledger_frame,
    universality_report,
)
from .meijer import frobenius_basis, verify_psi
from .models import FieldSpec, RunConfig, WeightSpec
from .precision import PrecisionContext
from .spectral_curve import (
    XI,
    ZETA,
    CurveConfig,
    branch_points,
    curve_density_table,
    sheets,
    symmetric_function_check,
    verify_sheet_properties,
)
from .utils import frame_from_rows, make_header, ordered_sweep, output_path, write_report, write_table

logger = logging.getLogger(__name__)

SUITES = config.DEFAULT_SUITES + ["all"]

# Named fields accepted by --V
FIELDS = {
    "linear": [0.0, 1.0],
    "quadratic": [0.0, 1.0, 0.05],
}

# Closed-form soft edges of the zeta-curve
KNOWN_BRANCH_POINTS = {1: mp.mpf(4), 2: mp.mpf(27) / 8}


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------

def parse_int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from e


def parse_float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from e


def parse_field(text: str) -> FieldSpec:
    """'linear', 'quadratic' (x + x^2/20) or 'poly:c1,c2,...' (ascending, no constant term)."""
    name = text.strip().lower()
    if name in FIELDS:
        coefficients = FIELDS[name]
        return FieldSpec.linear() if name == "linear" else FieldSpec.polynomial(coefficients)
    if name.startswith("poly:"):
        return FieldSpec.polynomial([0.0] + parse_float_list(name[5:]))
    raise ConfigError(f"unsupported field {text!r}; use one of {sorted(FIELDS)} or poly:c1,c2,...")


def parse_grid(text: str, ctx: PrecisionContext) -> List[Any]:
    """
    Grid specifications:
        ray:a:b:count[:angle]   count points with modulus linear in [a, b] at
                                angle degrees from the positive axis
        circle:radius:count     count points on a circle, avoiding the real axis
    """
    parts = text.split(":")
    kind = parts[0].lower()
    try:
        with ctx.workprec():
            if kind == "ray" and len(parts) in (4, 5):
                a, b, count = mp.mpf(parts[1]), mp.mpf(parts[2]), int(parts[3])
                angle = mp.radians(mp.mpf(parts[4])) if len(parts) == 5 else mp.zero
                if count < 1 or not 0 < a <= b:
                    raise ConfigError(f"bad ray grid {text!r}")
                moduli = [a] if count == 1 else mp.linspace(a, b, count)
                phase = mp.expj(angle)
                return [m if angle == 0 else m * phase for m in moduli]
            if kind == "circle" and len(parts) == 3:
                radius, count = mp.mpf(parts[1]), int(parts[2])
                if count < 1 or not radius > 0:
                    raise ConfigError(f"bad circle grid {text!r}")
                return [radius * mp.expjpi((2 * mp.mpf(k) + 1) / count) for k in range(count)]
    except ValueError as e:
        raise ConfigError(f"bad grid {text!r}") from e
    raise ConfigError(f"unsupported grid {text!r}; use ray:a:b:count[:angle] or circle:radius:count")


def build_run_config(args, command: str, r: Optional[int] = None) -> RunConfig:
    """RunConfig for one value of r; pydantic validation errors surface as exit 2."""
    r_values = parse_int_list(args.r)
    values = {
        "command": command,
        "r": r if r is not None else r_values[0],
        "alpha": args.alpha,
        "bits": args.bits,
        "tol": args.tol,
        "workers": args.workers,
        "out": args.out,
        "seed": args.seed,
        "force": args.force,
        "q": args.q,
    }
    if getattr(args, "n", None):
        values["n_list"] = parse_int_list(args.n)
    if getattr(args, "x", None):
        values["x_list"] = parse_float_list(args.x)
    if getattr(args, "V", None):
        values["field"] = parse_field(args.V)
    if getattr(args, "suite", None):
        values["suite"] = args.suite
    if getattr(args, "grid_size", None):
        values["grid_size"] = args.grid_size
    return RunConfig(**values)


def single_r(args) -> int:
    r_values = parse_int_list(args.r)
    if len(r_values) != 1:
        raise ConfigError(f"this command takes a single r, got {args.r!r}")
    return r_values[0]


def context_for(run: RunConfig) -> PrecisionContext:
    max_bits = max(config.MAX_BITS, 2 * run.bits) if run.force else config.MAX_BITS
    return PrecisionContext(bits=run.bits, target_tol=run.tol, max_bits=max_bits)


def limit(default: float, override: Optional[float]) -> float:
    return default if override is None else override


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_curve(args) -> int:
    """Sheet values on a grid, branch points and density samples."""
    run = build_run_config(args, "curve", single_r(args))
    ctx = context_for(run)
    cfg = CurveConfig(r=run.r, q=run.q)
    kind = args.curve
    header = make_header("curve", run, ctx.bits, ctx.digits)
    stem = f"curve_r{run.r}_{kind}"

    if args.branch_points or not (args.grid or args.density):
        rows = [{"z": bp.z, "value": bp.value, "order": bp.order} for bp in branch_points(cfg, kind, ctx)]
        path = write_table(output_path(run.out, f"{stem}_branch_points.csv"),
                           frame_from_rows(rows, ctx.digits), header)
        for row in rows:
            print(f"branch point z = {mpmath.nstr(row['z'], 20)} (order {row['order']})")
        print(f"Branch points saved to: {path}")

    if args.grid:
        points = parse_grid(args.grid, ctx)

        def evaluate(z):
            sv = sheets(z, cfg, kind, side=args.side, ctx=ctx)
            point = sv.z if mp.im(z) != 0 else z
            return [{"z_re": mpmath.nstr(mp.re(point), ctx.digits), "z_im": mpmath.nstr(mp.im(point), ctx.digits),
                     "sheet": j, "v_re": mpmath.nstr(mp.re(v), ctx.digits),
                     "v_im": mpmath.nstr(mp.im(v), ctx.digits)}
                    for j, v in enumerate(sv.values)]

        rows = [row for block in ordered_sweep(evaluate, points, run.workers) for row in block]
        path = write_table(output_path(run.out, f"{stem}_grid.csv"), frame_from_rows(rows), header)
        print(f"{len(rows)} grid points saved to: {path}")

    if args.density:
        z_star = branch_points(cfg, ZETA, ctx)[1].z
        with ctx.workprec():
            s_grid = [z_star * (k + mp.mpf(1) / 2) / args.density for k in range(args.density)]
        table = curve_density_table(CurveConfig(r=run.r), s_grid, ctx)
        rows = [{"s": s, "rho": rho} for s, rho in zip(table["s"], table["rho"])]
        write_table(output_path(run.out, f"curve_r{run.r}_density.csv"),
                    frame_from_rows(rows, ctx.digits), header)
        path = write_report(output_path(run.out, f"curve_r{run.r}_density.json"), {
            "soft_edge": z_star,
            "hard_edge_coefficient": table["hard_edge_coefficient"],
            "soft_edge_coefficient": table["soft_edge_coefficient"],
        }, header)
        print(f"Density samples saved to: {path}")
    return 0


def cmd_equilibrium(args) -> int:
    """Discrete equilibrium measure and the quantities read off from it."""
    run = build_run_config(args, "equilibrium", single_r(args))
    eq = minimize_energy(run.field, run.r, size=run.grid_size)
    summary = {
        "q": eq.q,
        "ell": eq.ell,
        "c0": eq.c0,
        "diagnostics": eq.diagnostics,
        "edge_exponents": edge_exponents(eq),
        "hard_edge_constants": hard_edge_constants(eq),
        "vector_lagrange": vector_lagrange_constant(eq),
    }
    if run.field.kind == "linear":
        summary["linear_field_cross_check"] = linear_field_cross_check(eq, context_for(run))
    header = make_header("equilibrium", run)
    save_equilibrium(eq, output_path(run.out, f"equilibrium_r{run.r}.json"), header)
    path = write_report(output_path(run.out, f"equilibrium_r{run.r}_summary.json"), summary, header)
    print(f"q = {eq.q:.6g}, ell = {eq.ell:.6g}, c0 = {eq.c0:.6g}")
    print(f"Summary saved to: {path}")
    return 0


def cmd_kernel(args) -> int:
    """Limit kernel from the series formula and from the Psi formula."""
    run = build_run_config(args, "kernel", single_r(args))
    ctx = context_for(run)
    if args.points:
        points = []
        for pair in args.points.split(","):
            x, _, y = pair.partition(":")
            try:
                points.append((float(x), float(y or x)))
            except ValueError as e:
                raise ConfigError(f"bad kernel point {pair!r}; use x:y") from e
    else:
        points = [(x, y) for x in run.x_list for y in run.x_list]
    frame = kernel_comparison_table(points, run.alpha, run.r, ctx)
    header = make_header("kernel", run, ctx.bits, ctx.digits)
    path = write_table(output_path(run.out, f"kernel_r{run.r}_alpha{run.alpha:g}.csv"), frame, header)
    print(f"max relative difference {frame['relative_difference'].max():.3e}")
    print(f"Kernel table saved to: {path}")
    return 0


def cmd_universality(args) -> int:
    """Rescaled finite-n kernels against the limit kernel."""
    run = build_run_config(args, "universality", single_r(args))
    ctx = context_for(run)
    eq = None
    if run.field.kind != "linear":
        eq = minimize_energy(run.field, run.r, size=run.grid_size)
    report = universality_report(run.field, run.r, run.alpha, run.n_list, run.x_list, ctx,
                                 workers=run.workers, eq=eq,
                                 diag_threshold=args.diag_threshold, det_threshold=args.det_threshold)
    header = make_header("universality", run, ctx.bits, ctx.digits)
    stem = f"universality_r{run.r}_alpha{run.alpha:g}"
    write_table(output_path(run.out, f"{stem}_table.csv"), report["table"], header)
    write_table(output_path(run.out, f"{stem}_summary.csv"), report["summary"], header)
    path = write_report(output_path(run.out, f"{stem}.json"), {
        "c": report["c"],
        "summary": report["summary"].to_dict(orient="records"),
        "passed": report["passed"],
    }, header)
    print(f"c = {report['c']:.6g}; verdict {'PASS' if report['passed'] else 'FAIL'}")
    print(f"Report saved to: {path}")
    return 0 if report["passed"] else 1


def cmd_ledger(args) -> int:
    """Printed closed forms next to the derived values the code uses."""
    run = build_run_config(args, "ledger", single_r(args))
    ctx = context_for(run)
    entries = discrepancy_ledger(run.r, run.q, beta=args.beta, ctx=ctx)
    header = make_header("ledger", run, ctx.bits, ctx.digits)
    write_table(output_path(run.out, f"ledger_r{run.r}.csv"), ledger_frame(entries), header)
    path = write_report(output_path(run.out, f"ledger_r{run.r}.json"), {"entries": entries}, header)
    for _, row in ledger_frame(entries, digits=10).iterrows():
        check = "" if pd.isna(row["check_residual"]) else f", check residual {row['check_residual']}"
        print(f"{row['quantity']}: printed {row['printed']}, derived {row['derived']}{check}")
    print(f"Ledger saved to: {path}")
    return 0


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------

def suite_curve(run: RunConfig, ctx: PrecisionContext, threshold, rng) -> Dict[str, Any]:
    cfg = CurveConfig(r=run.r, q=run.q)
    tol = limit(1e-25, threshold)
    props = verify_sheet_properties(cfg, ctx=ctx, threshold=tol)
    checks = list(props["checks"])

    z_star = branch_points(CurveConfig(r=run.r), ZETA, ctx)[1].z
    with ctx.workprec():
        closed = KNOWN_BRANCH_POINTS.get(run.r, (mp.mpf(run.r + 1) / run.r) ** (run.r + 1))
        bp_residual = abs(z_star - closed)
    checks.append({"check": "branch_point", "value": z_star, "expected": closed,
                   "residual_max": bp_residual, "passed": bool(bp_residual <= tol)})

    sym = mp.zero
    for _ in range(3):
        modulus = float(np.exp(rng.uniform(np.log(0.1), np.log(10))))
        angle = float(rng.uniform(0.1, math.pi - 0.1)) * (1 if rng.uniform() < 0.5 else -1)
        with ctx.workprec():
            z = mp.mpf(modulus) * mp.expj(angle)
        for kind in (ZETA, XI):
            sym = max(sym, symmetric_function_check(z, cfg, kind, ctx=ctx))
    checks.append({"check": "symmetric_functions", "residual_max": sym, "passed": bool(sym <= tol)})
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


def suite_parametrix(run: RunConfig, ctx: PrecisionContext, threshold, rng) -> Dict[str, Any]:
    beta = run.alpha + (run.r - 1) / (2 * run.r)
    gn = build_global_parametrix(CurveConfig(r=run.r, q=run.q), beta=beta, ctx=ctx)
    checks = [
        verify_N_jumps(gn, ctx=ctx, threshold=limit(1e-20, threshold)),
        verify_N_asymptotics(gn, ctx=ctx),
        verify_N_edges(gn, ctx=ctx, tolerance=limit(0.02, threshold)),
    ]
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


def suite_psi(run: RunConfig, ctx: PrecisionContext, threshold, rng) -> Dict[str, Any]:
    basis = frobenius_basis(run.alpha, run.r, ctx)
    return verify_psi(basis, threshold=limit(1e-25, threshold),
                      asymptotic_threshold=limit(1e-2, threshold))


def marchenko_pastur_l1(eq) -> float:
    s = np.linspace(0.05, 3.95, 4000)
    exact = np.sqrt(4 - s) / (2 * np.pi * np.sqrt(s))
    return float(np.mean(np.abs(eq.density(s) - exact)) * (s[-1] - s[0]))


def suite_equilibrium(run: RunConfig, ctx: PrecisionContext, threshold, rng) -> Dict[str, Any]:
    eq = minimize_energy(run.field, run.r, size=run.grid_size)
    fit = edge_exponents(eq)
    hard_error = abs(fit["hard_exponent"] - fit["hard_expected"]) / abs(fit["hard_expected"])
    checks = [
        {"check": "mass", "residual_max": eq.diagnostics["mass_error"],
         "passed": eq.diagnostics["mass_error"] < limit(1e-4, threshold)},
        {"check": "euler_lagrange", "residual_max": eq.diagnostics["el_residual"],
         "passed": eq.diagnostics["el_residual"] < limit(1e-3, threshold)},
        {"check": "hard_edge_exponent", "fitted": fit["hard_exponent"], "expected": fit["hard_expected"],
         "relative_error": hard_error, "passed": hard_error < limit(0.05, threshold)},
    ]
    if run.r == 1 and run.field.kind == "linear":
        l1 = marchenko_pastur_l1(eq)
        c0_error = abs(eq.c0 * math.pi - 1)
        checks.append({"check": "marchenko_pastur_l1", "residual_max": l1,
                       "passed": l1 < limit(0.01, threshold)})
        checks.append({"check": "hard_edge_c0", "value": eq.c0, "expected": 1 / math.pi,
                       "relative_error": c0_error, "passed": c0_error < limit(0.03, threshold)})
    report = {"q": eq.q, "ell": eq.ell, "c0": eq.c0, "edge_exponents": fit, "checks": checks}
    if run.field.kind == "linear":
        report["linear_field_cross_check"] = linear_field_cross_check(eq, ctx.with_tol(1e-12))
    report["passed"] = all(c["passed"] for c in checks)
    return report


def suite_kernels(run: RunConfig, ctx: PrecisionContext, threshold, rng) -> Dict[str, Any]:
    checks = []
    spec = WeightSpec(alpha=run.alpha, field=FieldSpec.linear(), n=4, r=run.r)
    system = biorthogonalize(spec, ctx)
    x, y = (float(v) for v in rng.uniform(0.1, 1.5, size=2))
    for name, report, default in (
        ("trace", trace_check(spec, system), 1e-10),
        ("reproducing", reproducing_check(spec, system, x, y), 1e-8),
    ):
        err = float(report["relative_error"])
        checks.append({"check": name, "relative_error": err, "passed": err < limit(default, threshold)})

    if run.r > 1:
        worst = 0.0
        for degree in range(3, 7):
            s = spec.with_n(degree)
            mop = mop_polynomial(s, ctx=ctx)
            family = biorthogonalize(s, ctx, size=degree + 1)
            with ctx.workprec():
                scale = max(abs(c) for c in mop.coefficients)
                diff = max(abs(family.P[degree, i] - mop.coefficients[i]) for i in range(degree + 1))
            worst = max(worst, float(diff / scale))
        checks.append({"check": "mop_equivalence", "residual_max": worst,
                       "passed": worst < limit(1e-20, threshold)})

    points = [tuple(float(v) for v in rng.uniform(0.05, 5.0, size=2)) for _ in range(3)]
    table = kernel_comparison_table(points, run.alpha, run.r, ctx)
    worst = float(table["relative_difference"].max())
    checks.append({"check": "dual_kernel", "points": points, "residual_max": worst,
                   "passed": worst < limit(1e-8, threshold)})
    return {"checks": checks, "passed": all(c["passed"] for c in checks)}


SUITE_RUNNERS = {
    "curve": suite_curve,
    "parametrix": suite_parametrix,
    "psi": suite_psi,
    "equilibrium": suite_equilibrium,
    "kernels": suite_kernels,
}


def cmd_verify(args) -> int:
    """Run property suites for every requested r; exit 1 on any failed check."""
    suites = config.DEFAULT_SUITES if args.suite == "all" else [args.suite]
    r_values = parse_int_list(args.r)
    runs = [build_run_config(args, "verify", r) for r in r_values]
    rng = np.random.default_rng(runs[0].seed)
    start = time.monotonic()
    results = []
    for name in suites:
        for run in runs:
            entry = {"suite": name, "r": run.r, "alpha": run.alpha}
            if args.budget is not None and time.monotonic() - start >= args.budget:
                logger.warning(f"time budget exhausted before suite {name} at r={run.r}")
                entry.update({"status": "timeout", "passed": False})
                results.append(entry)
                continue
            logger.info(f"Running suite {name} at r={run.r}")
            report = SUITE_RUNNERS[name](run, context_for(run), args.threshold, rng)
            entry.update({"status": "done", "passed": report["passed"], "report": report})
            results.append(entry)
            print(f"{name:12s} r={run.r}: {'PASS' if report['passed'] else 'FAIL'}")

    passed = all(e["passed"] for e in results)
    complete = all(e["status"] == "done" for e in results)
    header = make_header("verify", runs[0], runs[0].bits)
    logger.info(f"verify finished in {time.monotonic() - start:.1f} s")
    path = write_report(output_path(runs[0].out, f"verify_{args.suite}.json"), {
        "suites": results,
        "complete": complete,
        "passed": passed,
    }, header)
    print(f"Status: {'PASS' if passed else 'FAIL'}")
    print(f"Report saved to: {path}")
    return 0 if passed else 1


COMMANDS = {
    "curve": cmd_curve,
    "equilibrium": cmd_equilibrium,
    "kernel": cmd_kernel,
    "verify": cmd_verify,
    "universality": cmd_universality,
    "ledger": cmd_ledger,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--r", default="1", help="theta = 1/r; comma-separated list for verify")
    common.add_argument("--alpha", type=float, default=0.0, help="weight exponent, > -1")
    common.add_argument("--q", type=float, default=1.0, help="soft edge of the xi-curve")
    common.add_argument("--bits", type=int, default=config.PRECISION_BITS, help="working precision in bits")
    common.add_argument("--tol", type=float, default=config.TOLERANCE, help="target tolerance")
    common.add_argument("--workers", type=int, default=config.WORKERS, help="joblib workers for sweeps")
    common.add_argument("--out", default=config.OUTPUT_DIR, help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for random sample points")
    common.add_argument("--force", action="store_true", help="lift the desk-scale ceilings")
    common.add_argument("--log-level", default=config.LOG_LEVEL, help="logging level")

    parser = argparse.ArgumentParser(
        prog="hard-edge",
        description="Hard-edge numerics for Muttalib-Borodin ensembles at theta = 1/r",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.VERSION}")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # --- curve ---
    curve_parser = subparsers.add_parser("curve", parents=[common], help="Spectral curve sheets")
    curve_parser.add_argument("--curve", choices=[ZETA, XI], default=ZETA, help="curve family")
    curve_parser.add_argument("--grid", help="ray:a:b:count[:angle] or circle:radius:count")
    curve_parser.add_argument("--side", type=int, choices=[1, -1], default=1,
                              help="boundary value for points on the real axis")
    curve_parser.add_argument("--branch-points", action="store_true", help="write the branch points")
    curve_parser.add_argument("--density", type=int, default=0, help="number of density samples")

    # --- equilibrium ---
    eq_parser = subparsers.add_parser("equilibrium", parents=[common], help="Equilibrium measure")
    eq_parser.add_argument("--V", default="linear", help="linear, quadratic or poly:c1,c2,...")
    eq_parser.add_argument("--grid-size", type=int, default=config.EQ_GRID_SIZE, help="grid cells")

    # --- kernel ---
    kernel_parser = subparsers.add_parser("kernel", parents=[common], help="Limit kernel, both formulas")
    kernel_parser.add_argument("--points", help="comma-separated x:y pairs")
    kernel_parser.add_argument("--x", help="comma-separated grid when --points is absent")

    # --- verify ---
    verify_parser = subparsers.add_parser("verify", parents=[common], help="Run property suites")
    verify_parser.add_argument("--suite", choices=SUITES, default="all", help="suite to run")
    verify_parser.add_argument("--V", default="linear", help="field for the equilibrium suite")
    verify_parser.add_argument("--grid-size", type=int, default=config.EQ_GRID_SIZE, help="grid cells")
    verify_parser.add_argument("--threshold", type=float, default=None,
                               help="override every pass threshold")
    verify_parser.add_argument("--budget", type=float, default=None,
                               help="seconds; remaining suites are marked as timed out")

    # --- universality ---
    uni_parser = subparsers.add_parser("universality", parents=[common], help="Convergence to the limit kernel")
    uni_parser.add_argument("--V", default="linear", help="linear, quadratic or poly:c1,c2,...")
    uni_parser.add_argument("--n", default="8,16,32,48", help="comma-separated particle numbers")
    uni_parser.add_argument("--x", default="0.5,1,2", help="comma-separated rescaled points")
    uni_parser.add_argument("--grid-size", type=int, default=config.EQ_GRID_SIZE, help="grid cells")
    uni_parser.add_argument("--diag-threshold", type=float, default=0.02, help="extrapolated diagonal error")
    uni_parser.add_argument("--det-threshold", type=float, default=0.05, help="determinant error at largest n")

    # --- ledger ---
    ledger_parser = subparsers.add_parser("ledger", parents=[common], help="Printed vs derived constants")
    ledger_parser.add_argument("--beta", type=float, default=0.5, help="beta for the C_beta entry")
    return parser


def main(argv: Optional[List[str]] = None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        sys.exit(0)
    config.setup_logging(args.log_level)

    try:
        code = COMMANDS[args.command](args)
    except (ValidationError, ConfigError) as e:
        logger.error(f"Invalid configuration: {e}")
        code = 2
    except HardEdgeError as e:
        logger.error(f"Numeric failure in {args.command}: {e}")
        code = e.exit_code
    sys.exit(code)


if __name__ == "__main__":
    main()
