"""Command line interface.

Exit codes: 0 success, 1 solver failure, 2 a validation or estimate FAIL,
3 I/O or schema errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analysis
from .expressions import ExpressionError
from .graph import JunctionGrid
from .io import (
    SchemaError,
    atomic_write_text,
    export_solution,
    load_problem,
    load_reference,
    run_convergence,
)
from .problem import SamplingPlan, compatibility_check, validate_assumptions
from .rothe import CompatibilityError, RotheConfig, RotheConfigError, RotheStepError, solve_parabolic, truncation_study
from .shooting import EllipticProblem, ShootingError, solve_elliptic_junction

EXIT_OK, EXIT_SOLVER, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _write_json(path, payload):
    if path:
        atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_validate(args) -> int:
    problem = load_problem(args.file)
    plan = SamplingPlan(u_bound=args.u_bound, p_bound=args.p_bound, samples=args.samples,
                        pair_samples=args.samples, seed=args.seed)
    report = validate_assumptions(problem, plan, mode=args.mode)
    compat = compatibility_check(problem, args.compat_tol)
    print(report.format())
    print(f"  compatibility  {'PASS' if compat.ok else 'FAIL':<12} {compat.summary()}")
    _write_json(args.json, {"validation": report.to_dict(),
                            "compatibility": {"ok": compat.ok, "F_residual": compat.F_residual,
                                              "boundary_residuals": compat.boundary_residuals,
                                              "continuity_residual": compat.continuity_residual}})
    return EXIT_FAIL if report.has_fail or not compat.ok else EXIT_OK


def cmd_solve_elliptic(args) -> int:
    problem = load_problem(args.file)
    grid = JunctionGrid(problem.junction, args.nodes)
    ep = EllipticProblem.from_spec(problem, grid, t=args.time)
    sol = solve_elliptic_junction(ep, theta_tol=args.theta_tol, F_tol=args.f_tol, method=args.method)
    print(f"theta* = {sol.theta_star!r}")
    print(f"vertex flux = {[float(v) for v in sol.vertex_flux]!r}")
    print(f"F residual = {sol.F_residual:.3e} (tolerance {sol.F_tolerance:.3e})")
    print(f"root search: {sol.method}, {sol.bisection_iterations} iterations, {sol.shots} shots, bracket {sol.bracket}")
    if args.out:
        export_solution(sol, args.out, args.format)
    return EXIT_OK


def cmd_solve_parabolic(args) -> int:
    problem = load_problem(args.file)
    grid = JunctionGrid(problem.junction, args.nodes)
    sol = solve_parabolic(problem, RotheConfig(args.steps, grid, method=args.method))
    worst = max((abs(s.F_residual) / s.F_tolerance for s in sol.steps), default=0.0)
    print(f"{sol.n} steps of dt = {sol.dt!r} on {grid.nodes_per_edge} nodes")
    print(f"final vertex value = {sol.snapshots[-1][0]!r}")
    print(f"max |F| / F_tol over steps = {worst:.3e}")
    if args.out:
        export_solution(sol, args.out, args.format)
    return EXIT_OK


def cmd_estimates(args) -> int:
    problem = load_problem(args.file)
    grid = JunctionGrid(problem.junction, args.nodes)
    report = analysis.EstimateReport()
    runs = []
    ladder = sorted({max(2, args.steps // 4), max(2, args.steps // 2), args.steps})
    for n in ladder:
        runs.append(solve_parabolic(problem, RotheConfig(n, grid, method=args.method)))
    sol = runs[-1]
    rate = analysis.forcing_time_rate(problem, grid)
    report.add(analysis.time_difference_bound(sol, problem.envelope.c_h, args.margin, forcing_rate=rate))
    report.add(analysis.verify_barrier(problem, sol))
    report.add(analysis.prop44_uniformity(runs))
    print(report.format())
    _write_json(args.json, report.to_dict())
    return EXIT_FAIL if not report.ok else EXIT_OK


def cmd_convergence(args) -> int:
    problem = load_problem(args.file)
    if args.reference == "exact":
        reference = load_reference(args.file)
        if reference is None:
            raise SchemaError("/reference", "the problem file declares no closed-form reference")
    else:
        reference = "self"
    report = run_convergence(problem, args.kind, _ints(args.ladder), args.fixed, reference, method=args.method)
    print(report.format())
    _write_json(args.json, report.to_dict())
    return EXIT_FAIL if report.verdict == "FAIL" else EXIT_OK


def cmd_truncate(args) -> int:
    problem = load_problem(args.file)
    report = truncation_study(problem, _floats(args.lengths), args.window, steps=args.steps,
                              spacing=args.spacing, method=args.method)
    print(report.format())
    _write_json(args.json, report.to_dict())
    return EXIT_FAIL if report.verdict != "PASS" else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starjunction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method_default):
        p.add_argument("file", help="problem file (JSON) or builtin:<name>")
        p.add_argument("--method", choices=("bisection", "brent"), default=method_default,
                       help="bracketing root search on the vertex value")
        p.add_argument("--json", metavar="PATH", help="also write the report as JSON")

    p = sub.add_parser("validate", help="sample the structural assumptions and check compatibility")
    p.add_argument("file")
    p.add_argument("--mode", choices=("parabolic", "elliptic"), default="parabolic")
    p.add_argument("--seed", type=int, default=SamplingPlan.seed)
    p.add_argument("--samples", type=int, default=SamplingPlan.samples)
    p.add_argument("--u-bound", type=float, default=SamplingPlan.u_bound)
    p.add_argument("--p-bound", type=float, default=SamplingPlan.p_bound)
    p.add_argument("--compat-tol", type=float, default=1e-6)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-elliptic", help="solve the elliptic junction problem with data at --time")
    common(p, "bisection")
    p.add_argument("--nodes", type=int, default=201)
    p.add_argument("--theta-tol", type=float, default=1e-12)
    p.add_argument("--f-tol", type=float, default=1e-9)
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_solve_elliptic)

    p = sub.add_parser("solve-parabolic", help="run the Rothe scheme to the horizon")
    common(p, "brent")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--nodes", type=int, default=201)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_solve_parabolic)

    p = sub.add_parser("estimates", help="time-difference bound, barrier check and n-uniform bounds")
    common(p, "brent")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--margin", type=float, default=0.2)
    p.set_defaults(func=cmd_estimates)

    p = sub.add_parser("convergence", help="fitted convergence order along a ladder in n or N")
    common(p, "brent")
    p.add_argument("--kind", choices=("dt", "h"), required=True)
    p.add_argument("--ladder", required=True, help="comma separated n (dt ladder) or N (h ladder)")
    p.add_argument("--fixed", type=int, required=True, help="the resolution held fixed (N or n)")
    p.add_argument("--reference", choices=("exact", "self"), default="exact")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("truncate-study", help="compare truncations of an unbounded junction")
    common(p, "brent")
    p.add_argument("--lengths", required=True, help="comma separated increasing edge lengths")
    p.add_argument("--window", type=float, required=True)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--spacing", type=float, default=0.025)
    p.set_defaults(func=cmd_truncate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ExpressionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CompatibilityError as exc:
        print(f"incompatible data: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ShootingError, RotheStepError, RotheConfigError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
