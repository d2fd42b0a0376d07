"""One test per acceptance criterion; each prints a single pass/fail line."""

import json
import math
import time

import numpy as np
import pytest

from starjunction.analysis import (
    barrier_params,
    check_comparison,
    check_interpolation,
    forcing_time_rate,
    interpolation_bound,
    prop44_observations,
    recursion_table,
    time_difference_bound,
    verify_barrier,
)
from starjunction.cli import main
from starjunction.expressions import parse_expression, to_text
from starjunction.graph import JunctionGrid, vertex_gradient
from starjunction.io import builtin_fixtures, fixture_path, fitted_order, load_problem
from starjunction.problem import validate_assumptions
from starjunction.rothe import RotheConfig, solve_parabolic, truncation_study
from starjunction.shooting import EllipticProblem, solve_elliptic_junction

from support import elliptic, kirchhoff_edge, kirchhoff_family, kirchhoff_theta, record, semidiscrete_heat

LAM = (np.pi / 2) ** 2
SUITE = [name for name in builtin_fixtures() if name != "broken_vertex"]


# 1 ---------------------------------------------------------------------------


def test_criterion_1_kirchhoff_elliptic_oracle():
    rng = np.random.default_rng(1)
    worst_theta = worst_nodes = slowest = 0.0
    for I in (2, 3):
        for _ in range(5):
            phi = rng.uniform(-2, 2, I)
            start = time.perf_counter()
            sol = solve_elliptic_junction(elliptic(phi, nodes=401))
            slowest = max(slowest, time.perf_counter() - start)
            theta = kirchhoff_theta(phi, [1.0] * I)
            worst_theta = max(worst_theta, abs(sol.theta_star - theta))
            for i in range(I):
                x = sol.solution.grid.coordinates(i)
                err = np.max(np.abs(sol.solution.edge(i) - kirchhoff_edge(theta, phi[i], 1.0, x)))
                worst_nodes = max(worst_nodes, float(err))
    ok = worst_theta <= 1e-6 and worst_nodes <= 1e-5 and slowest < 5.0
    record(1, ok, f"max |theta - theta_exact| = {worst_theta:.2e}, node sup-error = {worst_nodes:.2e}, "
                  f"slowest instance {slowest:.2f} s")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_criterion_2_vertex_condition_residual():
    worst = 0.0  # max |F| / F_tol
    count = 0
    rng = np.random.default_rng(2)
    for I in (2, 3):
        for _ in range(3):
            ep = elliptic(rng.uniform(-2, 2, I), nodes=201)
            sol = solve_elliptic_junction(ep)
            F = ep.F(sol.solution.vertex_value, vertex_gradient(sol.solution))
            worst = max(worst, abs(F) / sol.F_tolerance)
            count += 1
    for name in SUITE:
        p = load_problem(f"builtin:{name}")
        grid = JunctionGrid(p.junction, 101)
        ep = EllipticProblem.from_spec(p, grid)
        sol = solve_elliptic_junction(ep)
        worst = max(worst, abs(ep.F(sol.theta_star, vertex_gradient(sol.solution))) / sol.F_tolerance)
        count += 1
        par = solve_parabolic(p, RotheConfig(16, grid))
        for k in range(1, par.n + 1):
            u = par.snapshot(k)
            F = p.F(u.vertex_value, vertex_gradient(u))
            worst = max(worst, abs(F) / par.steps[k - 1].F_tolerance)
            count += 1
    ok = worst <= 1.0
    record(2, ok, f"{count} snapshots, max |F| / F_tol = {worst:.3f}")
    assert ok


# 3 ---------------------------------------------------------------------------


def _heat_errors(kind, ladder, fixed):
    p = load_problem("builtin:neumann_heat")
    started = time.perf_counter()
    steps, exact_err, semi_err = [], [], []
    for r in ladder:
        n, N = (r, fixed) if kind == "dt" else (fixed, r)
        grid = JunctionGrid(p.junction, N)
        sol = solve_parabolic(p, RotheConfig(n, grid))
        x = grid.coordinates(0)
        E = sol.edge_snapshots(0)
        exact = np.exp(-LAM * sol.times)[:, None] * np.cos(np.pi * x / 2)[None, :]
        exact_err.append(float(np.max(np.abs(E - exact))))
        semi_err.append(float(np.max(np.abs(E - semidiscrete_heat(sol.times, x, sol.dt)))))
        steps.append(sol.dt if kind == "dt" else grid.spacing[0])
    return steps, exact_err, semi_err, time.perf_counter() - started


@pytest.fixture(scope="module")
def h_ladder():
    return _heat_errors("h", [51, 101, 201, 401], 4096)


def test_criterion_3_dt_order():
    steps, errors, _, seconds = _heat_errors("dt", [16, 32, 64, 128], 801)
    order, _ = fitted_order(steps, errors)
    ok = order >= 0.9 and seconds < 120
    record("3 (dt)", ok, f"fitted dt-order {order:.3f} vs exact solution, n = 16..128, N = 801, {seconds:.1f} s")
    assert ok


def test_criterion_3_h_order_against_time_discrete_solution(h_ladder):
    # the time-discrete closed form removes the O(dt) error, leaving the O(h^2) part
    steps, _, errors, seconds = h_ladder
    order, _ = fitted_order(steps, errors)
    ok = order >= 1.9 and seconds < 120
    record("3 (h)", ok, f"fitted h-order {order:.3f} vs (1 + lam dt)^-k cos(pi x/2), N = 51..401, "
                        f"n = 4096, {seconds:.1f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the O(dt) error at n = 4096 (about 5e-5) swamps the O(h^2) "
                                       "error against the continuous solution; see README")
def test_criterion_3_h_order_against_continuous_solution(h_ladder):
    steps, errors, _, seconds = h_ladder
    order, _ = fitted_order(steps, errors)
    ok = order >= 1.9
    record("3 (h, continuous reference)", ok,
           f"fitted h-order {order:.3f}, errors {', '.join(f'{e:.2e}' for e in errors)} (expected failure)")
    assert ok


# 4 ---------------------------------------------------------------------------


def test_criterion_4_time_difference_monitor():
    table = recursion_table(1.0, 1.0, 10)
    recursion_ok = abs(table[-1] - (10 / 9) ** 10) <= 1e-10
    worst, verdicts = 0.0, []
    for name in SUITE:
        p = load_problem(f"builtin:{name}")
        grid = JunctionGrid(p.junction, 101)
        sol = solve_parabolic(p, RotheConfig(32, grid))
        entry = time_difference_bound(sol, p.envelope.c_h, margin=0.2,
                                      forcing_rate=forcing_time_rate(p, grid))
        floor = entry.witnesses["roundoff_floor"]
        if entry.bound > 0:
            worst = max(worst, entry.measured / (1.2 * entry.bound + floor))
        elif entry.measured > floor:
            worst = math.inf
        verdicts.append(entry.verdict)
    ok = recursion_ok and worst <= 1.0 and all(v == "PASS" for v in verdicts)
    record(4, ok, f"M_10 = {table[-1]:.16g}; max measured / (1.2 bound) = {worst:.3f} over {len(SUITE)} fixtures")
    assert ok


# 5 ---------------------------------------------------------------------------


def _ordered_pair(rng, I):
    """Ordered compatible Kirchhoff data: g_lo <= g_hi and phi_lo <= phi_hi."""
    theta = float(rng.uniform(-1, 1))
    s = rng.uniform(-1, 1, I)
    s -= s.mean()
    q = rng.uniform(-1, 1, I)
    d0 = float(rng.uniform(0, 0.5))
    e = rng.uniform(0, 0.5, I)
    lo = [f"{theta!r} + {float(s[i])!r}*x + {float(q[i])!r}*x^2" for i in range(I)]
    hi = [f"{theta + d0!r} + {float(s[i])!r}*x + {float(q[i] + e[i])!r}*x^2" for i in range(I)]
    phi_lo = theta + s + q
    phi_hi = theta + d0 + s + q + e
    return lo, hi, phi_lo, phi_hi


def test_criterion_5_comparison_properties():
    rng = np.random.default_rng(5)
    worst, pairs = -math.inf, 0
    for trial in range(25):
        I = 2 + trial % 2
        phi_lo = rng.uniform(-2, 2, I)
        phi_hi = phi_lo + rng.uniform(0, 1, I)
        a = solve_elliptic_junction(elliptic(phi_lo, nodes=101)).solution
        b = solve_elliptic_junction(elliptic(phi_hi, nodes=101)).solution
        res = check_comparison(a, b, 1e-8)
        worst = max(worst, res.max_violation)
        pairs += res.ok
    for trial in range(25):
        I = 2 + trial % 2
        lo, hi, phi_lo, phi_hi = _ordered_pair(rng, I)
        p_lo = kirchhoff_family(phi_lo, lo, horizon=0.25)
        p_hi = kirchhoff_family(phi_hi, hi, horizon=0.25)
        grid = JunctionGrid(p_lo.junction, 51)
        a = solve_parabolic(p_lo, RotheConfig(8, grid))
        b = solve_parabolic(p_hi, RotheConfig(8, grid))
        res = check_comparison(a, b, 1e-8)
        worst = max(worst, res.max_violation)
        pairs += res.ok
    broken = validate_assumptions(load_problem("builtin:broken_vertex"))
    caught = any(c.id == "P(i)(a)" for c in broken.failures)  # F must not increase in u
    ok = pairs == 50 and caught
    record(5, ok, f"{pairs}/50 ordered pairs stay ordered (max sub - sup = {worst:.2e}); "
                  f"broken fixture flagged by {[c.id for c in broken.failures]}")
    assert ok


# 6 ---------------------------------------------------------------------------


def test_criterion_6_uniform_bounds():
    p = load_problem("builtin:kirchhoff_heat_3edge")
    grid = JunctionGrid(p.junction, 401)
    obs = [prop44_observations(solve_parabolic(p, RotheConfig(n, grid))) for n in (32, 64, 128, 256)]
    spreads = {}
    for key in ("M1", "M2", "M3"):
        vals = np.array([o[key] for o in obs])
        spreads[key] = float((vals.max() - vals.min()) / vals.max())
    ok = max(spreads.values()) < 0.10
    record(6, ok, "relative spreads " + ", ".join(f"{k} {v:.2%}" for k, v in spreads.items()))
    assert ok


# 7 ---------------------------------------------------------------------------


def test_criterion_7_interpolation_inequality():
    entries = []
    heat = load_problem("builtin:neumann_heat")
    sol = solve_parabolic(heat, RotheConfig(64, JunctionGrid(heat.junction, 201)))
    for alpha, gamma in ((1.0, 1.0), (0.5, 1.0), (1.0, 0.5)):
        entries.append(check_interpolation(sol.edge_snapshots(0), sol.times, sol.grid.coordinates(0), alpha, gamma))
    p3 = load_problem("builtin:kirchhoff_heat_3edge")
    sol3 = solve_parabolic(p3, RotheConfig(32, JunctionGrid(p3.junction, 201)))
    for i in range(3):
        entries.append(check_interpolation(sol3.edge_snapshots(i), sol3.times, sol3.grid.coordinates(i), 1.0, 1.0))
    c = interpolation_bound(1.0, 1.0, 1.0)
    worst = max(e.measured / e.bound for e in entries)
    ok = all(e.verdict == "PASS" for e in entries) and c == 4.0
    record(7, ok, f"C(1,1,1) = {c!r}; max measured / C = {worst:.3f} over {len(entries)} checks")
    assert ok


# 8 ---------------------------------------------------------------------------


def test_criterion_8_barrier():
    bp = barrier_params(1.0, mu_2M=1.0, nu_lower=1.0, min_length=1.0)
    e4 = math.exp(4)
    exact = (2.0, 5 * e4, (e4 - 1) / (5 * e4))
    params_ok = all(abs(v - w) <= 1e-12 * max(1.0, abs(w)) for v, w in zip((bp.beta, bp.theta_bar, bp.kappa), exact))
    heat = load_problem("builtin:neumann_heat")
    sol = solve_parabolic(heat, RotheConfig(32, JunctionGrid(heat.junction, 201)))
    entry = verify_barrier(heat, sol)
    ok = params_ok and entry.verdict == "PASS"
    record(8, ok, f"(beta, theta_bar, kappa) = ({bp.beta}, {bp.theta_bar:.12g}, {bp.kappa:.12g}); "
                  f"heat barrier ratio {entry.measured:.3f} ({entry.verdict})")
    assert ok


# 9 ---------------------------------------------------------------------------


def test_criterion_9_truncation():
    started = time.perf_counter()
    report = truncation_study(load_problem("builtin:compact_bump_2edge"), [2, 4, 8], window=1.0)
    seconds = time.perf_counter() - started
    d = report.distances
    ok = all(b < a for a, b in zip(d, d[1:])) and seconds < 300
    record(9, ok, f"window distances {', '.join(f'{v:.3e}' for v in d)} in {seconds:.1f} s")
    assert ok


# 10 --------------------------------------------------------------------------


def _expressions(doc):
    coefs = doc["coefficients"]
    for key, value in coefs.items():
        yield from (value if isinstance(value, list) else [value])
    for key in ("mu_bound", "gamma_bound", "epsilon_bound", "p_bound"):
        if doc["envelope"].get(key):
            yield doc["envelope"][key]
    yield from doc.get("reference", {}).get("exact", [])


def test_criterion_10_determinism(tmp_path, capsys):
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}.csv"
        js = tmp_path / f"est{run}.json"
        codes = (
            main(["solve-parabolic", "builtin:kirchhoff_heat_3edge", "--steps", "16", "--nodes", "51", "--out", str(out)]),
            main(["estimates", "builtin:quasilinear_2edge", "--steps", "16", "--nodes", "41", "--json", str(js)]),
        )
        outputs.append((codes, out.read_bytes(), js.read_bytes(), capsys.readouterr().out))
    identical = outputs[0] == outputs[1]

    rng = np.random.default_rng(10)
    count, round_trip = 0, True
    for name in builtin_fixtures():
        doc = json.loads(fixture_path(name).read_text())
        for text in _expressions(doc):
            tree = parse_expression(text)
            printed = to_text(tree)
            again = parse_expression(printed)
            round_trip &= to_text(again) == printed
            env = {v: rng.uniform(-1, 1) for v in ("x", "t", "u", "p", "p1", "p2", "p3")}
            v1, v2 = tree.evaluate(env), again.evaluate(env)
            round_trip &= v1 == v2 or (math.isnan(v1) and math.isnan(v2))
            count += 1
    ok = identical and round_trip
    record(10, ok, f"two CLI runs byte-identical: {identical}; {count} fixture expressions round-trip: {round_trip}")
    assert ok
