"""Implicit Rothe time stepping on a junction and the domain truncation study.

Step ``k`` solves the elliptic junction problem with Hamiltonian

    (u - u_{k-1}(x)) / dt + H(x, u, p) - f(t_k, x)

and outer data ``phi_i(t_k)``; ``dt = T / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .expressions import Num
from .graph import GridFunction, Junction, JunctionGrid, edge_derivative
from .problem import Coefficient, CoefficientKind, ProblemSpec, compatibility_check
from .shooting import (
    EllipticProblem,
    EllipticSolution,
    ShootingError,
    SignBracketError,
    solve_elliptic_junction,
    theta_bracket,
)

__all__ = [
    "RotheConfig",
    "RotheConfigError",
    "RotheStepError",
    "CompatibilityError",
    "AugmentedHamiltonian",
    "StepRecord",
    "ParabolicSolution",
    "rothe_step",
    "solve_parabolic",
    "interpolant_eval",
    "TruncationReport",
    "truncation_study",
    "initial_time_residual",
]


class RotheConfigError(ValueError):
    pass


class CompatibilityError(ValueError):
    pass


class RotheStepError(RuntimeError):
    def __init__(self, k: int, cause: Exception, partial: "ParabolicSolution | None" = None):
        self.k, self.cause, self.partial = k, cause, partial
        super().__init__(f"Rothe step {k} failed: {cause}")


@dataclass(frozen=True)
class RotheConfig:
    """Time steps ``n``, the spatial grid and solver options passed to the shooting solver."""

    n: int
    grid: JunctionGrid
    theta_tol: float = 1e-12
    F_tol: float = 1e-9
    edge_tol: float = 1e-10
    max_iter: int = 100
    method: str = "brent"
    spill_path: str | None = None
    executor: object = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise RotheConfigError(f"the scheme needs n >= 2 time steps, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    def dt(self, horizon: float) -> float:
        return horizon / self.n

    def check(self, problem: ProblemSpec):
        if self.grid.junction != problem.junction:
            raise RotheConfigError("the grid's junction differs from the problem's junction")
        c_tilde = problem.envelope.c_h * problem.horizon
        if not self.n > c_tilde:
            raise RotheConfigError(
                f"n = {self.n} must exceed C_H * T = {c_tilde:g} so that each step is monotone"
            )


class AugmentedHamiltonian:
    """``(u - u_prev(x)) / dt + H(x, u, p) - f(t, x)`` on one edge.

    ``u_prev`` is looked up on the step's own grid; ``np.interp`` returns the
    stored node values exactly at nodes.
    """

    def __init__(self, base, nodes: np.ndarray, prev_values: np.ndarray, dt: float):
        self.base = base
        self.nodes = np.asarray(nodes, dtype=float)
        self.prev = np.asarray(prev_values, dtype=float)
        self.dt = float(dt)
        self.inv_dt = 1.0 / self.dt

    @property
    def has_partials(self) -> bool:
        return bool(getattr(self.base, "has_partials", False))

    def _prev(self, x):
        return np.interp(x, self.nodes, self.prev)

    def __call__(self, x, u, p):
        return (u - self._prev(x)) * self.inv_dt + self.base(x, u, p)

    def partials(self, x, u, p, wrt=("u", "p")):
        value, parts = self.base.partials(x, u, p, wrt=wrt)
        value = value + (u - self._prev(x)) * self.inv_dt
        out = []
        for w, d in zip(wrt, parts):
            if w == "u":
                d = d + self.inv_dt
            elif w == "x":
                slope = edge_derivative(self.prev, self.nodes[1] - self.nodes[0])
                d = d - np.interp(x, self.nodes, slope) * self.inv_dt
            out.append(d)
        return value, out


@dataclass
class StepRecord:
    """Light per-step diagnostics of the elliptic solve."""

    k: int
    t: float
    theta_star: float
    vertex_flux: np.ndarray
    F_residual: float
    F_tolerance: float
    iterations: int
    shots: int
    newton_iterations: int
    used_global_bracket: bool

    @classmethod
    def from_solution(cls, k, t, sol: EllipticSolution, used_global: bool):
        return cls(k, t, sol.theta_star, np.asarray(sol.vertex_flux), sol.F_residual, sol.F_tolerance,
                   sol.bisection_iterations, sol.shots, sol.newton_iterations, used_global)


@dataclass
class ParabolicSolution:
    grid: JunctionGrid
    horizon: float
    times: np.ndarray
    snapshots: np.ndarray  # shape (n + 1, grid.size), flat GridFunction layout
    steps: list[StepRecord]
    completed: int
    M0: float = float("nan")

    @property
    def n(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def complete(self) -> bool:
        return self.completed == self.n

    def snapshot(self, k: int) -> GridFunction:
        return GridFunction.from_flat(self.grid, self.snapshots[k])

    def edge_snapshots(self, i: int) -> np.ndarray:
        """``(n + 1, N_i)`` array of edge ``i`` values, vertex included."""
        start = self.grid.offsets()[i]
        N = self.grid.nodes_per_edge[i]
        out = np.empty((self.n + 1, N))
        out[:, 0] = self.snapshots[:, 0]
        out[:, 1:] = self.snapshots[:, start:start + N - 1]
        return out

    def __call__(self, t, x, edge):
        return interpolant_eval(self, t, x, edge)


def _local_bracket(theta_prev, dtheta_prev, dt, M0, theta_tol):
    half = max(10.0 * theta_tol, 2.0 * abs(dtheta_prev) + dt * M0)
    return theta_prev - half, theta_prev + half


def rothe_step(
    problem: ProblemSpec,
    u_prev: GridFunction,
    k: int,
    cfg: RotheConfig,
    dtheta_prev: float | None = None,
    M0: float | None = None,
) -> EllipticSolution:
    """One implicit step from ``u_prev`` to ``u_k``.

    With ``dtheta_prev`` and ``M0`` given, the root search starts on the local
    bracket ``theta_prev +- max(10 theta_tol, 2|dtheta_prev| + dt M0)``
    (expanded by doubling) and falls back to the global bracket; the fallback
    is noted in ``notes`` of the returned solution.
    """
    if u_prev.grid != cfg.grid:
        raise RotheConfigError("u_prev lives on a different grid")
    if not 1 <= k <= cfg.n:
        raise RotheConfigError(f"step index {k} outside 1..{cfg.n}")
    dt = cfg.dt(problem.horizon)
    t_k = k * dt
    if k == cfg.n:
        t_k = problem.horizon
    grid = cfg.grid
    hams = []
    for i in range(grid.num_edges):
        hams.append(AugmentedHamiltonian(problem.hamiltonian_at(i, t_k), grid.coordinates(i), u_prev.edge(i), dt))
    env = problem.envelope
    mono = 1.0 / dt - env.c_h
    if mono <= 0:
        raise RotheConfigError(f"1/dt = {1 / dt:g} must exceed C_H = {env.c_h:g}")
    ep = EllipticProblem(
        grid=grid,
        sigmas=list(problem.sigma),
        hamiltonians=hams,
        vertex_condition=problem.F,
        outer_values=list(problem.outer_values(t_k)),
        monotonicity=mono,
        root_b=env.root_b,
        root_B=env.root_B,
    )
    from .shooting import ShotResult

    warm = ShotResult(u_prev.vertex_value, np.zeros(grid.num_edges), float("nan"),
                      [_as_edge_solution(u_prev.edge(i)) for i in range(grid.num_edges)])
    options = dict(theta_tol=cfg.theta_tol, F_tol=cfg.F_tol, method=cfg.method, warm=warm,
                   edge_tol=cfg.edge_tol, max_iter=cfg.max_iter, executor=cfg.executor)
    if dtheta_prev is not None and M0 is not None and np.isfinite(M0):
        bracket = _local_bracket(u_prev.vertex_value, dtheta_prev, dt, M0, cfg.theta_tol)
        try:
            return solve_elliptic_junction(ep, bracket=bracket, **options)
        except SignBracketError:
            pass
    sol = solve_elliptic_junction(ep, bracket=theta_bracket(ep), **options)
    sol.notes.append("global bracket")
    return sol


def _as_edge_solution(values):
    from .edge_bvp import EdgeSolution

    return EdgeSolution(np.asarray(values, dtype=float), 0.0, 0, True)


def initial_time_residual(problem: ProblemSpec, grid: JunctionGrid) -> float:
    """``M0 = max_i (sup|-sigma g'' + H(x, g, g') - f(0, x)| + sup|d_t phi_i|)`` sampled on the grid.

    ``g''`` and ``g'`` are central differences at interior nodes;
    ``d_t phi_i`` is a central difference on ``[0, T]`` sampled at 257 points.
    """
    out = 0.0
    ts = np.linspace(0.0, problem.horizon, 257)
    for i in range(grid.num_edges):
        x = grid.coordinates(i)
        h = grid.spacing[i]
        g = np.asarray(problem.initial[i](x), dtype=float) * np.ones_like(x)
        dg = (g[2:] - g[:-2]) / (2 * h)
        d2g = (g[2:] - 2 * g[1:-1] + g[:-2]) / (h * h)
        xi = x[1:-1]
        s = np.asarray(problem.sigma[i](xi, dg), dtype=float)
        H = np.asarray(problem.hamiltonian_at(i, 0.0)(xi, g[1:-1], dg), dtype=float)
        space = float(np.max(np.abs(-s * d2g + H)))
        phi = np.array([float(problem.outer_boundary[i](t)) for t in ts])
        dphi = float(np.max(np.abs(np.gradient(phi, ts)))) if len(ts) > 1 else 0.0
        out = max(out, space + dphi)
    return out


def solve_parabolic(
    problem: ProblemSpec,
    cfg: RotheConfig,
    check_compatibility: bool = True,
    compatibility_tol: float = 1e-6,
    progress: Callable[[int, StepRecord], None] | None = None,
) -> ParabolicSolution:
    """Run ``n`` Rothe steps from the sampled initial datum.

    A failing step raises :class:`RotheStepError` carrying the partial
    solution (``completed`` steps filled in).
    """
    cfg.check(problem)
    if check_compatibility:
        report = compatibility_check(problem, compatibility_tol)
        if not report.ok:
            raise CompatibilityError(report.summary())
    grid = cfg.grid
    n = cfg.n
    times = np.arange(n + 1) * (problem.horizon / n)
    times[-1] = problem.horizon
    if cfg.spill_path is not None:
        snaps = np.lib.format.open_memmap(cfg.spill_path, mode="w+", dtype=float, shape=(n + 1, grid.size))
    else:
        snaps = np.empty((n + 1, grid.size))
    u = problem.initial_values(grid)
    snaps[0] = u.flat
    M0 = initial_time_residual(problem, grid)
    sol = ParabolicSolution(grid, problem.horizon, times, snaps, [], 0, M0)
    dtheta = None
    for k in range(1, n + 1):
        try:
            step = rothe_step(problem, u, k, cfg, dtheta_prev=dtheta, M0=M0)
        except (ShootingError, ArithmeticError, ValueError) as exc:
            raise RotheStepError(k, exc, sol) from exc
        record = StepRecord.from_solution(k, times[k], step, "global bracket" in step.notes)
        dtheta = step.theta_star - u.vertex_value
        u = step.solution
        snaps[k] = u.flat
        sol.steps.append(record)
        sol.completed = k
        if progress is not None:
            progress(k, record)
    return sol


def interpolant_eval(sol: ParabolicSolution, t: float, x: float, edge: int) -> float:
    """Piecewise-linear interpolant in ``t`` (between snapshots) and ``x`` (between nodes)."""
    T = sol.horizon
    a = sol.grid.lengths[edge]
    slack = 1e-12 * max(1.0, T)
    if not (-slack <= t <= T + slack):
        raise ValueError(f"t = {t!r} outside [0, {T}]")
    if not (-1e-12 * a <= x <= a * (1 + 1e-12)):
        raise ValueError(f"x = {x!r} outside edge {edge} = [0, {a}]")
    if sol.completed < sol.n:
        raise ValueError("solution is incomplete")
    t = min(max(t, 0.0), T)
    dt = sol.dt
    k = min(int(math.floor(t / dt)), sol.n - 1)
    w = (t - sol.times[k]) / dt
    nodes = sol.grid.coordinates(edge)
    start = sol.grid.offsets()[edge]
    N = sol.grid.nodes_per_edge[edge]

    def value(j):
        row = sol.snapshots[j]
        vals = np.empty(N)
        vals[0] = row[0]
        vals[1:] = row[start:start + N - 1]
        return float(np.interp(x, nodes, vals))

    u0, u1 = value(k), value(k + 1)
    return u0 + w * (u1 - u0)


# ---------------------------------------------------------------------------
# truncated approximations of the unbounded junction
# ---------------------------------------------------------------------------


@dataclass
class TruncationReport:
    lengths: list[float]
    window: float
    distances: list[float]
    verdict: str
    spacing: float
    steps: int
    solutions: list[ParabolicSolution] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "lengths": self.lengths,
            "window": self.window,
            "distances": self.distances,
            "verdict": self.verdict,
            "spacing": self.spacing,
            "steps": self.steps,
        }

    def format(self) -> str:
        lines = [f"truncation study on [0, {self.window:g}] x [0, T], h = {self.spacing:g}, n = {self.steps}"]
        for a, b, d in zip(self.lengths, self.lengths[1:], self.distances):
            lines.append(f"  a = {a:g} vs {b:g}: sup distance {d:.6e}")
        lines.append(f"  verdict: {self.verdict}")
        return "\n".join(lines)


def truncated_problem(problem: ProblemSpec, a: float) -> ProblemSpec:
    """Every edge cut at length ``a`` with the far Dirichlet value frozen at ``g_i(a)``."""
    I = problem.num_edges
    phis = []
    for i in range(I):
        ga = float(problem.initial[i](np.float64(a)))
        phis.append(Coefficient(CoefficientKind.OUTER_BOUNDARY, expr=Num(ga)))
    return replace(problem, junction=Junction(I, (float(a),) * I), outer_boundary=tuple(phis))


def truncation_study(
    problem: ProblemSpec,
    lengths: Sequence[float],
    window: float,
    steps: int = 32,
    spacing: float = 0.025,
    method: str = "brent",
    keep_solutions: bool = False,
) -> TruncationReport:
    """Solve truncations at each length and compare consecutive ones on ``[0, window]``.

    All truncations share the spacing ``h`` and the time grid, so the window
    nodes coincide.  PASS iff the distances strictly decrease (distances that
    are all at round-off level also pass).
    """
    lengths = [float(a) for a in lengths]
    if len(lengths) < 2 or any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be an increasing sequence of at least two values")
    if not 0 < window <= lengths[0]:
        raise ValueError(f"window must lie in (0, {lengths[0]}]")
    report = compatibility_check(problem)
    if not report.ok:
        raise CompatibilityError(report.summary())
    windowed = []
    sols = []
    for a in lengths:
        tp = truncated_problem(problem, a)
        N = int(round(a / spacing)) + 1
        grid = JunctionGrid(tp.junction, N)
        cfg = RotheConfig(steps, grid, method=method)
        # compatibility at the vertex does not depend on a; checked once above
        sol = solve_parabolic(tp, cfg, check_compatibility=False)
        cut = int(round(window / grid.spacing[0]))
        windowed.append(np.stack([sol.edge_snapshots(i)[:, :cut + 1] for i in range(tp.num_edges)]))
        if keep_solutions:
            sols.append(sol)
    distances = [float(np.max(np.abs(w1 - w0))) for w0, w1 in zip(windowed, windowed[1:])]
    roundoff = 1e-13
    ok = all(d1 < d0 or (d0 <= roundoff and d1 <= roundoff) for d0, d1 in zip(distances, distances[1:]))
    return TruncationReport(lengths, float(window), distances, "PASS" if ok else "FAIL", spacing, steps, sols)
