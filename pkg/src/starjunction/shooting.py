"""Elliptic junction problems solved by shooting on the vertex value.

For a trial vertex value ``theta`` every edge carries an independent
Dirichlet problem (``u(0) = theta``, ``u(a_i) = phi_i``).  The vertex
condition ``F(theta, u_x(0))`` is continuous in ``theta`` and changes sign on
an explicit bracket, so a bracketing root finder locates ``theta*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .edge_bvp import EdgeProblem, EdgeSolution, solve_dirichlet_edge
from .graph import GridFunction, JunctionGrid, vertex_gradient
from .problem import ProblemSpec

__all__ = [
    "EllipticProblem",
    "EllipticSolution",
    "ShotResult",
    "ShootingError",
    "SignBracketError",
    "EdgeDivergedError",
    "MissingRootPairError",
    "theta_bracket",
    "shoot",
    "solve_elliptic_junction",
]

MIN_HALF_WIDTH = 0.1
K_SAMPLES = 1025
K_INFLATION = 1.1


class ShootingError(RuntimeError):
    pass


class SignBracketError(ShootingError):
    code = "SIGN_BRACKET_FAILED"

    def __init__(self, theta_lo, theta_hi, F_lo, F_hi, expansions):
        self.theta_lo, self.theta_hi = theta_lo, theta_hi
        self.F_lo, self.F_hi = F_lo, F_hi
        self.expansions = expansions
        super().__init__(
            f"SIGN_BRACKET_FAILED: F({theta_lo:.6g}) = {F_lo:.6g} and F({theta_hi:.6g}) = {F_hi:.6g} "
            f"have the same sign after {expansions} doublings; the monotonicity assumptions on F "
            f"or H may be violated, or K_i is underestimated"
        )


class EdgeDivergedError(ShootingError):
    def __init__(self, edge: int, theta: float, solution: EdgeSolution):
        self.edge, self.theta, self.solution = edge, theta, solution
        super().__init__(
            f"edge {edge} solve did not converge at theta = {theta!r}: {solution.message} "
            f"(last scaled residual {solution.residual_sup:.3e})"
        )


class MissingRootPairError(ShootingError):
    def __init__(self):
        super().__init__(
            "the envelope has no root pair (b, B) with F(b, B) = 0; supply root_b and root_B "
            "or pass an explicit bracket"
        )


@dataclass
class EllipticProblem:
    """Data of one elliptic junction problem on a fixed grid.

    ``hamiltonians[i]`` is called as ``H(x, u, p)``; ``monotonicity`` is the
    constant ``c > 0`` with ``H(x, v, p) - H(x, u, p) >= c (v - u)`` used in the
    bracket formula.
    """

    grid: JunctionGrid
    sigmas: Sequence[object]
    hamiltonians: Sequence[object]
    vertex_condition: Callable
    outer_values: Sequence[float]
    monotonicity: float
    root_b: float | None = None
    root_B: Sequence[float] | None = None

    def __post_init__(self):
        n = self.grid.num_edges
        for name in ("sigmas", "hamiltonians", "outer_values"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} needs {n} entries")
        self.outer_values = [float(v) for v in self.outer_values]
        if not self.monotonicity > 0:
            raise ValueError(f"monotonicity constant must be > 0, got {self.monotonicity}")

    @classmethod
    def from_spec(cls, spec: ProblemSpec, grid: JunctionGrid, t: float = 0.0) -> "EllipticProblem":
        """The elliptic problem of ``spec`` with data frozen at time ``t``."""
        if grid.junction != spec.junction:
            raise ValueError("grid and problem live on different junctions")
        env = spec.envelope
        return cls(
            grid=grid,
            sigmas=list(spec.sigma),
            hamiltonians=[spec.hamiltonian_at(i, t) for i in range(spec.num_edges)],
            vertex_condition=spec.F,
            outer_values=list(spec.outer_values(t)),
            monotonicity=env.c_h,
            root_b=env.root_b,
            root_B=env.root_B,
        )

    def F(self, u, p) -> float:
        return float(self.vertex_condition(float(u), np.asarray(p, dtype=float)))

    def edge_problem(self, i: int, theta: float) -> EdgeProblem:
        return EdgeProblem(
            self.grid.lengths[i],
            self.sigmas[i],
            self.hamiltonians[i],
            float(theta),
            self.outer_values[i],
            self.grid.nodes_per_edge[i],
        )


@dataclass
class ShotResult:
    theta: float
    vertex_flux: np.ndarray
    F: float
    edges: list[EdgeSolution]

    def grid_function(self, grid: JunctionGrid) -> GridFunction:
        return GridFunction(grid, self.theta, [e.values[1:] for e in self.edges])


@dataclass
class EllipticSolution:
    theta_star: float
    solution: GridFunction
    vertex_flux: np.ndarray
    F_residual: float
    F_tolerance: float
    bisection_iterations: int
    edge_solutions: list[EdgeSolution]
    bracket: tuple[float, float]
    shots: int = 0
    method: str = "bisection"
    bracket_expansions: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def newton_iterations(self) -> int:
        return sum(e.newton_iterations for e in self.edge_solutions)


def theta_bracket(problem: EllipticProblem) -> tuple[float, float]:
    """Symmetric bracket ``(-theta_hi, theta_hi)`` for the vertex value.

    ``theta_hi = |b| + max_i (|phi_i| + |a_i B_i| + K_i / c)`` with
    ``K_i = 1.1 max_x |H_i(x, B_i x, B_i)|`` over 1025 equispaced points and
    ``c`` the monotonicity constant of ``H``.  Degenerate brackets are widened
    to ``(-0.1, 0.1)``.
    """
    if problem.root_B is None or problem.root_b is None:
        raise MissingRootPairError()
    best = 0.0
    for i, a in enumerate(problem.grid.lengths):
        Bi = float(problem.root_B[i])
        x = np.linspace(0.0, a, K_SAMPLES)
        vals = np.asarray(problem.hamiltonians[i](x, Bi * x, np.full_like(x, Bi)), dtype=float)
        K = K_INFLATION * float(np.max(np.abs(vals)))
        best = max(best, abs(problem.outer_values[i]) + abs(a * Bi) + K / problem.monotonicity)
    hi = abs(float(problem.root_b)) + best
    hi = max(hi, MIN_HALF_WIDTH)
    return -hi, hi


def _warm_iterate(prev: ShotResult | None, i: int, theta: float, x: np.ndarray, a: float):
    if prev is None:
        return None
    return prev.edges[i].values + (theta - prev.theta) * (1.0 - x / a)


def shoot(
    problem: EllipticProblem,
    theta: float,
    warm: ShotResult | None = None,
    edge_tol: float = 1e-10,
    max_iter: int = 100,
    executor=None,
) -> ShotResult:
    """Solve the ``I`` Dirichlet problems with vertex value ``theta`` and evaluate ``F``.

    ``warm`` is a previous shot whose edge solutions, shifted by
    ``(theta - theta_prev)(1 - x/a)``, start Newton.  ``executor`` (a
    ``concurrent.futures`` executor) runs the edge solves concurrently.
    """
    theta = float(theta)
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")

    def solve(i):
        ep = problem.edge_problem(i, theta)
        init = _warm_iterate(warm, i, theta, ep.x, ep.length)
        return solve_dirichlet_edge(ep, tol=edge_tol, max_iter=max_iter, initial=init)

    indices = range(problem.grid.num_edges)
    edges = list(executor.map(solve, indices)) if executor is not None else [solve(i) for i in indices]
    for i, sol in enumerate(edges):
        if not sol.converged:
            raise EdgeDivergedError(i, theta, sol)
    flux = np.array(
        [(-3.0 * e.values[0] + 4.0 * e.values[1] - e.values[2]) / (2.0 * h)
         for e, h in zip(edges, problem.grid.spacing)]
    )
    return ShotResult(theta, flux, problem.F(theta, flux), edges)


class _Done(Exception):
    def __init__(self, shot):
        self.shot = shot


def solve_elliptic_junction(
    problem: EllipticProblem,
    theta_tol: float = 1e-12,
    F_tol: float = 1e-9,
    bracket: tuple[float, float] | None = None,
    method: str = "bisection",
    max_expansions: int = 8,
    warm: ShotResult | None = None,
    edge_tol: float = 1e-10,
    max_iter: int = 100,
    executor=None,
) -> EllipticSolution:
    """Find ``theta*`` with ``F(theta*, u_x(0)) = 0`` by a bracketing root search.

    ``method="bisection"`` halves the bracket until ``|F| <= F_tol (1 + |F_lo| + |F_hi|)``
    or the width is at most ``theta_tol``.  ``method="brent"`` uses
    :func:`scipy.optimize.brentq` on the same bracket with the same stopping
    rule; it keeps the sign-change guarantee and needs far fewer shots on
    smooth problems.  A bracket without a sign change is doubled about its
    centre up to ``max_expansions`` times before :class:`SignBracketError`.
    """
    if method not in ("bisection", "brent"):
        raise ValueError(f"unknown method {method!r}")
    if bracket is None:
        bracket = theta_bracket(problem)
    lo, hi = float(min(bracket)), float(max(bracket))
    shots = 0

    def run(theta, w):
        nonlocal shots
        shots += 1
        return shoot(problem, theta, warm=w, edge_tol=edge_tol, max_iter=max_iter, executor=executor)

    s_lo = run(lo, warm)
    s_hi = run(hi, s_lo)
    expansions = 0
    while np.sign(s_lo.F) == np.sign(s_hi.F) and s_lo.F != 0.0:
        if expansions >= max_expansions:
            raise SignBracketError(lo, hi, s_lo.F, s_hi.F, expansions)
        centre, width = 0.5 * (lo + hi), hi - lo
        lo, hi = centre - width, centre + width
        s_lo = run(lo, s_lo)
        s_hi = run(hi, s_hi)
        expansions += 1

    f_scale = F_tol * (1.0 + abs(s_lo.F) + abs(s_hi.F))
    iterations = 0
    if abs(s_lo.F) <= f_scale or abs(s_hi.F) <= f_scale:
        best = s_lo if abs(s_lo.F) <= abs(s_hi.F) else s_hi
        if abs(s_lo.F) <= f_scale and abs(s_hi.F) <= f_scale and s_lo.F * s_hi.F < 0:
            # both ends are acceptable: take the secant point so a narrow
            # bracket does not pin theta to one of its ends
            theta = s_lo.theta - s_lo.F * (s_hi.theta - s_lo.theta) / (s_hi.F - s_lo.F)
            mid = run(theta, best)
            iterations += 1
            if abs(mid.F) <= abs(best.F):
                best = mid
    elif method == "bisection":
        a, b = s_lo, s_hi
        best = a if abs(a.F) < abs(b.F) else b
        while True:
            mid_theta = 0.5 * (a.theta + b.theta)
            nearest = a if abs(mid_theta - a.theta) <= abs(mid_theta - b.theta) else b
            mid = run(mid_theta, nearest)
            iterations += 1
            if abs(mid.F) < abs(best.F):
                best = mid
            if mid.F == 0.0 or abs(mid.F) <= f_scale:
                best = mid
                break
            if np.sign(mid.F) == np.sign(a.F):
                a = mid
            else:
                b = mid
            if abs(b.theta - a.theta) <= theta_tol:
                break
    else:
        from scipy.optimize import brentq

        cache = {"last": s_hi, "best": s_lo if abs(s_lo.F) < abs(s_hi.F) else s_hi}

        def f(theta):
            nonlocal iterations
            iterations += 1
            shot = run(theta, cache["last"])
            cache["last"] = shot
            if abs(shot.F) < abs(cache["best"].F):
                cache["best"] = shot
            if abs(shot.F) <= f_scale:
                raise _Done(shot)
            return shot.F

        try:
            brentq(f, lo, hi, xtol=theta_tol, rtol=4 * np.finfo(float).eps, maxiter=200)
        except _Done as done:
            cache["best"] = done.shot
        best = cache["best"]

    grid = problem.grid
    solution = best.grid_function(grid)
    flux = vertex_gradient(solution)
    return EllipticSolution(
        theta_star=best.theta,
        solution=solution,
        vertex_flux=flux,
        F_residual=problem.F(best.theta, flux),
        F_tolerance=f_scale,
        bisection_iterations=iterations,
        edge_solutions=best.edges,
        bracket=(lo, hi),
        shots=shots,
        method=method,
        bracket_expansions=expansions,
    )
