"""Quasilinear two-point Dirichlet problems on a single edge.

Solves ``-sigma(x, u') u'' + H(x, u, u') = 0`` on ``[0, a]`` with
``u(0) = theta`` and ``u(a) = phi`` by damped Newton on the central
difference residual.  The Jacobian is tridiagonal and is solved with
``scipy.linalg.solve_banded``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .expressions import EvaluationError

__all__ = [
    "EdgeProblem",
    "EdgeSolution",
    "assemble_residual",
    "solve_dirichlet_edge",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EdgeProblem:
    """One edge ``[0, length]`` with Dirichlet data at both ends.

    ``sigma`` is called as ``sigma(x, p)`` and ``hamiltonian`` as
    ``hamiltonian(x, u, p)``; both may offer ``partials(..., wrt=...)`` for an
    analytic Jacobian (see :class:`~starjunction.problem.Coefficient`).
    """

    length: float
    sigma: object
    hamiltonian: object
    left_value: float
    right_value: float
    nodes: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"edge length must be > 0, got {self.length}")
        if int(self.nodes) != self.nodes or self.nodes < 3:
            raise ValueError(f"an edge needs at least 3 nodes, got {self.nodes}")

    @property
    def h(self) -> float:
        return self.length / (self.nodes - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.nodes) * self.h
        x[-1] = self.length
        x.setflags(write=False)
        return x

    def straight_line(self) -> np.ndarray:
        """Initial Newton iterate: linear interpolant of the boundary data."""
        s = self.x / self.length
        v = self.left_value * (1.0 - s) + self.right_value * s
        v[0], v[-1] = self.left_value, self.right_value
        return v


@dataclass
class EdgeSolution:
    values: np.ndarray
    residual_sup: float
    newton_iterations: int
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    message: str = ""


def _broadcast(value, n):
    value = np.asarray(value, dtype=float)
    if value.shape != (n,):
        value = np.broadcast_to(value, (n,)).copy()
    return value


def _node_error(exc: EvaluationError, problem: EdgeProblem, what: str) -> EvaluationError:
    point = dict(exc.point or {})
    node = None
    if "x" in point:
        node = int(np.argmin(np.abs(problem.x - point["x"])))
    point["node"] = node
    return EvaluationError(f"{what} failed at node {node}: {exc}", point)


def _differences(problem: EdgeProblem, v: np.ndarray):
    h = problem.h
    dv = (v[2:] - v[:-2]) / (2.0 * h)
    d2v = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    return dv, d2v


def assemble_residual(problem: EdgeProblem, v) -> np.ndarray:
    """Interior residuals ``R_j = -sigma(x_j, Dv_j) D2v_j + H(x_j, v_j, Dv_j)``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.nodes,):
        raise ValueError(f"expected {problem.nodes} node values, got shape {v.shape}")
    x = problem.x[1:-1]
    dv, d2v = _differences(problem, v)
    m = len(x)
    try:
        s = _broadcast(problem.sigma(x, dv), m)
    except EvaluationError as exc:
        raise _node_error(exc, problem, "sigma") from None
    try:
        hv = _broadcast(problem.hamiltonian(x, v[1:-1], dv), m)
    except EvaluationError as exc:
        raise _node_error(exc, problem, "hamiltonian") from None
    return -s * d2v + hv


def _analytic_bands(problem: EdgeProblem, v: np.ndarray):
    h = problem.h
    x = problem.x[1:-1]
    dv, d2v = _differences(problem, v)
    m = len(x)
    try:
        s, (s_p,) = problem.sigma.partials(x, dv, wrt=("p",))
    except EvaluationError as exc:
        raise _node_error(exc, problem, "sigma") from None
    try:
        hv, (h_u, h_p) = problem.hamiltonian.partials(x, v[1:-1], dv, wrt=("u", "p"))
    except EvaluationError as exc:
        raise _node_error(exc, problem, "hamiltonian") from None
    s, s_p, hv, h_u, h_p = (_broadcast(a, m) for a in (s, s_p, hv, h_u, h_p))
    R = -s * d2v + hv
    lower = s_p * d2v / (2 * h) - s / (h * h) - h_p / (2 * h)
    diag = 2 * s / (h * h) + h_u
    upper = -s_p * d2v / (2 * h) - s / (h * h) + h_p / (2 * h)
    return R, lower, diag, upper


def _fd_bands(problem: EdgeProblem, v: np.ndarray, R: np.ndarray):
    """Tridiagonal Jacobian from three colored finite-difference sweeps."""
    m = problem.nodes - 2
    lower, diag, upper = np.zeros(m), np.zeros(m), np.zeros(m)
    idx = np.arange(1, problem.nodes - 1)
    for color in range(3):
        cols = idx[(idx - 1) % 3 == color]
        if cols.size == 0:
            continue
        step = 1e-7 * np.maximum(1.0, np.abs(v[cols]))
        w = v.copy()
        w[cols] += step
        dR = assemble_residual(problem, w) - R
        for c, st in zip(cols, step):
            j = c - 1  # interior row of node c
            diag[j] = dR[j] / st
            if j - 1 >= 0:
                upper[j - 1] = dR[j - 1] / st
            if j + 1 < m:
                lower[j + 1] = dR[j + 1] / st
    return lower, diag, upper


def _residual_and_bands(problem: EdgeProblem, v: np.ndarray, jacobian: str):
    if jacobian == "analytic" or (jacobian == "auto" and _has_partials(problem)):
        return _analytic_bands(problem, v)
    R = assemble_residual(problem, v)
    return (R, *_fd_bands(problem, v, R))


def _has_partials(problem: EdgeProblem) -> bool:
    return bool(getattr(problem.sigma, "has_partials", False)) and bool(
        getattr(problem.hamiltonian, "has_partials", False)
    )


def solve_dirichlet_edge(
    problem: EdgeProblem,
    tol: float = 1e-10,
    max_iter: int = 100,
    damping: bool = True,
    initial=None,
    jacobian: str = "auto",
) -> EdgeSolution:
    """Damped Newton for one edge.

    The residual is measured as ``sup|R| / (1 + sup|v|)``.  Convergence is
    declared once it drops below ``tol`` or below the round-off floor of the
    stencil (``16 eps`` times the Jacobian's row-sum norm), whichever is
    larger; on fine grids ``tol = 1e-10`` can sit beneath the floor.

    ``initial`` overrides the straight-line start (full node array or interior
    values); its endpoints are reset to the boundary data.
    """
    if jacobian not in ("auto", "analytic", "fd"):
        raise ValueError(f"unknown jacobian mode {jacobian!r}")
    if initial is None:
        v = problem.straight_line()
    else:
        initial = np.asarray(initial, dtype=float)
        v = np.empty(problem.nodes)
        if initial.shape == (problem.nodes,):
            v[:] = initial
        elif initial.shape == (problem.nodes - 2,):
            v[1:-1] = initial
        else:
            raise ValueError(f"initial iterate has shape {initial.shape}")
        v[0], v[-1] = problem.left_value, problem.right_value

    history: list[float] = []
    iterations = 0
    message = ""
    converged = False
    while True:
        R, lower, diag, upper = _residual_and_bands(problem, v, jacobian)
        scale = 1.0 + np.max(np.abs(v))
        r_sup = float(np.max(np.abs(R))) if R.size else 0.0
        r = r_sup / scale
        history.append(r)
        jac_norm = float(np.max(np.abs(lower) + np.abs(diag) + np.abs(upper)))
        floor = 16.0 * _EPS * jac_norm
        if not np.isfinite(r):
            message = "residual is not finite"
            break
        if r <= max(tol, floor):
            converged = True
            break
        if iterations >= max_iter:
            message = f"no convergence after {max_iter} Newton steps"
            break
        ab = np.empty((3, R.size))
        ab[0, 0] = 0.0
        ab[0, 1:] = upper[:-1]
        ab[1] = diag
        ab[2, :-1] = lower[1:]
        ab[2, -1] = 0.0
        try:
            delta = solve_banded((1, 1), ab, -R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            message = f"singular Jacobian: {exc}"
            break
        step = 1.0
        w = v.copy()
        w[1:-1] = v[1:-1] + delta
        if damping:
            accepted = False
            for _ in range(41):
                try:
                    r_new = float(np.max(np.abs(assemble_residual(problem, w))))
                except EvaluationError:
                    r_new = np.inf
                if r_new <= (1.0 - 1e-4 * step) * r_sup:
                    accepted = True
                    break
                step *= 0.5
                w[1:-1] = v[1:-1] + step * delta
            if not accepted:
                if r <= 100.0 * max(tol, floor):
                    converged = True
                    message = "stagnated at round-off level"
                else:
                    message = "line search failed after 40 halvings"
                break
        v = w
        iterations += 1

    return EdgeSolution(v, history[-1], iterations, converged, history, message)
