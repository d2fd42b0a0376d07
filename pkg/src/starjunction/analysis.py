"""Executable a-priori estimates and regularity checks for computed solutions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import GridFunction, JunctionGrid, edge_derivative
from .problem import GrowthEnvelope, ProblemSpec
from .rothe import ParabolicSolution
from .shooting import EllipticSolution

__all__ = [
    "HolderReport",
    "EstimateEntry",
    "EstimateReport",
    "holder_seminorm_x",
    "holder_seminorm_t",
    "holder_report",
    "interpolation_bound",
    "check_interpolation",
    "recursion_table",
    "time_difference_bound",
    "forcing_time_rate",
    "BarrierParams",
    "barrier_params",
    "measured_barrier_M",
    "verify_barrier",
    "prop44_observations",
    "prop44_uniformity",
    "ComparisonResult",
    "check_comparison",
    "residual_norm",
    "PASS",
    "FAIL",
    "UNCHECKED",
]

PASS = "PASS"
FAIL = "FAIL"
UNCHECKED = "UNCHECKED"

MAX_SEPARATION = 1.0


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class EstimateEntry:
    lemma_id: str
    measured: float
    bound: float
    margin: float
    verdict: str
    witnesses: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "measured": _jsonable(self.measured),
            "bound": _jsonable(self.bound),
            "margin": self.margin,
            "verdict": self.verdict,
            "witnesses": _jsonable(self.witnesses),
        }

    def format(self) -> str:
        return (
            f"{self.lemma_id:<12} {self.verdict:<10} measured {self.measured:.6g} "
            f"bound {self.bound:.6g} (margin {self.margin:g})"
            + (f"  {json.dumps(_jsonable(self.witnesses), sort_keys=True)}" if self.witnesses else "")
        )


def _verdict(measured, bound, margin, floor=0.0):
    return PASS if measured <= bound * (1.0 + margin) + floor else FAIL


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class EstimateReport:
    entries: list[EstimateEntry] = field(default_factory=list)

    def __getitem__(self, lemma_id: str) -> EstimateEntry:
        for e in self.entries:
            if e.lemma_id == lemma_id:
                return e
        raise KeyError(lemma_id)

    def add(self, entry: EstimateEntry) -> EstimateEntry:
        self.entries.append(entry)
        return entry

    @property
    def ok(self) -> bool:
        return all(e.verdict != FAIL for e in self.entries)

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format(self) -> str:
        return "\n".join(["estimate report"] + ["  " + e.format() for e in self.entries])


@dataclass
class HolderReport:
    alpha: float
    seminorm_x: float
    seminorm_t: float
    pair_count: int
    max_pair_separation: float


# ---------------------------------------------------------------------------
# Hoelder seminorms
# ---------------------------------------------------------------------------


def _pairwise(values: np.ndarray, coords: np.ndarray, alpha: float):
    """Max of ``|f(a) - f(b)| / |a - b|^alpha`` along the last axis, pairs with ``|a - b| <= 1``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    values = np.atleast_2d(np.asarray(values, dtype=float))
    coords = np.asarray(coords, dtype=float)
    if values.size == 0 or coords.size < 2:
        raise ValueError("need at least two samples")
    if values.shape[-1] != coords.size:
        raise ValueError(f"{coords.size} coordinates for {values.shape[-1]} samples")
    order = np.argsort(coords, kind="stable")
    coords = coords[order]
    values = values[:, order]
    best = 0.0
    pairs = 0
    max_sep = 0.0
    limit = MAX_SEPARATION * (1 + 1e-12)
    n = coords.size
    for lag in range(1, n):
        sep = coords[lag:] - coords[:-lag]
        mask = (sep <= limit) & (sep > 0)
        if not mask.any():
            if np.min(sep) > limit:
                break
            continue
        diff = np.abs(values[:, lag:][:, mask] - values[:, :-lag][:, mask]) / sep[mask] ** alpha
        best = max(best, float(np.max(diff)))
        pairs += int(mask.sum()) * values.shape[0]
        max_sep = max(max_sep, float(np.max(sep[mask])))
    return best, pairs, max_sep


def holder_seminorm_x(values, x, alpha: float) -> float:
    """``sup |f(t, x) - f(t, y)| / |x - y|^alpha`` over sampled pairs with ``|x - y| <= 1``.

    ``values`` is 1-D (one time slice) or ``(n_t, n_x)``.
    """
    return _pairwise(values, x, alpha)[0]


def holder_seminorm_t(values, t, alpha: float) -> float:
    """Time seminorm of ``(n_t, n_x)`` samples (or 1-D samples in time)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return _pairwise(values, t, alpha)[0]
    return _pairwise(values.T, t, alpha)[0]


def holder_report(values, t, x, alpha: float) -> HolderReport:
    values = np.asarray(values, dtype=float)
    sx, px, dx = _pairwise(values, x, alpha)
    st, pt, dt = _pairwise(values.T, t, alpha)
    return HolderReport(alpha, sx, st, px + pt, max(dx, dt))


# ---------------------------------------------------------------------------
# interpolation constant
# ---------------------------------------------------------------------------


def interpolation_bound(nu1: float, nu2: float, gamma: float) -> float:
    """``C = 2 nu2 (nu1 / (gamma nu2))^(gamma/(1+gamma)) + 2 nu1 (gamma nu2 / nu1)^(-1/(1+gamma))``."""
    if not (nu1 > 0 and nu2 > 0):
        raise ValueError(f"nu1 and nu2 must be > 0, got {nu1}, {nu2}")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return 2.0 * nu2 * (nu1 / (gamma * nu2)) ** (gamma / (1.0 + gamma)) + 2.0 * nu1 * (
        gamma * nu2 / nu1
    ) ** (-1.0 / (1.0 + gamma))


def check_interpolation(values, t, x, alpha: float, gamma: float, margin: float = 0.0) -> EstimateEntry:
    """Measure ``nu1``, ``nu2`` and the time seminorm of ``d_x f`` and compare with ``C``.

    ``nu1`` is the alpha-Hoelder constant of ``f`` in ``t``, ``nu2`` the
    gamma-Hoelder constant of ``d_x f`` in ``x`` (central differences,
    one-sided at the ends); the measured quantity is the
    ``alpha gamma / (1 + gamma)`` time seminorm of ``d_x f``.
    """
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    fx = np.array([edge_derivative(row, h) for row in values])
    nu1 = holder_seminorm_t(values, t, alpha)
    nu2 = holder_seminorm_x(fx, x, gamma)
    exponent = alpha * gamma / (1.0 + gamma)
    measured = holder_seminorm_t(fx, t, exponent)
    if nu1 == 0 or nu2 == 0:
        # a constant-in-t or affine-in-x sample: the bound degenerates to 0
        bound = 0.0
    else:
        bound = interpolation_bound(nu1, nu2, gamma)
    return EstimateEntry(
        "lemma_2_1",
        measured,
        bound,
        margin,
        PASS if measured <= bound * (1 + margin) + 1e-14 else FAIL,
        {"nu1": nu1, "nu2": nu2, "alpha": alpha, "gamma": gamma, "exponent": exponent},
    )


# ---------------------------------------------------------------------------
# time-difference recursion
# ---------------------------------------------------------------------------


def recursion_table(M0: float, c_tilde: float, n: int, forcing_increment: float = 0.0) -> np.ndarray:
    """``M_k = n / (n - c) (M_{k-1} + forcing_increment)`` for ``k = 0..n``.

    ``forcing_increment`` is ``dt * sup|d_t f|``; it is zero without forcing,
    leaving ``M_n = (n / (n - c))^n M0``.
    """
    if not n > c_tilde:
        raise ValueError(f"the recursion needs n > C_H T, got n = {n}, C_H T = {c_tilde}")
    q = n / (n - c_tilde)
    M = np.empty(n + 1)
    M[0] = M0
    for k in range(1, n + 1):
        M[k] = q * (M[k - 1] + forcing_increment)
    return M


def forcing_time_rate(problem: ProblemSpec, grid: JunctionGrid, samples: int = 257) -> float:
    """Sampled ``sup |d_t f|`` over the grid and ``[0, T]`` (zero without forcing)."""
    if problem.forcing is None:
        return 0.0
    ts = np.linspace(0.0, problem.horizon, samples)
    out = 0.0
    for i in range(problem.num_edges):
        x = grid.coordinates(i)
        vals = np.array([np.asarray(problem.forcing[i](t, x), dtype=float) * np.ones_like(x) for t in ts])
        out = max(out, float(np.max(np.abs(np.gradient(vals, ts, axis=0)))))
    return out


def _time_differences(sol: ParabolicSolution) -> np.ndarray:
    snaps = np.asarray(sol.snapshots[: sol.completed + 1])
    return np.max(np.abs(np.diff(snaps, axis=0)), axis=1) / sol.dt


def time_difference_bound(
    sol: ParabolicSolution,
    c_h: float,
    margin: float = 0.2,
    M0: float | None = None,
    forcing_rate: float = 0.0,
) -> EstimateEntry:
    """Compare ``max_k sup|u_k - u_{k-1}| / dt`` with the recursion bound ``M_n``.

    The recursion uses ``c = C_H T`` (time step ``T/n`` instead of ``1/n``)
    and adds ``dt sup|d_t f|`` per step when a forcing is present.
    """
    n = sol.n
    c_tilde = c_h * sol.horizon
    if M0 is None:
        M0 = sol.M0
    table = recursion_table(M0, c_tilde, n, sol.dt * forcing_rate)
    diffs = _time_differences(sol)
    k = int(np.argmax(diffs)) + 1 if diffs.size else 0
    measured = float(diffs.max()) if diffs.size else 0.0
    bound = float(table[-1])
    # difference quotients of stored snapshots carry round-off of order eps sup|u| / dt
    snaps = np.asarray(sol.snapshots[: sol.completed + 1])
    floor = 64.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(snaps)))) / sol.dt
    entry = EstimateEntry(
        "lemma_4_1",
        measured,
        bound,
        margin,
        _verdict(measured, bound, margin, floor),
        {"k": k, "M0": M0, "c_tilde": c_tilde, "n": n, "forcing_rate": forcing_rate,
         "roundoff_floor": floor, "scaling": "dt = T/n; c = C_H T"},
    )
    entry.details["table"] = table
    entry.details["differences"] = diffs
    return entry


# ---------------------------------------------------------------------------
# barrier near the vertex
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BarrierParams:
    beta: float
    theta_bar: float
    kappa: float
    M: float

    def upper(self, u0: float, x):
        return u0 + np.log1p(self.theta_bar * np.asarray(x, dtype=float)) / self.beta

    def lower(self, u0: float, x):
        return u0 - np.log1p(self.theta_bar * np.asarray(x, dtype=float)) / self.beta


def barrier_params(
    M: float,
    envelope: GrowthEnvelope | None = None,
    min_length: float = 1.0,
    *,
    mu_2M: float | None = None,
    nu_lower: float | None = None,
) -> BarrierParams:
    """Smallest power of two ``beta`` with ``beta >= mu(2M)/nu (1 + 1/beta^2) + M/(nu beta^2)``.

    ``theta_bar = beta^2 e^(2 beta M) + e^(2 beta M) / min a`` and
    ``kappa = (e^(2 beta M) - 1) / theta_bar``.  ``mu(2M)`` and ``nu`` come from
    the envelope unless given explicitly.
    """
    if not M > 0:
        raise ValueError(f"M must be > 0, got {M}")
    if mu_2M is None:
        if envelope is None or envelope.mu is None:
            raise ValueError("no mu bound: pass mu_2M or an envelope with a mu bound")
        mu_2M = float(np.asarray(envelope.mu(2.0 * M, 0.0)))
    if nu_lower is None:
        if envelope is None:
            raise ValueError("pass nu_lower or an envelope")
        nu_lower = envelope.nu_lower
    if not min_length > 0:
        raise ValueError(f"min_length must be > 0, got {min_length}")
    for e in range(61):
        beta = float(2 ** e)
        if beta >= mu_2M / nu_lower * (1.0 + 1.0 / beta ** 2) + M / (nu_lower * beta ** 2):
            break
    else:
        raise ValueError("no beta <= 2^60 satisfies the barrier condition; the envelope is inconsistent")
    try:
        growth = math.exp(2.0 * beta * M)
    except OverflowError:
        raise ValueError(f"exp(2 beta M) overflows for beta = {beta}, M = {M}") from None
    theta_bar = beta ** 2 * growth + growth / min_length
    kappa = (growth - 1.0) / theta_bar
    return BarrierParams(beta, theta_bar, kappa, M)


def measured_barrier_M(sol: ParabolicSolution) -> float:
    """``sup |u| + max_k sup |u_k - u_{k-1}| / dt`` over the computed solution."""
    snaps = np.asarray(sol.snapshots[: sol.completed + 1])
    diffs = _time_differences(sol)
    return float(np.max(np.abs(snaps))) + (float(diffs.max()) if diffs.size else 0.0)


def verify_barrier(problem: ProblemSpec, sol: ParabolicSolution, params: BarrierParams | None = None) -> EstimateEntry:
    """Check ``w- <= u_k <= w+`` node by node on ``[0, kappa]`` of every edge and snapshot.

    ``w+-(x) = u_k(0) +- ln(1 + theta_bar x) / beta``.  The measured value is
    ``max |u_k(x) - u_k(0)| / (ln(1 + theta_bar x) / beta)``, bound 1.
    UNCHECKED when the envelope declares no mu bound and no params are given.
    """
    if params is None:
        if problem.envelope.mu is None:
            return EstimateEntry("lemma_4_2", float("nan"), 1.0, 0.0, UNCHECKED,
                                 {"reason": "no mu bound declared"})
        params = barrier_params(measured_barrier_M(sol), problem.envelope, sol.grid.junction.min_length)
    worst, witness = 0.0, {}
    for i in range(sol.grid.num_edges):
        x = sol.grid.coordinates(i)
        sel = (x > 0) & (x <= params.kappa * (1 + 1e-12))
        if not sel.any():
            continue
        E = sol.edge_snapshots(i)[: sol.completed + 1]
        gap = np.log1p(params.theta_bar * x[sel]) / params.beta
        ratio = np.abs(E[:, sel] - E[:, :1]) / gap
        k, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[k, j] > worst or not witness:
            worst = float(ratio[k, j])
            witness = {"k": int(k), "edge": i, "node": int(np.flatnonzero(sel)[j]), "x": float(x[sel][j])}
    witness.update({"beta": params.beta, "theta_bar": params.theta_bar, "kappa": params.kappa, "M": params.M})
    return EstimateEntry("lemma_4_2", worst, 1.0, 0.0, PASS if worst <= 1.0 else FAIL, witness)


# ---------------------------------------------------------------------------
# n-uniform bounds
# ---------------------------------------------------------------------------


def prop44_observations(sol: ParabolicSolution) -> dict:
    """``M1 = sup|u|``, ``M2 = sup|d_x u|`` (discrete) and ``M3 = max_k sup|u_k - u_{k-1}|/dt``."""
    snaps = np.asarray(sol.snapshots[: sol.completed + 1])
    M2 = 0.0
    for i in range(sol.grid.num_edges):
        E = sol.edge_snapshots(i)[: sol.completed + 1]
        h = sol.grid.spacing[i]
        D = np.empty_like(E)
        D[:, 1:-1] = (E[:, 2:] - E[:, :-2]) / (2 * h)
        D[:, 0] = (-3 * E[:, 0] + 4 * E[:, 1] - E[:, 2]) / (2 * h)
        D[:, -1] = (3 * E[:, -1] - 4 * E[:, -2] + E[:, -3]) / (2 * h)
        M2 = max(M2, float(np.max(np.abs(D))))
    diffs = _time_differences(sol)
    return {"M1": float(np.max(np.abs(snaps))), "M2": M2, "M3": float(diffs.max()) if diffs.size else 0.0}


def prop44_uniformity(solutions: Sequence[ParabolicSolution], factor: float = 2.0) -> EstimateEntry:
    """n-independence of M1, M2, M3 over a ladder of runs.

    The bound for each quantity is ``factor`` times its largest-``n``
    observation; ``measured`` is the largest ratio of an observation to its
    largest-``n`` value.  Relative spreads ``(max - min) / max`` are reported.
    """
    sols = sorted(solutions, key=lambda s: s.n)
    obs = [prop44_observations(s) for s in sols]
    spreads, ratio = {}, 0.0
    for key in ("M1", "M2", "M3"):
        vals = np.array([o[key] for o in obs])
        ref = vals[-1]
        spreads[key] = float((vals.max() - vals.min()) / vals.max()) if vals.max() > 0 else 0.0
        ratio = max(ratio, float(vals.max() / ref) if ref > 0 else (0.0 if vals.max() == 0 else math.inf))
    return EstimateEntry(
        "prop_4_4",
        ratio,
        factor,
        0.0,
        PASS if ratio <= factor else FAIL,
        {"n": [s.n for s in sols], "observations": obs, "relative_spread": spreads},
    )


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonResult:
    ok: bool
    max_violation: float
    witness: tuple[int, int, int] | None  # (k, edge, node)

    def __bool__(self):
        return self.ok


def _as_snapshots(obj):
    if isinstance(obj, ParabolicSolution):
        return obj.grid, np.asarray(obj.snapshots[: obj.completed + 1]), obj.times[: obj.completed + 1]
    if isinstance(obj, EllipticSolution):
        obj = obj.solution
    if isinstance(obj, GridFunction):
        return obj.grid, obj.flat[None, :], None
    raise TypeError(f"cannot compare objects of type {type(obj).__name__}")


def _locate(grid: JunctionGrid, flat_index: int) -> tuple[int, int]:
    if flat_index == 0:
        return 0, 0
    for i, start in enumerate(grid.offsets()):
        if start <= flat_index < start + grid.nodes_per_edge[i] - 1:
            return i, flat_index - start + 1
    raise IndexError(flat_index)


def check_comparison(sub, sup, tol: float = 0.0) -> ComparisonResult:
    """``sub <= sup + tol`` at every node and snapshot; witness ``(k, edge, node)``."""
    g1, a, t1 = _as_snapshots(sub)
    g2, b, t2 = _as_snapshots(sup)
    if g1 != g2 or a.shape != b.shape:
        raise ValueError("solutions live on different grids or time grids")
    if t1 is not None and t2 is not None and not np.array_equal(t1, t2):
        raise ValueError("solutions have different time grids")
    excess = a - b
    worst = float(np.max(excess))
    bad = excess > tol
    if not bad.any():
        return ComparisonResult(True, worst, None)
    k, j = np.argwhere(bad)[0]
    edge, node = _locate(g1, int(j))
    return ComparisonResult(False, worst, (int(k), edge, node))


# ---------------------------------------------------------------------------
# PDE residual
# ---------------------------------------------------------------------------


def _edge_residual(problem: ProblemSpec, i, x, v, t, dt=None, prev=None):
    h = x[1] - x[0]
    dv = (v[2:] - v[:-2]) / (2 * h)
    d2v = (v[2:] - 2 * v[1:-1] + v[:-2]) / (h * h)
    xi = x[1:-1]
    s = np.asarray(problem.sigma[i](xi, dv), dtype=float)
    H = np.asarray(problem.hamiltonian_at(i, t)(xi, v[1:-1], dv), dtype=float)
    R = -s * d2v + H
    if dt is not None:
        R = R + (v[1:-1] - prev[1:-1]) / dt
    return R


def residual_norm(solution, problem: ProblemSpec, k: int | None = None, t: float = 0.0, scaled: bool = True) -> float:
    """Sup over interior nodes of the discrete PDE residual.

    Elliptic input (``EllipticSolution`` or ``GridFunction``) uses the data at
    time ``t``; a ``ParabolicSolution`` needs ``k >= 1`` and adds the backward
    difference ``(u_k - u_{k-1}) / dt`` at ``t_k``.  With ``scaled=True`` the
    result is divided by ``1 + sup|u|``, the units of the solver tolerance.
    """
    if isinstance(solution, ParabolicSolution):
        if k is None or not 1 <= k <= solution.completed:
            raise ValueError("a parabolic residual needs a step index 1 <= k <= completed")
        grid = solution.grid
        u = solution.snapshot(k)
        prev = solution.snapshot(k - 1)
        t_k, dt = float(solution.times[k]), solution.dt
    else:
        u = solution.solution if isinstance(solution, EllipticSolution) else solution
        grid, prev, t_k, dt = u.grid, None, t, None
    out = 0.0
    for i in range(grid.num_edges):
        x = grid.coordinates(i)
        R = _edge_residual(problem, i, x, u.edge(i), t_k, dt, None if prev is None else prev.edge(i))
        if R.size:
            out = max(out, float(np.max(np.abs(R))))
    if scaled:
        out /= 1.0 + float(np.max(np.abs(u.flat)))
    return out
