"""Problem files, solution export and convergence ladders."""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .expressions import ExpressionError
from .graph import GridFunction, Junction, JunctionGrid, edge_derivative
from .problem import (
    Coefficient,
    CoefficientKind,
    GrowthEnvelope,
    ProblemSpec,
    parse_coefficient,
)
from .rothe import ParabolicSolution, RotheConfig, solve_parabolic
from .shooting import EllipticSolution

__all__ = [
    "SchemaError",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
    "builtin_fixtures",
    "fixture_path",
    "load_reference",
    "export_solution",
    "read_solution_csv",
    "ConvergenceReport",
    "run_convergence",
    "fitted_order",
    "atomic_write_text",
]

CSV_HEADER = "edge,k,t,x,u,du_dx"
BUILTIN_PREFIX = "builtin:"


class SchemaError(ValueError):
    """A problem file that does not match the schema; ``pointer`` is a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def builtin_fixtures() -> list[str]:
    root = resources.files("starjunction") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    name = name[:-5] if name.endswith(".json") else name
    path = Path(str(resources.files("starjunction") / "fixtures" / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no built-in fixture {name!r}; available: {', '.join(builtin_fixtures())}")
    return path


def _resolve(path) -> Path:
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        return fixture_path(path[len(BUILTIN_PREFIX):])
    return Path(path)


def _read_json(path) -> dict:
    path = _resolve(path)
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_problem(path) -> ProblemSpec:
    """Load and cross-validate a JSON problem file (``builtin:<name>`` for shipped fixtures)."""
    return problem_from_dict(_read_json(path), name=_resolve(path).stem)


def _require(obj, key, pointer, types):
    if not isinstance(obj, dict):
        raise SchemaError(pointer, "expected an object")
    if key not in obj:
        raise SchemaError(f"{pointer}/{key}", "missing required key")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        names = types.__name__ if isinstance(types, type) else " or ".join(t.__name__ for t in types)
        raise SchemaError(f"{pointer}/{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _number(obj, key, pointer, optional=False):
    if optional and (not isinstance(obj, dict) or obj.get(key) is None):
        return None
    value = _require(obj, key, pointer, (int, float))
    if not math.isfinite(value):
        raise SchemaError(f"{pointer}/{key}", "must be finite")
    return float(value)


def _coef(text, kind, pointer, num_edges=None) -> Coefficient:
    if not isinstance(text, str):
        raise SchemaError(pointer, f"expected an expression string, got {type(text).__name__}")
    try:
        return parse_coefficient(text, kind, num_edges)
    except ExpressionError as exc:
        raise SchemaError(pointer, str(exc)) from None


def _coef_list(coefs, key, kind, n, optional=False):
    pointer = f"/coefficients/{key}"
    if optional and coefs.get(key) is None:
        return None
    items = _require(coefs, key, "/coefficients", list)
    if len(items) != n:
        raise SchemaError(pointer, f"expected {n} entries (one per edge), got {len(items)}")
    return tuple(_coef(t, kind, f"{pointer}/{i}") for i, t in enumerate(items))


_TOP_KEYS = {"junction", "coefficients", "envelope", "horizon", "name", "description", "reference"}


def problem_from_dict(doc: dict, name: str = "") -> ProblemSpec:
    if not isinstance(doc, dict):
        raise SchemaError("", "the document must be a JSON object")
    for key in doc:
        if key not in _TOP_KEYS:
            raise SchemaError(f"/{key}", "unknown top-level key")
    junction = _require(doc, "junction", "", dict)
    n = _require(junction, "edges", "/junction", int)
    if n < 1:
        raise SchemaError("/junction/edges", "must be >= 1")
    lengths = _require(junction, "lengths", "/junction", list)
    if len(lengths) != n:
        raise SchemaError("/junction/lengths", f"expected {n} lengths, got {len(lengths)}")
    for i, a in enumerate(lengths):
        if not isinstance(a, (int, float)) or isinstance(a, bool) or not math.isfinite(a) or a <= 0:
            raise SchemaError(f"/junction/lengths/{i}", f"edge length must be a positive number, got {a!r}")
    junc = Junction(n, tuple(float(a) for a in lengths))

    coefs = _require(doc, "coefficients", "", dict)
    sigma = _coef_list(coefs, "sigma", CoefficientKind.SIGMA, n)
    ham = _coef_list(coefs, "hamiltonian", CoefficientKind.HAMILTONIAN, n)
    initial = _coef_list(coefs, "initial", CoefficientKind.INITIAL, n)
    outer = _coef_list(coefs, "outer_boundary", CoefficientKind.OUTER_BOUNDARY, n)
    forcing = _coef_list(coefs, "forcing", CoefficientKind.FORCING, n, optional=True)
    vtext = _require(coefs, "vertex_condition", "/coefficients", str)
    vertex = _coef(vtext, CoefficientKind.VERTEX_CONDITION, "/coefficients/vertex_condition", n)

    env = _require(doc, "envelope", "", dict)
    bounds = {}
    for key, attr in (("mu_bound", "mu"), ("gamma_bound", "gamma"), ("epsilon_bound", "epsilon"),
                      ("p_bound", "p_bound")):
        if env.get(key) is not None:
            bounds[attr] = _coef(env[key], CoefficientKind.BOUND, f"/envelope/{key}")
    root_B = env.get("root_B")
    if root_B is not None:
        if not isinstance(root_B, list) or len(root_B) != n:
            raise SchemaError("/envelope/root_B", f"expected a list of {n} numbers")
        for i, v in enumerate(root_B):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise SchemaError(f"/envelope/root_B/{i}", "expected a number")
    try:
        envelope = GrowthEnvelope(
            m=_number(env, "m", "/envelope"),
            nu_lower=_number(env, "nu_lower", "/envelope"),
            nu_upper=_number(env, "nu_upper", "/envelope"),
            c_h=_number(env, "c_h", "/envelope"),
            root_b=_number(env, "root_b", "/envelope", optional=True),
            root_B=None if root_B is None else tuple(float(v) for v in root_B),
            **bounds,
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError("/envelope", str(exc)) from None
    horizon = _number(doc, "horizon", "")
    if horizon <= 0:
        raise SchemaError("/horizon", "must be > 0")
    if "reference" in doc:
        _parse_reference(doc["reference"], n)
    try:
        return ProblemSpec(junc, sigma, ham, vertex, initial, outer, horizon, envelope, forcing,
                           name=str(doc.get("name", name)))
    except ValueError as exc:
        raise SchemaError("", str(exc)) from None


def _parse_reference(ref, n):
    if not isinstance(ref, dict):
        raise SchemaError("/reference", "expected an object")
    exact = _require(ref, "exact", "/reference", list)
    if len(exact) != n:
        raise SchemaError("/reference/exact", f"expected {n} entries, got {len(exact)}")
    return tuple(_coef(t, CoefficientKind.FORCING, f"/reference/exact/{i}") for i, t in enumerate(exact))


def load_reference(path) -> tuple[Coefficient, ...] | None:
    """Closed-form solution ``u_i(t, x)`` declared in a problem file, if any."""
    doc = _read_json(path)
    if "reference" not in doc:
        return None
    n = doc["junction"]["edges"]
    return _parse_reference(doc["reference"], n)


def problem_to_dict(problem: ProblemSpec) -> dict:
    """Inverse of :func:`problem_from_dict` for expression coefficients."""
    env = problem.envelope

    def texts(cs):
        return [c.text for c in cs]

    coefs = {
        "sigma": texts(problem.sigma),
        "hamiltonian": texts(problem.hamiltonian),
        "vertex_condition": problem.vertex_condition.text,
        "initial": texts(problem.initial),
        "outer_boundary": texts(problem.outer_boundary),
    }
    if problem.forcing is not None:
        coefs["forcing"] = texts(problem.forcing)
    envelope = {"m": env.m, "nu_lower": env.nu_lower, "nu_upper": env.nu_upper, "c_h": env.c_h}
    if env.root_B is not None:
        envelope["root_b"] = env.root_b
        envelope["root_B"] = list(env.root_B)
    for attr, key in (("mu", "mu_bound"), ("gamma", "gamma_bound"), ("epsilon", "epsilon_bound"),
                      ("p_bound", "p_bound")):
        if getattr(env, attr) is not None:
            envelope[key] = getattr(env, attr).text
    out = {
        "junction": {"edges": problem.num_edges, "lengths": list(problem.junction.lengths)},
        "coefficients": coefs,
        "envelope": envelope,
        "horizon": problem.horizon,
    }
    if problem.name:
        out["name"] = problem.name
    return out


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _snapshots(sol):
    if isinstance(sol, ParabolicSolution):
        if not sol.complete:
            raise ValueError("cannot export an incomplete parabolic solution")
        return sol.grid, [sol.edge_snapshots(i) for i in range(sol.grid.num_edges)], np.asarray(sol.times)
    if isinstance(sol, EllipticSolution):
        sol = sol.solution
    if isinstance(sol, GridFunction):
        return sol.grid, [sol.edge(i)[None, :] for i in range(sol.grid.num_edges)], np.zeros(1)
    raise TypeError(f"cannot export {type(sol).__name__}")


def _rows(sol):
    grid, edges, times = _snapshots(sol)
    for i, E in enumerate(edges):
        x = grid.coordinates(i)
        h = grid.spacing[i]
        for k in range(E.shape[0]):
            du = edge_derivative(E[k], h)
            for j in range(E.shape[1]):
                yield i, k, times[k], x[j], E[k, j], du[j]


def export_solution(sol, path, format: str = "csv") -> None:
    """Write one row per (edge, snapshot, node), edge-major, then ``k``, then node.

    Columns ``edge,k,t,x,u,du_dx``; floats carry 17 significant digits and
    ``du_dx`` uses central differences inside and one-sided stencils at the ends.
    """
    if format not in ("csv", "jsonl"):
        raise ValueError(f"format must be 'csv' or 'jsonl', got {format!r}")
    lines = []
    if format == "csv":
        lines.append(CSV_HEADER)
        for i, k, t, x, u, du in _rows(sol):
            lines.append(f"{i},{k},{_num(t)},{_num(x)},{_num(u)},{_num(du)}")
    else:
        for i, k, t, x, u, du in _rows(sol):
            lines.append(
                f'{{"edge": {i}, "k": {k}, "t": {_num(t)}, "x": {_num(x)}, "u": {_num(u)}, "du_dx": {_num(du)}}}'
            )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_solution_csv(path) -> dict[str, np.ndarray]:
    """Columns of an exported CSV as arrays (``edge`` and ``k`` as integers)."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    return {name: np.asarray(data[name]) for name in data.dtype.names}


# ---------------------------------------------------------------------------
# convergence ladders
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    kind: str  # "dt" or "h"
    ladder: list[int]
    steps: list[float]  # dt or h per rung
    errors: list[float]
    order: float | None
    residual: float | None
    threshold: float
    verdict: str
    reference: str
    fixed: int
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ladder": self.ladder,
            "steps": self.steps,
            "errors": self.errors,
            "order": self.order,
            "residual": self.residual,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "reference": self.reference,
            "fixed": self.fixed,
            "notes": self.notes,
        }

    def format(self) -> str:
        label = "n" if self.kind == "dt" else "N"
        other = "N" if self.kind == "dt" else "n"
        lines = [f"convergence in {self.kind} ({other} = {self.fixed}), reference: {self.reference}"]
        for r, s, e in zip(self.ladder, self.steps, self.errors):
            lines.append(f"  {label} = {r:>6d}  {self.kind} = {s:.6e}  sup-error = {e:.6e}")
        order = "n/a" if self.order is None else f"{self.order:.4f}"
        lines.append(f"  fitted order {order} (threshold {self.threshold}): {self.verdict}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def fitted_order(steps: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``log(step)`` and its RMS residual."""
    ls, le = np.log(np.asarray(steps, dtype=float)), np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(ls, le, 1)
    resid = le - (slope * ls + intercept)
    return float(slope), float(np.sqrt(np.mean(resid ** 2)))


def _exact_values(reference, times, x, edge, n):
    if callable(reference) and not isinstance(reference, Coefficient):
        return np.asarray(reference(times, x, edge, n), dtype=float)
    coef = reference[edge]
    return np.array([np.asarray(coef(float(t), x), dtype=float) * np.ones_like(x) for t in times])


def run_convergence(
    problem: ProblemSpec,
    kind: str,
    ladder: Sequence[int],
    fixed: int,
    reference="self",
    method: str = "brent",
    zero_tol: float = 1e-9,
) -> ConvergenceReport:
    """Sup-error (all snapshots, all nodes) along a ladder in ``n`` or ``N``.

    ``reference`` is ``"self"`` (a run at twice the finest resolution), a
    sequence of per-edge closed forms ``u_i(t, x)`` (``FORCING``-kind
    coefficients), or a callable ``ref(times, x, edge, n) -> (n+1, N)`` array.
    Thresholds: order >= 0.9 in ``dt``, >= 1.9 in ``h``.  When every error is
    below ``zero_tol`` the order is NOT-APPLICABLE; the default sits at the
    vertex search tolerance, below which errors carry no discretization signal.
    """
    if kind not in ("dt", "h"):
        raise ValueError(f"kind must be 'dt' or 'h', got {kind!r}")
    ladder = [int(r) for r in ladder]
    if len(ladder) < 3:
        raise ValueError("a ladder needs at least three rungs")
    if sorted(ladder) != ladder or len(set(ladder)) != len(ladder):
        raise ValueError("ladder must be strictly increasing")
    threshold = 0.9 if kind == "dt" else 1.9
    started = time.perf_counter()

    def solve(n, N):
        grid = JunctionGrid(problem.junction, N)
        return solve_parabolic(problem, RotheConfig(n, grid, method=method))

    def resolution(r):
        return (r, fixed) if kind == "dt" else (fixed, r)

    ref_sol = None
    if isinstance(reference, str):
        if reference != "self":
            raise ValueError(f"unknown reference {reference!r}")
        finest = ladder[-1]
        ref_res = 2 * finest if kind == "dt" else 2 * (finest - 1) + 1
        ref_sol = solve(*resolution(ref_res))
        descriptor = f"self-reference at {'n' if kind == 'dt' else 'N'} = {ref_res}"
    else:
        descriptor = "closed form"

    errors, steps = [], []
    for r in ladder:
        n, N = resolution(r)
        sol = solve(n, N)
        err = 0.0
        for i in range(problem.num_edges):
            E = sol.edge_snapshots(i)
            x = sol.grid.coordinates(i)
            if ref_sol is None:
                R = _exact_values(reference, sol.times, x, i, n)
            else:
                Rf = ref_sol.edge_snapshots(i)
                tstride = (ref_sol.n // n) if kind == "dt" else 1
                xstride = 1 if kind == "dt" else (ref_sol.grid.nodes_per_edge[i] - 1) // (N - 1)
                R = Rf[::tstride, ::xstride]
            err = max(err, float(np.max(np.abs(E - R))))
        errors.append(err)
        steps.append(problem.horizon / n if kind == "dt" else max(sol.grid.spacing))
    notes = []
    if all(e <= zero_tol for e in errors):
        order, residual, verdict = None, None, "NOT-APPLICABLE"
        notes.append(f"all errors <= {zero_tol:g}; no order can be fitted")
    else:
        positive = [(s, e) for s, e in zip(steps, errors) if e > 0]
        order, residual = fitted_order([s for s, _ in positive], [e for _, e in positive])
        verdict = "PASS" if order >= threshold else "FAIL"
    return ConvergenceReport(kind, ladder, steps, errors, order, residual, threshold, verdict,
                             descriptor, int(fixed), time.perf_counter() - started, notes)
