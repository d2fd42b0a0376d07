"""Problem data: coefficients, growth envelope, problem specs and their checks."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expressions import (
    EvaluationError,
    Expr,
    ExpressionError,
    UnknownIdentifierError,
    parse_expression,
    to_text,
)
from .graph import GridFunction, Junction, JunctionGrid

__all__ = [
    "CoefficientKind",
    "Coefficient",
    "IllegalVariableError",
    "GrowthEnvelope",
    "ProblemSpec",
    "FoldedHamiltonian",
    "parse_coefficient",
    "CompatibilityReport",
    "compatibility_check",
    "SamplingPlan",
    "AssumptionCheck",
    "ValidationReport",
    "validate_assumptions",
    "PASS",
    "FAIL",
    "UNCHECKED",
    "SPOT_CHECKED",
]


class CoefficientKind(str, enum.Enum):
    SIGMA = "sigma"
    HAMILTONIAN = "hamiltonian"
    VERTEX_CONDITION = "vertex_condition"
    INITIAL = "initial"
    OUTER_BOUNDARY = "outer_boundary"
    FORCING = "forcing"
    BOUND = "bound"


# positional call signature of each kind
_SIGNATURES = {
    CoefficientKind.SIGMA: ("x", "p"),
    CoefficientKind.HAMILTONIAN: ("x", "u", "p"),
    CoefficientKind.VERTEX_CONDITION: ("u", "p_vector"),
    CoefficientKind.INITIAL: ("x",),
    CoefficientKind.OUTER_BOUNDARY: ("t",),
    CoefficientKind.FORCING: ("t", "x"),
    CoefficientKind.BOUND: ("u", "p"),
}

_KNOWN_VARIABLE = re.compile(r"^(x|t|u|p|p[1-9][0-9]*)$")


class IllegalVariableError(ExpressionError):
    def __init__(self, name: str, kind: CoefficientKind, allowed):
        self.name = name
        self.kind = kind
        super().__init__(
            f"`{name}` is illegal in a {kind.value} coefficient (allowed: {', '.join(sorted(allowed))})"
        )


def _allowed_variables(kind: CoefficientKind, num_edges: int | None) -> set[str]:
    if kind is CoefficientKind.VERTEX_CONDITION:
        count = num_edges if num_edges is not None else 64
        allowed = {"u"} | {f"p{j}" for j in range(1, count + 1)}
        if num_edges in (None, 1):
            allowed.add("p")
        return allowed
    return set(_SIGNATURES[kind]) - {"p_vector"}


class Coefficient:
    """A problem coefficient: a parsed expression or a named Python callable.

    Coefficients are called positionally with the signature of their kind,
    e.g. ``sigma(x, p)``, ``hamiltonian(x, u, p)``, ``vertex_condition(u, p_vec)``.
    Expression bodies evaluate vectorised and can return partial derivatives
    (see :meth:`partials`); callable bodies fall back to finite differences.
    """

    def __init__(
        self,
        kind: CoefficientKind | str,
        expr: Expr | None = None,
        func: Callable | None = None,
        name: str | None = None,
        num_edges: int | None = None,
    ):
        self.kind = CoefficientKind(kind)
        if (expr is None) == (func is None):
            raise ValueError("a coefficient needs exactly one of `expr` or `func`")
        self.expr = expr
        self.func = func
        self.name = name
        self.num_edges = num_edges
        if expr is not None:
            allowed = _allowed_variables(self.kind, num_edges)
            for var in sorted(expr.variables() - {"pi"}):
                if var not in allowed:
                    raise IllegalVariableError(var, self.kind, allowed)

    @classmethod
    def constant(cls, kind, value: float) -> "Coefficient":
        from .expressions import Num

        return cls(kind, expr=Num(float(value)))

    @property
    def text(self) -> str:
        if self.expr is not None:
            return to_text(self.expr)
        return f"<builtin {self.name or getattr(self.func, '__name__', 'callable')}>"

    @property
    def has_partials(self) -> bool:
        return self.expr is not None

    def __repr__(self):
        return f"Coefficient({self.kind.value}, {self.text!r})"

    # -- evaluation -------------------------------------------------------

    def _env(self, args):
        kind = self.kind
        if kind is CoefficientKind.VERTEX_CONDITION:
            u, pvec = args
            pvec = np.atleast_1d(np.asarray(pvec, dtype=float))
            env = {"u": u}
            for j, pj in enumerate(pvec, start=1):
                env[f"p{j}"] = pj
            if len(pvec) == 1:
                env["p"] = pvec[0]
            return env
        names = _SIGNATURES[kind]
        if len(args) != len(names):
            raise TypeError(f"{kind.value} coefficient takes {names}, got {len(args)} argument(s)")
        return dict(zip(names, args))

    def __call__(self, *args):
        if self.func is not None:
            with np.errstate(all="ignore"):
                value = self.func(*args)
            _check_finite(value, self._env(args), self.text)
            return value
        env = self._env(args)
        with np.errstate(all="ignore"):
            try:
                value = self.expr.evaluate(env)
            except KeyError as exc:  # variable legal but not supplied
                raise EvaluationError(f"no value for variable {exc.args[0]!r}") from None
        _check_finite(value, env, self.text)
        return value

    def partials(self, *args, wrt: Sequence[str]):
        """Return ``(value, [partial wrt each name])`` at the given point(s)."""
        env = self._env(args)
        if self.expr is not None:
            with np.errstate(all="ignore"):
                value, parts = self.expr.evaluate_with_partials(env, tuple(wrt))
            _check_finite(value, env, self.text)
            return value, parts
        value = self(*args)
        names = _SIGNATURES[self.kind]
        parts = []
        for w in wrt:
            idx = names.index(w)
            base = np.asarray(args[idx], dtype=float)
            step = 1e-7 * np.maximum(1.0, np.abs(base))
            shifted = list(args)
            shifted[idx] = base + step
            parts.append((self(*shifted) - value) / step)
        return value, parts


def _check_finite(value, env, text):
    arr = np.asarray(value, dtype=float)
    if np.all(np.isfinite(arr)):
        return
    bad = np.flatnonzero(~np.isfinite(np.atleast_1d(arr)))[0]
    point = {}
    for k, v in env.items():
        v = np.atleast_1d(np.asarray(v, dtype=float))
        point[k] = float(v[bad] if v.size > bad else v[0])
    raise EvaluationError(f"{text!r} is not finite", point)


def parse_coefficient(text: str, kind: CoefficientKind | str, num_edges: int | None = None) -> Coefficient:
    """Parse ``text`` as a coefficient of ``kind``.

    Raises a syntax error with position, :class:`UnknownIdentifierError` for
    names that are neither variables nor functions, and
    :class:`IllegalVariableError` for variables the kind does not take.
    """
    kind = CoefficientKind(kind)
    expr = parse_expression(text)
    for var in expr.variables() - {"pi"}:
        if not _KNOWN_VARIABLE.match(var):
            match = re.search(rf"\b{re.escape(var)}\b", text)
            raise UnknownIdentifierError(var, match.start() if match else None)
    return Coefficient(kind, expr=expr, num_edges=num_edges)


class FoldedHamiltonian:
    """``H(x, u, p) - f(t, x)`` at a frozen time ``t``."""

    def __init__(self, hamiltonian: Coefficient, forcing: Coefficient | None, t: float):
        self.hamiltonian = hamiltonian
        self.forcing = forcing
        self.t = float(t)

    @property
    def has_partials(self) -> bool:
        return self.hamiltonian.has_partials

    def __call__(self, x, u, p):
        value = self.hamiltonian(x, u, p)
        if self.forcing is not None:
            value = value - self.forcing(self.t, x)
        return value

    def partials(self, x, u, p, wrt=("u", "p")):
        value, parts = self.hamiltonian.partials(x, u, p, wrt=wrt)
        if self.forcing is not None:
            value = value - self.forcing(self.t, x)
            if "x" in wrt:
                _, (fx,) = self.forcing.partials(self.t, x, wrt=("x",))
                parts = [d - fx if w == "x" else d for w, d in zip(wrt, parts)]
        return value, parts


@dataclass(frozen=True)
class GrowthEnvelope:
    """Structural constants of the problem.

    ``mu``, ``gamma``, ``epsilon`` and ``p_bound`` are optional bound
    functions (``BOUND`` coefficients in ``u`` and ``p``, with ``u`` standing
    for ``|u|``) used only by the assumption validator and barrier checks.
    """

    m: float = 2.0
    nu_lower: float = 1.0
    nu_upper: float = 1.0
    c_h: float = 1.0
    root_b: float | None = None
    root_B: tuple[float, ...] | None = None
    mu: Coefficient | None = None
    gamma: Coefficient | None = None
    epsilon: Coefficient | None = None
    p_bound: Coefficient | None = None

    def __post_init__(self):
        if not self.m >= 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not self.nu_lower > 0:
            raise ValueError(f"nu_lower must be > 0, got {self.nu_lower}")
        if not self.nu_upper >= self.nu_lower:
            raise ValueError(f"nu_upper ({self.nu_upper}) must be >= nu_lower ({self.nu_lower})")
        if not self.c_h > 0:
            raise ValueError(f"c_h must be > 0, got {self.c_h}")
        if (self.root_b is None) != (self.root_B is None):
            raise ValueError("root_b and root_B must be given together")
        if self.root_B is not None:
            object.__setattr__(self, "root_B", tuple(float(v) for v in self.root_B))
            object.__setattr__(self, "root_b", float(self.root_b))

    @property
    def has_root_pair(self) -> bool:
        return self.root_B is not None


@dataclass(frozen=True)
class ProblemSpec:
    junction: Junction
    sigma: tuple[Coefficient, ...]
    hamiltonian: tuple[Coefficient, ...]
    vertex_condition: Coefficient
    initial: tuple[Coefficient, ...]
    outer_boundary: tuple[Coefficient, ...]
    horizon: float = 1.0
    envelope: GrowthEnvelope = field(default_factory=GrowthEnvelope)
    forcing: tuple[Coefficient, ...] | None = None
    name: str = ""

    def __post_init__(self):
        n = self.junction.num_edges
        slots = [
            ("sigma", CoefficientKind.SIGMA),
            ("hamiltonian", CoefficientKind.HAMILTONIAN),
            ("initial", CoefficientKind.INITIAL),
            ("outer_boundary", CoefficientKind.OUTER_BOUNDARY),
            ("forcing", CoefficientKind.FORCING),
        ]
        for slot, kind in slots:
            value = getattr(self, slot)
            if value is None:
                continue
            value = tuple(value)
            object.__setattr__(self, slot, value)
            if len(value) != n:
                raise ValueError(f"{slot} needs {n} coefficients, got {len(value)}")
            for c in value:
                if c.kind is not kind:
                    raise ValueError(f"{slot} expects {kind.value} coefficients, got {c.kind.value}")
        if self.vertex_condition.kind is not CoefficientKind.VERTEX_CONDITION:
            raise ValueError("vertex_condition has the wrong kind")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.envelope.root_B is not None and len(self.envelope.root_B) != n:
            raise ValueError(f"root_B needs {n} entries, got {len(self.envelope.root_B)}")

    @property
    def num_edges(self) -> int:
        return self.junction.num_edges

    def hamiltonian_at(self, i: int, t: float = 0.0) -> FoldedHamiltonian:
        forcing = None if self.forcing is None else self.forcing[i]
        return FoldedHamiltonian(self.hamiltonian[i], forcing, t)

    def outer_values(self, t: float) -> np.ndarray:
        return np.array([float(phi(float(t))) for phi in self.outer_boundary])

    def F(self, u: float, p) -> float:
        return float(self.vertex_condition(float(u), np.asarray(p, dtype=float)))

    def initial_values(self, grid: JunctionGrid) -> GridFunction:
        """Sample ``g`` on ``grid``; the vertex value is ``g_0(0)``."""
        return GridFunction.from_callable(grid, lambda i, x: self.initial[i](x))

    def with_junction(self, junction: Junction, outer_boundary=None) -> "ProblemSpec":
        from dataclasses import replace

        return replace(
            self,
            junction=junction,
            outer_boundary=self.outer_boundary if outer_boundary is None else tuple(outer_boundary),
        )


# ---------------------------------------------------------------------------
# compatibility of the initial datum
# ---------------------------------------------------------------------------


@dataclass
class CompatibilityReport:
    ok: bool
    F_residual: float
    boundary_residuals: list[float]
    continuity_residual: float
    vertex_value: float
    vertex_flux: list[float]
    tol: float

    def __bool__(self):
        return self.ok

    def summary(self) -> str:
        verdict = "compatible" if self.ok else "INCOMPATIBLE"
        return (
            f"{verdict}: |F(g(0), g'(0))| = {abs(self.F_residual):.3e}, "
            f"max |g_i(a_i) - phi_i(0)| = {max(abs(r) for r in self.boundary_residuals):.3e}, "
            f"vertex mismatch = {self.continuity_residual:.3e} (tol {self.tol:g})"
        )


def compatibility_check(problem: ProblemSpec, tol: float = 1e-6) -> CompatibilityReport:
    """Check ``F(g(0), g'(0)) = 0`` and ``g_i(a_i) = phi_i(0)`` numerically.

    ``g'(0)`` uses the one-sided second-order difference with step ``a_i/1024``.
    """
    lengths = problem.junction.lengths
    flux = []
    g0 = []
    for i, a in enumerate(lengths):
        h = a / 1024.0
        vals = np.array([problem.initial[i](np.float64(k * h)) for k in range(3)], dtype=float)
        g0.append(vals[0])
        flux.append((-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h))
    vertex = float(g0[0])
    F_res = problem.F(vertex, flux)
    boundary = []
    for i, a in enumerate(lengths):
        boundary.append(float(problem.initial[i](np.float64(a))) - float(problem.outer_boundary[i](0.0)))
    continuity = float(max(abs(v - vertex) for v in g0))
    ok = abs(F_res) <= tol and all(abs(r) <= tol for r in boundary) and continuity <= tol
    return CompatibilityReport(ok, F_res, boundary, continuity, vertex, [float(f) for f in flux], tol)


# ---------------------------------------------------------------------------
# sampled validation of the structural assumptions
# ---------------------------------------------------------------------------

PASS = "PASS"
FAIL = "FAIL"
UNCHECKED = "UNCHECKED"
SPOT_CHECKED = "SPOT-CHECKED"


@dataclass(frozen=True)
class SamplingPlan:
    """Box ``[0, a_i] x [-u_bound, u_bound] x [-p_bound, p_bound]`` and sample counts."""

    u_bound: float = 2.0
    p_bound: float = 4.0
    samples: int = 400
    pair_samples: int = 400
    seed: int = 20240601
    t_samples: int = 5


@dataclass
class AssumptionCheck:
    id: str
    status: str
    description: str
    samples: int = 0
    inequality: str = ""
    witness: dict | None = None
    lhs: float | None = None
    rhs: float | None = None
    detail: str = ""

    def __post_init__(self):
        if self.witness is not None:
            self.witness = {k: _plain(v) for k, v in self.witness.items()}
        for attr in ("lhs", "rhs"):
            if getattr(self, attr) is not None:
                setattr(self, attr, float(getattr(self, attr)))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "description": self.description,
            "samples": self.samples,
            "inequality": self.inequality,
            "witness": self.witness,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "detail": self.detail,
        }


def _plain(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(w) for w in v]
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


@dataclass
class ValidationReport:
    checks: list[AssumptionCheck]
    box: dict
    mode: str

    def __getitem__(self, key: str) -> AssumptionCheck:
        for c in self.checks:
            if c.id == key:
                return c
        raise KeyError(key)

    @property
    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def has_fail(self) -> bool:
        return bool(self.failures)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "box": self.box, "checks": [c.to_dict() for c in self.checks]}

    def format(self) -> str:
        lines = [f"assumption validation ({self.mode}); box {self.box}"]
        for c in self.checks:
            line = f"  {c.id:<14} {c.status:<12} {c.description}"
            if c.detail:
                line += f" [{c.detail}]"
            lines.append(line)
            if c.status == FAIL:
                lines.append(f"      violated: {c.inequality}: lhs={c.lhs!r} rhs={c.rhs!r} at {c.witness}")
        return "\n".join(lines)


def _bound(coef: Coefficient, u, p=0.0):
    u = np.abs(np.asarray(u, dtype=float))
    p = np.abs(np.asarray(p, dtype=float))
    return np.asarray(coef(u, p), dtype=float) * np.ones(np.broadcast(u, p).shape)


def _first_violation(mask):
    idx = np.flatnonzero(mask)
    return None if idx.size == 0 else int(idx[0])


class _Sampler:
    def __init__(self, problem: ProblemSpec, plan: SamplingPlan):
        self.problem = problem
        self.plan = plan
        self.rng = np.random.default_rng(plan.seed)

    def edge_points(self, i: int, n: int):
        """Sample ``(x, u, p)`` on edge ``i``; the box corners come first."""
        a = self.problem.junction.lengths[i]
        U, P = self.plan.u_bound, self.plan.p_bound
        corners = np.array(
            [(x, u, p) for x in (0.0, a) for u in (0.0, -U, U) for p in (0.0, -P, P)], dtype=float
        )
        rnd = np.column_stack(
            [self.rng.uniform(0.0, a, n), self.rng.uniform(-U, U, n), self.rng.uniform(-P, P, n)]
        )
        pts = np.vstack([corners, rnd])
        return pts[:, 0], pts[:, 1], pts[:, 2]

    def times(self):
        if self.problem.forcing is None:
            return [0.0]
        return list(np.linspace(0.0, self.problem.horizon, self.plan.t_samples))


def _check_vertex_monotonicity(problem: ProblemSpec, plan: SamplingPlan, rng) -> list[AssumptionCheck]:
    I = problem.num_edges
    U, P = plan.u_bound, plan.p_bound
    n = plan.pair_samples
    F = problem.F
    # deterministic probe first so simple violations get simple witnesses
    base_u = np.concatenate([[0.0], rng.uniform(-U, U, n)])
    base_p = np.vstack([np.zeros(I), rng.uniform(-P, P, (n, I))])
    steps = np.concatenate([[1.0], rng.uniform(0.0, U, n)])
    steps = np.where(np.arange(n + 1) % 2 == 1, 1e-6 * np.maximum(1.0, np.abs(base_u)), steps)
    steps[0] = 1.0
    directions = rng.uniform(0.0, 1.0, (n + 1, I))
    directions[0] = 1.0
    directions[np.arange(n + 1), rng.integers(0, I, n + 1)] += 0.5

    def scale(a, b):
        return 1e-12 * (1.0 + abs(a) + abs(b))

    witness = {"nonincr_u": None, "strict_dec_u": None, "strict_inc_p": None, "nondecr_p": None}
    for k in range(n + 1):
        u, p, du = base_u[k], base_p[k], steps[k]
        f0 = F(u, p)
        f1 = F(u + du, p)
        if witness["nonincr_u"] is None and f1 > f0 + scale(f0, f1):
            witness["nonincr_u"] = ({"u": u, "u'": u + du, "p": p.tolist()}, f1, f0)
        if witness["strict_dec_u"] is None and not f1 < f0:
            witness["strict_dec_u"] = ({"u": u, "u'": u + du, "p": p.tolist()}, f1, f0)
        dp = directions[k] * (du if k % 2 == 1 else rng.uniform(0.0, P))
        if k == 0:
            dp = directions[0]
        f2 = F(u, p + dp)
        if witness["nondecr_p"] is None and f2 < f0 - scale(f0, f2):
            witness["nondecr_p"] = ({"u": u, "p": p.tolist(), "p'": (p + dp).tolist()}, f2, f0)
        if witness["strict_inc_p"] is None and not f2 > f0:
            witness["strict_inc_p"] = ({"u": u, "p": p.tolist(), "p'": (p + dp).tolist()}, f2, f0)
    checks = []
    kirchhoff = witness["nonincr_u"] is None and witness["strict_inc_p"] is None
    decreasing = witness["strict_dec_u"] is None and witness["nondecr_p"] is None
    samples = n + 1
    if kirchhoff or decreasing:
        branch = "Kirchhoff" if kirchhoff else "decreasing"
        checks.append(AssumptionCheck("P(i)(a)", PASS, "F monotone in u", samples,
                                      detail=f"{branch} branch"))
        checks.append(AssumptionCheck("P(i)(b)", PASS, "F monotone in p", samples,
                                      detail=f"{branch} branch"))
    else:
        wu = witness["nonincr_u"] or witness["strict_dec_u"]
        if witness["nonincr_u"] is not None:
            w, lhs, rhs = witness["nonincr_u"]
            checks.append(AssumptionCheck("P(i)(a)", FAIL, "F monotone in u", samples,
                                          "F(u', p) <= F(u, p) for u < u'", w, lhs, rhs,
                                          detail="F increases with u"))
        else:
            checks.append(AssumptionCheck("P(i)(a)", PASS, "F monotone in u", samples,
                                          detail="nonincreasing only"))
        if witness["strict_inc_p"] is not None and witness["nondecr_p"] is not None:
            w, lhs, rhs = witness["nondecr_p"]
            checks.append(AssumptionCheck("P(i)(b)", FAIL, "F monotone in p", samples,
                                          "F(u, p') >= F(u, p) for p <= p'", w, lhs, rhs,
                                          detail="F decreases with p"))
        elif witness["nonincr_u"] is None:
            # nonincreasing in u and nondecreasing in p, yet neither is strict
            w, lhs, rhs = witness["strict_inc_p"]
            checks.append(AssumptionCheck("P(i)(b)", FAIL, "F monotone in p", samples,
                                          "F(u, p') > F(u, p) for p < p'", w, lhs, rhs,
                                          detail="neither branch is strict"))
        else:
            checks.append(AssumptionCheck("P(i)(b)", PASS, "F monotone in p", samples))
        del wu
    env = problem.envelope
    if env.has_root_pair:
        val = F(env.root_b, np.array(env.root_B))
        status = PASS if abs(val) <= 1e-10 else FAIL
        checks.append(AssumptionCheck(
            "P(i)(c)", status, "F(b, B) = 0", 1, "|F(b, B)| <= 1e-10",
            None if status == PASS else {"b": env.root_b, "B": list(env.root_B)}, abs(val), 1e-10))
    else:
        checks.append(AssumptionCheck("P(i)(c)", UNCHECKED, "F(b, B) = 0", detail="no root pair declared"))
    return checks


def validate_assumptions(
    problem: ProblemSpec, plan: SamplingPlan | None = None, mode: str = "parabolic"
) -> ValidationReport:
    """Sample the structural assumptions on a finite box.

    ``mode="parabolic"`` checks the (P) family; ``mode="elliptic"``
    additionally checks strict monotonicity of ``H`` in ``u`` with rate
    ``c_h`` and spot-checks the large-``p`` growth ratios.  Growth
    conditions stated for all ``p`` or as ``p -> infinity`` are reported as
    SPOT-CHECKED at best; checks needing an undeclared bound function are
    UNCHECKED.
    """
    if mode not in ("parabolic", "elliptic"):
        raise ValueError(f"mode must be 'parabolic' or 'elliptic', got {mode!r}")
    plan = plan or SamplingPlan()
    sampler = _Sampler(problem, plan)
    env = problem.envelope
    checks: list[AssumptionCheck] = []
    box = {
        "x": [[0.0, a] for a in problem.junction.lengths],
        "u": [-plan.u_bound, plan.u_bound],
        "p": [-plan.p_bound, plan.p_bound],
        "t": [0.0, problem.horizon] if problem.forcing is not None else [0.0, 0.0],
    }

    try:
        checks.extend(_check_vertex_monotonicity(problem, plan, sampler.rng))
    except EvaluationError as exc:
        checks.append(AssumptionCheck("P(i)(a)", FAIL, "F evaluable", witness=exc.point, detail=str(exc)))

    results: dict[str, AssumptionCheck] = {}

    def record(cid, description, status_ok, inequality, lhs, rhs, witness_pts, count, detail=""):
        """Merge a per-edge/per-time outcome; the first FAIL is kept."""
        prev = results.get(cid)
        if prev is not None and prev.status == FAIL:
            prev.samples += count
            return
        if status_ok:
            if prev is None:
                results[cid] = AssumptionCheck(cid, PASS, description, count, inequality, detail=detail)
            else:
                prev.samples += count
        else:
            samples = count + (prev.samples if prev else 0)
            results[cid] = AssumptionCheck(cid, FAIL, description, samples, inequality,
                                           witness_pts, float(lhs), float(rhs), detail)

    m = env.m
    for i in range(problem.num_edges):
        x, u, p = sampler.edge_points(i, plan.samples)
        count = len(x)
        sigma = problem.sigma[i]
        try:
            s = np.asarray(sigma(x, p), dtype=float) * np.ones_like(x)
        except EvaluationError as exc:
            record("P(ii)", "uniform ellipticity", False, "sigma evaluable", np.nan, np.nan, exc.point, count)
            continue
        w = (1.0 + np.abs(p)) ** (m - 2.0)
        lo_bad = s < env.nu_lower * w * (1 - 1e-12)
        hi_bad = s > env.nu_upper * w * (1 + 1e-12)
        k = _first_violation(lo_bad | hi_bad)
        if k is None:
            record("P(ii)", "uniform ellipticity", True, "", 0, 0, None, count)
        elif lo_bad[k]:
            record("P(ii)", "uniform ellipticity", False, "nu_lower (1+|p|)^(m-2) <= sigma(x, p)",
                   env.nu_lower * w[k], s[k], {"edge": i, "x": x[k], "p": p[k]}, count)
        else:
            record("P(ii)", "uniform ellipticity", False, "sigma(x, p) <= nu_upper (1+|p|)^(m-2)",
                   s[k], env.nu_upper * w[k], {"edge": i, "x": x[k], "p": p[k]}, count)

        for t in sampler.times():
            H = problem.hamiltonian_at(i, t)
            try:
                hv, (h_u, h_p, h_x) = H.partials(x, u, p, wrt=("u", "p", "x"))
                hv = np.asarray(hv, dtype=float) * np.ones_like(x)
                _, (s_p, s_x) = sigma.partials(x, p, wrt=("p", "x"))
            except EvaluationError as exc:
                record("P(iii)", "growth of H", False, "H evaluable", np.nan, np.nan, exc.point, count)
                continue
            h_u, h_p, h_x, s_p, s_x = (np.asarray(d, dtype=float) * np.ones_like(x)
                                       for d in (h_u, h_p, h_x, s_p, s_x))
            wit = lambda k: {"edge": i, "t": t, "x": x[k], "u": u[k], "p": p[k]}  # noqa: E731

            # (iii) |H| <= mu(|u|) (1+|p|)^m
            if env.mu is not None:
                rhs = _bound(env.mu, u) * (1.0 + np.abs(p)) ** m
                k = _first_violation(np.abs(hv) > rhs * (1 + 1e-12) + 1e-14)
                record("P(iii)", "growth of H", k is None, "|H| <= mu(|u|) (1+|p|)^m",
                       0 if k is None else abs(hv[k]), 0 if k is None else rhs[k],
                       None if k is None else wit(k), count)

            # (iv)(a)
            if env.gamma is not None:
                lhs = np.abs(s_p) * (1 + np.abs(p)) ** 2 + np.abs(h_p)
                rhs = _bound(env.gamma, u) * (1 + np.abs(p)) ** (m - 1)
                k = _first_violation(lhs > rhs * (1 + 1e-12) + 1e-14)
                record("P(iv)(a)", "p-derivatives of sigma, H", k is None,
                       "|d_p sigma|(1+|p|)^2 + |d_p H| <= gamma(|u|)(1+|p|)^(m-1)",
                       0 if k is None else lhs[k], 0 if k is None else rhs[k],
                       None if k is None else wit(k), count)

            eps_plus_P = None
            if env.epsilon is not None:
                eps_plus_P = _bound(env.epsilon, u)
                if env.p_bound is not None:
                    eps_plus_P = eps_plus_P + _bound(env.p_bound, u, p)
                lhs = np.abs(s_x) * (1 + np.abs(p)) ** 2 + np.abs(h_x)
                rhs = eps_plus_P * (1 + np.abs(p)) ** (m + 1)
                k = _first_violation(lhs > rhs * (1 + 1e-12) + 1e-14)
                record("P(iv)(b)", "x-derivatives of sigma, H", k is None,
                       "|d_x sigma|(1+|p|)^2 + |d_x H| <= (eps + P)(1+|p|)^(m+1)",
                       0 if k is None else lhs[k], 0 if k is None else rhs[k],
                       None if k is None else wit(k), count)
                rhs_u = eps_plus_P * (1 + np.abs(p)) ** m
                k = _first_violation(h_u > rhs_u * (1 + 1e-12) + 1e-14)
                record("P(iv)(c)-upper", "upper bound on d_u H", k is None,
                       "d_u H <= (eps + P)(1+|p|)^m",
                       0 if k is None else h_u[k], 0 if k is None else rhs_u[k],
                       None if k is None else wit(k), count)

            # (iv)(c) lower bound, by ordered pairs u < v
            du = np.where(np.arange(count) % 2 == 0, sampler.rng.uniform(0, plan.u_bound, count),
                          1e-6 * np.maximum(1.0, np.abs(u)))
            hv2 = np.asarray(H(x, u + du, p), dtype=float) * np.ones_like(x)
            diff = hv2 - hv
            tol = 1e-10 * (1 + np.abs(hv) + np.abs(hv2))
            k = _first_violation(diff < -env.c_h * du - tol)
            record("P(iv)(c)-lower", "d_u H >= -C_H", k is None,
                   "H(x, v, p) - H(x, u, p) >= -C_H (v - u) for u < v",
                   0 if k is None else diff[k], 0 if k is None else -env.c_h * du[k],
                   None if k is None else {**wit(k), "v": u[k] + du[k]}, count)
            if mode == "elliptic":
                k = _first_violation(diff < env.c_h * du - tol)
                record("E(iii)", "H strictly increasing in u", k is None,
                       "H(x, v, p) - H(x, u, p) >= C_H (v - u) for u < v",
                       0 if k is None else diff[k], 0 if k is None else env.c_h * du[k],
                       None if k is None else {**wit(k), "v": u[k] + du[k]}, count)

    growth_ids = ("P(iii)", "P(iv)(a)", "P(iv)(b)", "P(iv)(c)-upper")
    for cid, c in results.items():
        if cid in growth_ids and c.status == PASS:
            c.status = SPOT_CHECKED
            c.detail = "sampled on the finite box only"
    missing = {
        "P(iii)": ("growth of H", env.mu is None, "mu"),
        "P(iv)(a)": ("p-derivatives of sigma, H", env.gamma is None, "gamma"),
        "P(iv)(b)": ("x-derivatives of sigma, H", env.epsilon is None, "epsilon"),
        "P(iv)(c)-upper": ("upper bound on d_u H", env.epsilon is None, "epsilon"),
    }
    order = ["P(ii)", "P(iii)", "P(iv)(a)", "P(iv)(b)", "P(iv)(c)-lower", "P(iv)(c)-upper", "E(iii)"]
    for cid in order:
        if cid in results:
            checks.append(results[cid])
        elif cid in missing and missing[cid][1]:
            checks.append(AssumptionCheck(cid, UNCHECKED, missing[cid][0],
                                          detail=f"no {missing[cid][2]} bound declared"))
    if mode == "elliptic":
        checks.append(_spot_check_large_p(problem, plan, sampler))
    return ValidationReport(checks, box, mode)


def _spot_check_large_p(problem: ProblemSpec, plan: SamplingPlan, sampler: _Sampler) -> AssumptionCheck:
    """Ratios of the large-``p`` growth conditions at the edge of the box."""
    ratios = {"delta sigma / sigma": 0.0, "p d_p sigma / sigma": 0.0, "H / (sigma p^2)": 0.0,
              "delta H / (sigma p^2)": 0.0, "p d_p H / (sigma p^2)": 0.0}
    excluded = 0
    count = 0
    for i in range(problem.num_edges):
        x, u, p = sampler.edge_points(i, plan.samples // 4)
        keep = np.abs(p) >= 1e-3
        excluded += int(np.sum(~keep))
        x, u, p = x[keep], u[keep], p[keep]
        count += len(x)
        P = plan.p_bound
        p = np.sign(p) * P
        s, (s_x, s_p) = problem.sigma[i].partials(x, p, wrt=("x", "p"))
        H = problem.hamiltonian_at(i, 0.0)
        h, (h_u, h_x, h_p) = H.partials(x, u, p, wrt=("u", "x", "p"))
        s = np.asarray(s, dtype=float) * np.ones_like(x)
        sp2 = s * p ** 2
        ratios["delta sigma / sigma"] = max(ratios["delta sigma / sigma"],
                                            float(np.max(np.abs(s_x / p) / s)))
        ratios["p d_p sigma / sigma"] = max(ratios["p d_p sigma / sigma"], float(np.max(np.abs(p * s_p) / s)))
        ratios["H / (sigma p^2)"] = max(ratios["H / (sigma p^2)"], float(np.max(np.abs(h) / sp2)))
        ratios["delta H / (sigma p^2)"] = max(ratios["delta H / (sigma p^2)"],
                                              float(np.max((h_u + h_x / p) / sp2)))
        ratios["p d_p H / (sigma p^2)"] = max(ratios["p d_p H / (sigma p^2)"], float(np.max(p * h_p / sp2)))
    detail = ", ".join(f"{k}={v:.3g}" for k, v in ratios.items())
    return AssumptionCheck("E(iv)", SPOT_CHECKED, "large-p growth of sigma, H", count,
                           detail=f"at |p|={plan.p_bound:g}: {detail}; {excluded} samples with |p|<1e-3 excluded")
