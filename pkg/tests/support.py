"""Problem builders shared by the tests."""

from __future__ import annotations

import numpy as np

from starjunction.graph import Junction, JunctionGrid
from starjunction.problem import GrowthEnvelope, ProblemSpec, parse_coefficient
from starjunction.shooting import EllipticProblem


def coefs(texts, kind, n=None):
    return tuple(parse_coefficient(t, kind, n) for t in texts)


def elliptic(phi, F=None, H="u", sigma="1", lengths=None, nodes=401, c_h=1.0, b=0.0, B=None):
    """Elliptic junction problem with the same sigma and H on every edge."""
    I = len(phi)
    lengths = lengths or [1.0] * I
    F = F or " + ".join(f"p{j}" for j in range(1, I + 1))
    grid = JunctionGrid(Junction(I, tuple(lengths)), nodes)
    return EllipticProblem(
        grid,
        [parse_coefficient(sigma, "sigma")] * I,
        [parse_coefficient(H, "hamiltonian")] * I,
        parse_coefficient(F, "vertex_condition", I),
        list(phi),
        c_h,
        b,
        B if B is not None else [0.0] * I,
    )


def kirchhoff_theta(phi, lengths, c=1.0):
    """Vertex value of -u'' + c u = 0 with the Kirchhoff condition (superposition of cosh/sinh)."""
    r = np.sqrt(c)
    phi = np.asarray(phi, dtype=float)
    a = np.asarray(lengths, dtype=float)
    return float(np.sum(phi / np.sinh(r * a)) / np.sum(np.cosh(r * a) / np.sinh(r * a)))


def kirchhoff_edge(theta, phi_i, a_i, x, c=1.0):
    """u_i(x) = theta cosh(r x) + B_i sinh(r x) with u_i(a_i) = phi_i."""
    r = np.sqrt(c)
    B = (phi_i - theta * np.cosh(r * a_i)) / np.sinh(r * a_i)
    return theta * np.cosh(r * x) + B * np.sinh(r * x)


def heat_problem(initial="cos(pi*x/2)", horizon=0.5, outer="0"):
    """Single edge, sigma = 1, H = 0, homogeneous Neumann vertex condition."""
    return ProblemSpec(
        Junction(1, (1.0,)),
        coefs(["1"], "sigma"),
        coefs(["0"], "hamiltonian"),
        parse_coefficient("p1", "vertex_condition", 1),
        coefs([initial], "initial"),
        coefs([outer], "outer_boundary"),
        horizon=horizon,
        envelope=GrowthEnvelope(c_h=1e-9, root_b=0.0, root_B=(0.0,), mu=parse_coefficient("0", "bound")),
    )


def kirchhoff_family(phi, g, lengths=None, horizon=0.5, H="u", c_h=1.0):
    """Linear Kirchhoff problem -u'' + H with constant outer data phi and initial data g."""
    I = len(phi)
    lengths = lengths or [1.0] * I
    return ProblemSpec(
        Junction(I, tuple(lengths)),
        coefs(["1"] * I, "sigma"),
        coefs([H] * I, "hamiltonian"),
        parse_coefficient(" + ".join(f"p{j}" for j in range(1, I + 1)), "vertex_condition", I),
        coefs(g, "initial"),
        coefs([repr(float(v)) for v in phi], "outer_boundary"),
        horizon=horizon,
        envelope=GrowthEnvelope(c_h=c_h, root_b=0.0, root_B=(0.0,) * I),
    )


def semidiscrete_heat(times, x, dt):
    """Exact solution of the time-discrete Neumann heat problem: (1 + lam dt)^(-k) cos(pi x / 2)."""
    lam = (np.pi / 2) ** 2
    k = np.rint(np.asarray(times) / dt)
    return (1.0 + lam * dt) ** (-k)[:, None] * np.cos(np.pi * np.asarray(x) / 2)[None, :]


ACCEPTANCE_LINES: list[str] = []


def record(criterion, ok, detail):
    """Print and keep one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok
