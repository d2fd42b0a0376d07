"""Vertex value of a linear Kirchhoff junction found by shooting.

Compares the computed vertex value with the cosh/sinh superposition and
shows how the root search narrows the bracket.
"""

import numpy as np

from starjunction import Junction, JunctionGrid, parse_coefficient, solve_elliptic_junction
from starjunction.shooting import EllipticProblem


def main():
    phi = [1.5, -0.5, 0.25]
    grid = JunctionGrid(Junction(3, (1.0, 1.0, 1.0)), 401)
    problem = EllipticProblem(
        grid,
        [parse_coefficient("1", "sigma")] * 3,
        [parse_coefficient("u", "hamiltonian")] * 3,
        parse_coefficient("p1 + p2 + p3", "vertex_condition", 3),
        phi,
        monotonicity=1.0,
        root_b=0.0,
        root_B=[0.0, 0.0, 0.0],
    )
    exact = sum(p / np.sinh(1.0) for p in phi) / (3 * np.cosh(1.0) / np.sinh(1.0))
    for method in ("bisection", "brent"):
        sol = solve_elliptic_junction(problem, method=method)
        print(f"{method:>9}: theta* = {sol.theta_star:.12f}  exact {exact:.12f}  "
              f"shots {sol.shots:>3}  bracket {sol.bracket[0]:.3f}..{sol.bracket[1]:.3f}")


if __name__ == "__main__":
    main()
