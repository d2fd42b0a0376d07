"""Rothe scheme on the built-in three-edge Kirchhoff fixture.

Runs the scheme at a few time steps, compares with the manufactured
solution u_i = e^-t (cos x + c_i sin x) and prints the n-uniform
quantities that stay bounded as dt shrinks.
"""

import numpy as np

from starjunction import JunctionGrid, RotheConfig, load_problem, solve_parabolic
from starjunction.analysis import prop44_observations

C = (0.5, -0.2, -0.3)


def main():
    problem = load_problem("builtin:kirchhoff_heat_3edge")
    grid = JunctionGrid(problem.junction, 201)
    print(f"{'n':>5} {'sup-error':>12} {'sup|u|':>8} {'sup|u_x|':>9} {'sup|du/dt|':>11}")
    for n in (8, 16, 32, 64):
        sol = solve_parabolic(problem, RotheConfig(n, grid))
        err = 0.0
        for i, c in enumerate(C):
            x = grid.coordinates(i)
            exact = np.exp(-sol.times)[:, None] * (np.cos(x) + c * np.sin(x))[None, :]
            err = max(err, float(np.max(np.abs(sol.edge_snapshots(i) - exact))))
        obs = prop44_observations(sol)
        print(f"{n:>5} {err:>12.3e} {obs['M1']:>8.4f} {obs['M2']:>9.4f} {obs['M3']:>11.4f}")


if __name__ == "__main__":
    main()
