import numpy as np
import pytest
from hypothesis import given, strategies as st

from starjunction.problem import parse_coefficient as pc
from starjunction.shooting import (
    EdgeDivergedError,
    MissingRootPairError,
    SignBracketError,
    shoot,
    solve_elliptic_junction,
    theta_bracket,
)

from support import elliptic, kirchhoff_edge, kirchhoff_theta

C1 = np.cosh(1.0)
S1 = np.sinh(1.0)


def test_bracket_examples():
    assert theta_bracket(elliptic([1.0, -1.0], nodes=11)) == (-1.0, 1.0)
    assert theta_bracket(elliptic([0.0, 0.0], nodes=11)) == (-0.1, 0.1)
    lo, hi = theta_bracket(elliptic([0.0, 0.0], nodes=11, b=1.0, B=[1.0, 1.0]))
    assert hi == pytest.approx(3.1, abs=1e-12) and lo == -hi


def test_bracket_needs_root_pair():
    p = elliptic([0.0], nodes=11)
    p.root_b = None
    p.root_B = None
    with pytest.raises(MissingRootPairError):
        theta_bracket(p)


def test_shoot_examples():
    p = elliptic([C1, C1])
    assert abs(shoot(p, 1.0).F) < 1e-5
    assert shoot(p, 0.0).F == pytest.approx(2 * C1 / S1, rel=1e-5)
    neumann = elliptic([0.0], F="p1")
    assert shoot(neumann, 1.0).F == pytest.approx(-C1 / S1, rel=1e-5)


def test_solve_symmetric_kirchhoff():
    p = elliptic([C1, C1])
    sol = solve_elliptic_junction(p)
    assert abs(sol.theta_star - 1.0) < 1e-6
    x = p.grid.coordinates(0)
    for e in sol.solution.edges():
        assert np.max(np.abs(e - np.cosh(x))) < 1e-6
    assert abs(sol.F_residual) <= sol.F_tolerance
    assert sol.solution.vertex_value == sol.theta_star


def test_antisymmetric_data():
    sol = solve_elliptic_junction(elliptic([0.7, -0.7], nodes=101))
    assert abs(sol.theta_star) < 1e-9


def test_robin_type_vertex_condition():
    sol = solve_elliptic_junction(elliptic([0.0, 0.0], F="-u + p1 + p2 + 1"))
    assert sol.theta_star == pytest.approx(1 / (1 + 2 * C1 / S1), abs=1e-6)


@pytest.mark.parametrize("method", ["bisection", "brent"])
def test_root_methods_agree(method):
    p = elliptic([1.3, -0.4, 0.2], lengths=[1.0, 0.5, 2.0], nodes=201)
    sol = solve_elliptic_junction(p, method=method)
    assert abs(sol.theta_star - kirchhoff_theta([1.3, -0.4, 0.2], [1.0, 0.5, 2.0])) < 1e-5
    assert abs(sol.F_residual) <= sol.F_tolerance


def test_bisection_iteration_bound():
    p = elliptic([0.3, 0.9], nodes=51)
    sol = solve_elliptic_junction(p, F_tol=0.0, theta_tol=1e-10)
    lo, hi = sol.bracket
    assert sol.bisection_iterations <= int(np.ceil(np.log2((hi - lo) / 1e-10)))


def test_sign_bracket_failure_reports_values():
    # F = 1 + u^2 never vanishes
    p = elliptic([0.0], F="1 + u^2 + 0*p1", nodes=21)
    with pytest.raises(SignBracketError) as info:
        solve_elliptic_junction(p)
    err = info.value
    assert "SIGN_BRACKET_FAILED" in str(err) and err.F_lo > 0 and err.F_hi > 0
    assert err.expansions == 8


def test_user_bracket_is_doubled_until_sign_change():
    p = elliptic([C1, C1], nodes=101)
    sol = solve_elliptic_junction(p, bracket=(1.5, 1.6))
    assert sol.bracket_expansions > 0 and abs(sol.theta_star - 1.0) < 1e-4


def test_edge_divergence_is_tagged():
    p = elliptic([0.5, 0.5], H="sqrt(u)", nodes=21)
    from starjunction.expressions import EvaluationError

    with pytest.raises((EdgeDivergedError, EvaluationError)):
        shoot(p, -1.0)


def test_concurrent_edge_solves_match_sequential():
    from concurrent.futures import ThreadPoolExecutor

    p = elliptic([1.0, -0.5, 0.25], nodes=101)
    seq = solve_elliptic_junction(p)
    with ThreadPoolExecutor(3) as pool:
        par = solve_elliptic_junction(p, executor=pool)
    assert par.theta_star == seq.theta_star
    assert par.solution == seq.solution


def test_theta_grid_refinement():
    phi, a = [1.5, -0.3], [1.0, 1.0]
    exact = kirchhoff_theta(phi, a)
    errs = [abs(solve_elliptic_junction(elliptic(phi, nodes=N)).theta_star - exact) for N in (41, 81, 161)]
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=3), st.lists(st.floats(0, 0.5), min_size=3, max_size=3))
def test_elliptic_comparison(phi, bump):
    phi2 = [v + b for v, b in zip(phi, bump)]
    lo = solve_elliptic_junction(elliptic(phi, nodes=41))
    hi = solve_elliptic_junction(elliptic(phi2, nodes=41))
    assert np.all(hi.solution.flat >= lo.solution.flat - 1e-8)
