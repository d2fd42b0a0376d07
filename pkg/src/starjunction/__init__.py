"""Quasilinear parabolic problems on star junctions with nonlinear vertex conditions.

Per-edge Dirichlet solves, shooting on the vertex value for the elliptic
junction problem, implicit Rothe time stepping, and numerical checks of the
a-priori estimates on computed solutions.
"""

from .analysis import (
    EstimateEntry,
    EstimateReport,
    HolderReport,
    barrier_params,
    check_comparison,
    check_interpolation,
    holder_report,
    holder_seminorm_t,
    holder_seminorm_x,
    interpolation_bound,
    prop44_observations,
    prop44_uniformity,
    recursion_table,
    residual_norm,
    time_difference_bound,
    verify_barrier,
)
from .edge_bvp import EdgeProblem, EdgeSolution, assemble_residual, solve_dirichlet_edge
from .expressions import parse_expression, to_text
from .graph import GridFunction, Junction, JunctionGrid, build_junction, sup_norm, vertex_gradient
from .io import export_solution, load_problem, run_convergence
from .problem import (
    Coefficient,
    CoefficientKind,
    GrowthEnvelope,
    ProblemSpec,
    SamplingPlan,
    ValidationReport,
    compatibility_check,
    parse_coefficient,
    validate_assumptions,
)
from .rothe import (
    ParabolicSolution,
    RotheConfig,
    interpolant_eval,
    rothe_step,
    solve_parabolic,
    truncation_study,
)
from .shooting import (
    EllipticProblem,
    EllipticSolution,
    SignBracketError,
    shoot,
    solve_elliptic_junction,
    theta_bracket,
)

__version__ = "0.1.0"
