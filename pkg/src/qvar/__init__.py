"""Desk-scale numerical laboratory for 1-D quasi-variational inequalities.

Obstacle problems whose constraint depends on the solution itself: inner
projected-SOR / projected-iteration solvers with an enumeration oracle,
outer monotone and contraction fixed-point iterations, regularization and
perturbation studies with log-log rate fits, and a reproducible CLI.
"""

from .errors import (
    ConfigError,
    EllipticityError,
    GridMismatchError,
    InsufficientDataError,
    MeshError,
    MissingRegularizerError,
    NestingError,
    OracleInfeasibleError,
    OracleSizeError,
    OrderingViolationError,
    QvarError,
    SolverError,
    StagnationError,
)
from .grid import (
    GridFunction,
    Mesh,
    dual_norm,
    duality_pairing,
    from_csv,
    lattice_max,
    lattice_min,
    leq,
    make_mesh,
    norm,
    pos_part,
    to_csv,
    trapezoid_integral,
)
from .obstacle import ObstacleMap, check_order_preserving, eval_obstacle, lipschitz_bound
from .operators import (
    LinearEllipticOperator,
    NonMonotoneOperator,
    OperatorConstants,
    PLaplacianOperator,
    RegularizedOperator,
    add_regularization,
    apply,
    assemble_linear,
    estimate_constants,
    solve_unconstrained,
)
from .problems import BUILTIN_NAMES, builtin_problem, gauss_kernel, one_kernel
from .qvi_solver import (
    ContractionCertificate,
    OuterParams,
    QVIProblem,
    QVIReport,
    contraction_certificate,
    operator_structural_constants,
    problem_certificate,
    solve_qvi_fixed_point,
    solve_qvi_maximal,
    solve_qvi_minimal,
    solve_qvi_regularized,
    unconstrained_supersolution,
    uniform_bound_holds,
)
from .studies import (
    RateFit,
    StudyResult,
    fit_rate,
    run_data_robustness,
    run_mesh_refinement,
    run_operator_perturbation,
    run_regularization_path,
    run_stability_bound_check,
)
from .vi_solver import (
    VIParams,
    VISolveReport,
    active_set_candidates,
    kkt_residual,
    solve_vi,
    solve_vi_active_set_oracle,
    solve_vi_projected,
    solve_vi_psor,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "ContractionCertificate",
    "ConfigError",
    "EllipticityError",
    "GridFunction",
    "GridMismatchError",
    "InsufficientDataError",
    "LinearEllipticOperator",
    "Mesh",
    "MeshError",
    "MissingRegularizerError",
    "NestingError",
    "NonMonotoneOperator",
    "ObstacleMap",
    "OperatorConstants",
    "OracleInfeasibleError",
    "OracleSizeError",
    "OrderingViolationError",
    "OuterParams",
    "PLaplacianOperator",
    "QVIProblem",
    "QVIReport",
    "QvarError",
    "RateFit",
    "RegularizedOperator",
    "SolverError",
    "StagnationError",
    "StudyResult",
    "VIParams",
    "VISolveReport",
    "active_set_candidates",
    "add_regularization",
    "apply",
    "assemble_linear",
    "builtin_problem",
    "check_order_preserving",
    "contraction_certificate",
    "dual_norm",
    "duality_pairing",
    "estimate_constants",
    "eval_obstacle",
    "fit_rate",
    "from_csv",
    "gauss_kernel",
    "kkt_residual",
    "lattice_max",
    "lattice_min",
    "leq",
    "lipschitz_bound",
    "make_mesh",
    "norm",
    "one_kernel",
    "operator_structural_constants",
    "pos_part",
    "problem_certificate",
    "run_data_robustness",
    "run_mesh_refinement",
    "run_operator_perturbation",
    "run_regularization_path",
    "run_stability_bound_check",
    "solve_qvi_fixed_point",
    "solve_qvi_maximal",
    "solve_qvi_minimal",
    "solve_qvi_regularized",
    "solve_unconstrained",
    "solve_vi",
    "solve_vi_active_set_oracle",
    "solve_vi_projected",
    "solve_vi_psor",
    "to_csv",
    "trapezoid_integral",
    "unconstrained_supersolution",
    "uniform_bound_holds",
]
