"""Solver for nonlinear multi-term fractional differential equations

    D^alpha y = f(t, D^alpha_1 y, ..., D^alpha_m y),  y^(k)(0) = b_k,

with Caputo derivatives, via the equivalent Volterra integral equation and
successive approximation, plus numerical checks of the identities the
reformulation rests on.
"""

from .fractional_ops import (
    FracIntegralOperator,
    Grid,
    SampledFunction,
    apply_integral,
    build_integral_operator,
    caputo_derivative,
    ceil_order,
    integral_node_values,
    weighted_norm,
)
from .picard_solver import (
    ContractionWarning,
    ConvergenceReport,
    NonFiniteIterateError,
    OperatorSet,
    PicardState,
    SolutionTrajectory,
    build_operator_set,
    derivative_taylor_part,
    estimate_contraction,
    initial_state,
    picard_step,
    solve,
    taylor_part,
)
from .problem_model import (
    MultiTermProblem,
    ProblemValidationError,
    RhsDomainError,
    RhsSyntaxError,
    estimate_lipschitz,
    eval_rhs,
    expr_to_string,
    load_problem,
    parse_rhs,
    problem_from_dict,
    validate_problem,
)
from .special_functions import (
    MLParams,
    SeriesConvergenceError,
    gamma,
    log_gamma,
    mittag_leffler,
    power_kernel,
)
from .verification import (
    InitialLimits,
    OriginDecayReport,
    ResidualReport,
    check_equivalence,
    composition_identity,
    initial_limit_checks,
    origin_decay,
)

__version__ = "0.1.0"

__all__ = [
    "FracIntegralOperator",
    "Grid",
    "SampledFunction",
    "apply_integral",
    "build_integral_operator",
    "caputo_derivative",
    "ceil_order",
    "integral_node_values",
    "weighted_norm",
    "ContractionWarning",
    "ConvergenceReport",
    "NonFiniteIterateError",
    "OperatorSet",
    "PicardState",
    "SolutionTrajectory",
    "build_operator_set",
    "derivative_taylor_part",
    "estimate_contraction",
    "initial_state",
    "picard_step",
    "solve",
    "taylor_part",
    "MultiTermProblem",
    "ProblemValidationError",
    "RhsDomainError",
    "RhsSyntaxError",
    "estimate_lipschitz",
    "eval_rhs",
    "expr_to_string",
    "load_problem",
    "parse_rhs",
    "problem_from_dict",
    "validate_problem",
    "MLParams",
    "SeriesConvergenceError",
    "gamma",
    "log_gamma",
    "mittag_leffler",
    "power_kernel",
    "InitialLimits",
    "OriginDecayReport",
    "ResidualReport",
    "check_equivalence",
    "composition_identity",
    "initial_limit_checks",
    "origin_decay",
]
