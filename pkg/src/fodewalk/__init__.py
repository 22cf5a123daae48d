"""Random-walk solver for linear fractional-in-time ODE systems with parameter sensitivities."""

from fodewalk.errors import FodeWalkError, MLDomainError, MLEvaluationError, ProblemError, WalkError
from fodewalk.estimator import EstimateReport, bootstrap_ci, estimate, hotelling_test, t_test, variance_bound
from fodewalk.mittag_leffler import MLValue, ml_eval, mittag_leffler
from fodewalk.model import (
    FodeProblem,
    RobinSpec,
    build_robin_problem,
    gen_random_problem,
    laplacian_problem,
    load_problem,
    validate_problem,
)
from fodewalk.reference import L1Config, expm_oracle, fd_sensitivities, l1_solve
from fodewalk.rng import RngStream

__all__ = [
    "EstimateReport",
    "FodeProblem",
    "FodeWalkError",
    "L1Config",
    "MLDomainError",
    "MLEvaluationError",
    "MLValue",
    "ProblemError",
    "RngStream",
    "RobinSpec",
    "WalkError",
    "bootstrap_ci",
    "build_robin_problem",
    "estimate",
    "expm_oracle",
    "fd_sensitivities",
    "gen_random_problem",
    "hotelling_test",
    "l1_solve",
    "laplacian_problem",
    "load_problem",
    "mittag_leffler",
    "ml_eval",
    "t_test",
    "validate_problem",
    "variance_bound",
]
