"""Sparse linear regression with per-group mean-squared-error bounds."""

from .exceptions import (BudgetExceededError, ConstantColumnError, CSCLassoError,
                         DataFormatError, DegenerateBaselineError, InfeasibleError,
                         InvalidGammaError, PreconditionError)
from .model import (ZERO_TOL, FitResult, GroupedDataset, PenaltyKind, PenaltyMatrix,
                    ProblemSpec, SolverConfig, Status, make_spec, validate_problem)
from .baselines import (group_mse, kkt_check_lasso, lasso_lambda_star, solve_lasso_cd,
                        solve_ols)
from .solver import (kkt_residual_csclasso, prop1_stationarity_residual, solve_csclasso,
                     solve_min_l1_feasible)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError", "ConstantColumnError", "CSCLassoError", "DataFormatError",
    "DegenerateBaselineError", "InfeasibleError", "InvalidGammaError", "PreconditionError",
    "ZERO_TOL", "FitResult", "GroupedDataset", "PenaltyKind", "PenaltyMatrix", "ProblemSpec",
    "SolverConfig", "Status", "make_spec", "validate_problem", "group_mse", "kkt_check_lasso",
    "lasso_lambda_star", "solve_lasso_cd", "solve_ols", "kkt_residual_csclasso",
    "prop1_stationarity_residual", "solve_csclasso", "solve_min_l1_feasible",
]
