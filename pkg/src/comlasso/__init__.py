"""Exact solution paths for lasso problems with group-wise zero-sum constraints."""

from .kkt import lambda_max, verify_kkt
from .losses import BUILTIN_LOSSES, LossSpec, make_builtin_loss
from .model import GroupStructure, Kink, PathState, ProblemSpec, SolutionPath
from .oracle import solve_fixed_lambda
from .path import PathOptions, run_path
from .selection import (SelectionReport, adaptive_reparametrize, bic_along_path,
                        cross_validate, stability_selection)

__all__ = [
    "BUILTIN_LOSSES", "GroupStructure", "Kink", "LossSpec", "PathOptions", "PathState",
    "ProblemSpec", "SelectionReport", "SolutionPath", "adaptive_reparametrize",
    "bic_along_path", "cross_validate", "lambda_max", "make_builtin_loss", "run_path",
    "solve_fixed_lambda", "stability_selection", "verify_kkt",
]
