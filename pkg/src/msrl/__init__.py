"""Multivariate square-root lasso: solvers, tuning, baselines and simulations."""
from .admm import AdmmConfig, FitResult, SolverState, admm_fit, objective
from .apgd import ApgdConfig, RankDeficient, apgd_fit, hybrid_path_fit, solve
from .linalg import Dataset, DataError, center_and_normalize
from .penalties import PenaltyKind, PenaltySpec
from .tuning import cross_validate, default_grid, lambda_max, mc_tune, quantile

__all__ = [
    "AdmmConfig", "ApgdConfig", "Dataset", "DataError", "FitResult", "PenaltyKind",
    "PenaltySpec", "RankDeficient", "SolverState", "admm_fit", "apgd_fit",
    "center_and_normalize", "cross_validate", "default_grid", "hybrid_path_fit",
    "lambda_max", "mc_tune", "objective", "quantile", "solve",
]
