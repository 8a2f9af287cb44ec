"""Sparse conditional Gaussian graphical models.

Joint L1-penalized estimation of a coefficient matrix (covariate effects on
the means) and a sparse precision matrix (the conditional-independence
graph), with BIC tuning, baseline estimators, and a simulation benchmark.
"""

from .errors import (
    CggmError,
    ConvergenceError,
    InputError,
    NotPositiveDefiniteError,
    NumericalError,
    ParseError,
    RankError,
    SearchError,
)
from .glasso import GlassoResult, glasso
from .io import read_matrix, write_fit, write_matrix
from .lasso import (
    QuadLassoProblem,
    lasso_regression,
    quad_objective,
    soft_threshold,
    solve_quad_lasso,
)
from .model import (
    CggmFit,
    Dataset,
    PenaltySpec,
    SufficientStats,
    mle_fit,
    neg_log_likelihood,
    penalized_objective,
    residual_scatter,
    sufficient_stats,
)
from .selection import BicRecord, bic, default_grids, grid_search
from .simulate import (
    GraphReport,
    MlassoResult,
    SimConfig,
    SimModel,
    SupportMetrics,
    delta_norms,
    evaluate_estimate,
    gen_dataset,
    gen_gamma,
    gen_precision,
    make_model,
    mcc_score,
    mlasso_graph,
    quadratic_loss,
    run_benchmark,
    support_metrics,
)
from .solver import (
    SolveOptions,
    adaptive_weights,
    fit,
    fit_adaptive,
    init_estimates,
    update_gamma,
)

__version__ = "0.1.0"

__all__ = [
    "CggmError", "ConvergenceError", "InputError", "NotPositiveDefiniteError",
    "NumericalError", "ParseError", "RankError", "SearchError",
    "Dataset", "SufficientStats", "PenaltySpec", "CggmFit",
    "sufficient_stats", "residual_scatter", "neg_log_likelihood",
    "penalized_objective", "mle_fit",
    "QuadLassoProblem", "soft_threshold", "solve_quad_lasso",
    "quad_objective", "lasso_regression",
    "GlassoResult", "glasso",
    "SolveOptions", "init_estimates", "update_gamma", "fit", "fit_adaptive",
    "adaptive_weights",
    "BicRecord", "bic", "default_grids", "grid_search",
    "SimConfig", "SimModel", "GraphReport", "SupportMetrics", "MlassoResult",
    "gen_precision", "gen_gamma", "make_model", "gen_dataset",
    "quadratic_loss", "delta_norms", "mcc_score", "support_metrics",
    "evaluate_estimate", "mlasso_graph", "run_benchmark",
    "read_matrix", "write_matrix", "write_fit",
    "__version__",
]
