"""Tail-risk (superquantile / CVaR) training for linear models.

Minimize the average of the worst (1-p) fraction of per-sample losses with
exact subgradient or smoothed gradient oracles and batch first-order solvers.
"""

from .core import (
    Dataset,
    EvaluationError,
    Penalty,
    PerSampleLoss,
    RiskParams,
    batch_losses,
    check_dual_weights,
    jacobian_transpose_apply,
)
from .superquantile import (
    ExactOracleOutput,
    exact_oracle,
    exact_subgradient_weights,
    quantile,
    superquantile,
)
from .smoothing import (
    SmoothedOracleOutput,
    smoothed_oracle,
    smoothed_weights_entropic,
    smoothed_weights_euclidean,
    theta_prime,
)
from .models import LinearLeastSquares, LinearLogistic, SingularSystemError, ols_closed_form
from .solvers import (
    Algorithm,
    SolverConfig,
    SolverResult,
    Termination,
    accelerated_gradient,
    dual_averaging,
    gradient_descent,
    lbfgs,
    run_solver,
    subgradient_method,
    tune_initial_step,
)
from .dataio import (
    QuantileReport,
    SyntheticSpec,
    append_intercept,
    generate_low_rank,
    generate_targets,
    load_csv,
    residual_quantile_report,
    save_csv,
    train_test_split,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "Dataset",
    "EvaluationError",
    "ExactOracleOutput",
    "LinearLeastSquares",
    "LinearLogistic",
    "Penalty",
    "PerSampleLoss",
    "QuantileReport",
    "RiskParams",
    "SingularSystemError",
    "SmoothedOracleOutput",
    "SolverConfig",
    "SolverResult",
    "SyntheticSpec",
    "Termination",
    "accelerated_gradient",
    "append_intercept",
    "batch_losses",
    "check_dual_weights",
    "dual_averaging",
    "exact_oracle",
    "exact_subgradient_weights",
    "generate_low_rank",
    "generate_targets",
    "gradient_descent",
    "jacobian_transpose_apply",
    "lbfgs",
    "load_csv",
    "ols_closed_form",
    "quantile",
    "residual_quantile_report",
    "run_solver",
    "save_csv",
    "smoothed_oracle",
    "smoothed_weights_entropic",
    "smoothed_weights_euclidean",
    "subgradient_method",
    "superquantile",
    "theta_prime",
    "train_test_split",
    "tune_initial_step",
]
