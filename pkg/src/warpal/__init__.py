"""Active learning for Gaussian processes with learned monotone warps.

The package trains a GP surrogate on the unit cube, reshapes its inputs
with a monotone warp fitted either by marginal likelihood or by a
self-supervised surrogate-matching loss, and acquires new observations
where the warped model is most uncertain.  Benchmarks, metrics, and a
CLI driver reproduce the full experiment pipeline.
"""

from .acquisition import AcquisitionConfig, Proposal, eig, eig_batch, propose
from .active_loop import (IterationRecord, LoopConfig, NoisyOracle, RunTrace,
                          init_design, noisy_oracle, run_active_loop)
from .benchmarks import (BENCHMARK_NAMES, Benchmark, clean_std,
                         get_benchmark, gp_sample_benchmark)
from .checks import run_checks
from .estimator import WarpedGPRegressor
from .exceptions import (AcquisitionError, DomainError, DuplicatePointError,
                         IllConditionedError, ShapeError,
                         UnsupportedConfigError, ValidationError)
from .gp import (Dataset, FitResult, GPHyperparams, GPState, condition,
                 fit_hyperparams, mll, mll_grad, posterior, posterior_batch,
                 posterior_mean_grad, posterior_mean_grad_batch)
from .metrics import (CurveSet, EvalGrid, area_reduction, as_percent, auc,
                      crps, crps_gaussian, eval_grid_for,
                      lower_bound_shift, mean_derivative_error, mse)
from .warp_training import (ProbeSet, WarpTrainConfig, WarpTrainResult,
                            build_reference, ss_loss, ss_loss_and_grad,
                            train_warp, warped_mll_loss_and_grad)
from .warps import CRQSWarp, IdentityWarp, KumaraswamyWarp, make_warp

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig", "AcquisitionError", "BENCHMARK_NAMES", "Benchmark",
    "CRQSWarp", "CurveSet", "Dataset", "DomainError",
    "DuplicatePointError", "EvalGrid", "FitResult", "GPHyperparams",
    "GPState", "IdentityWarp", "IllConditionedError", "IterationRecord",
    "KumaraswamyWarp", "LoopConfig", "NoisyOracle", "ProbeSet", "Proposal",
    "RunTrace", "ShapeError", "UnsupportedConfigError", "ValidationError",
    "WarpTrainConfig", "WarpTrainResult", "WarpedGPRegressor",
    "area_reduction", "as_percent", "auc", "build_reference", "clean_std",
    "condition", "crps", "crps_gaussian", "eig", "eig_batch",
    "eval_grid_for", "fit_hyperparams", "get_benchmark",
    "gp_sample_benchmark", "init_design", "lower_bound_shift", "make_warp",
    "mean_derivative_error", "mll", "mll_grad", "mse", "noisy_oracle",
    "posterior", "posterior_batch", "posterior_mean_grad",
    "posterior_mean_grad_batch", "propose", "run_active_loop", "run_checks",
    "ss_loss", "ss_loss_and_grad", "train_warp", "warped_mll_loss_and_grad",
]
