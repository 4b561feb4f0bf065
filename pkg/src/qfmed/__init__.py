"""Mediation analysis with distribution-valued mediators.

Distributions enter as quantile functions on a shared grid; treatment
effects on the mediator live in Wasserstein geometry, effects of the
mediator on a scalar outcome come from a scalar-on-function regression,
and bootstrap resampling drives the inference.
"""

from ._kernels import BACKEND as kernel_backend
from .distribution import (
    Grid,
    LqdFunction,
    QuantileFunction,
    barycenter,
    empirical_quantile,
    lqd_inverse,
    lqd_transform,
    wasserstein2,
)
from .errors import (
    BootstrapFailureError,
    DegenerateSystemError,
    GridMismatchError,
    InvalidConfigError,
    InvalidInputError,
    NoContrastError,
    NumericError,
    NumericOverflowError,
    QfmedError,
    ReconciliationError,
    SingularDesignError,
)
from .mediation import (
    AnalysisDataset,
    MediationReport,
    PipelineConfig,
    bootstrap_infer,
    bootstrap_pvalue,
    decompose,
    fit_pipeline,
    pointwise_null_test,
)
from .mediator_model import (
    AdditiveMediatorFit,
    AlphaCurve,
    MediatorDataset,
    SmootherConfig,
    estimate_alpha,
    fit_additive,
    predict_quantile,
    residuals,
)
from .outcome_model import BasisSet, OutcomeFit, beta_on_grid, compute_loadings, fit_outcome, make_basis
from .sensitivity import (
    CovSurface,
    RhoProfile,
    SensitivityConfig,
    SensitivityResult,
    estimate_cov_surface,
    sensitivity_sweep,
    solve_beta_rho,
)
from .simulation import SimDesign, StudyResult, generate, run_study

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "QuantileFunction",
    "LqdFunction",
    "empirical_quantile",
    "wasserstein2",
    "barycenter",
    "lqd_transform",
    "lqd_inverse",
    "MediatorDataset",
    "SmootherConfig",
    "AdditiveMediatorFit",
    "AlphaCurve",
    "fit_additive",
    "predict_quantile",
    "estimate_alpha",
    "residuals",
    "BasisSet",
    "OutcomeFit",
    "make_basis",
    "compute_loadings",
    "fit_outcome",
    "beta_on_grid",
    "AnalysisDataset",
    "PipelineConfig",
    "MediationReport",
    "decompose",
    "bootstrap_infer",
    "bootstrap_pvalue",
    "pointwise_null_test",
    "fit_pipeline",
    "CovSurface",
    "RhoProfile",
    "SensitivityConfig",
    "SensitivityResult",
    "estimate_cov_surface",
    "solve_beta_rho",
    "sensitivity_sweep",
    "SimDesign",
    "StudyResult",
    "generate",
    "run_study",
    "kernel_backend",
    "QfmedError",
    "InvalidInputError",
    "InvalidConfigError",
    "GridMismatchError",
    "NoContrastError",
    "ReconciliationError",
    "NumericError",
    "NumericOverflowError",
    "SingularDesignError",
    "DegenerateSystemError",
    "BootstrapFailureError",
]
