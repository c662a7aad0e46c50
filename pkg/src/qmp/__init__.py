"""Quantile martingale posteriors.

Likelihood-free Bayesian quantile estimation: a recursive Gaussian-copula
update fits the quantile function in one pass per data ordering, and the
posterior is the law of that recursion continued on resampled futures,
either exactly or through a one-step Gaussian-process approximation.
Includes a linear quantile regression variant, numerical identity checks
and a CLI for reproducible runs.
"""

from .checks import (
    CheckReport,
    check_density_norm,
    check_kernel_identity,
    check_kernel_ordering,
    check_martingale_kernel,
    convergence_trace,
)
from .copulas import (
    Schedule,
    bivariate_normal_cdf,
    copula_cdf,
    copula_conditional,
    copula_density,
    gp_kernel,
    std_normal_cdf,
    std_normal_quantile,
    update_term,
)
from .errors import (
    DegenerateDataError,
    FactorizationError,
    GridMismatchError,
    SingularDesignError,
)
from .estimators import MartingaleQuantile, MartingaleQuantileRegressor
from .fit import (
    FitConfig,
    FitResult,
    default_learning_rate,
    fit,
    fit_once,
    init_q0,
    tune_bandwidth_c,
)
from .grid import (
    ProperQuantile,
    QuantileGrid,
    UniformGrid,
    evaluate,
    implicit_cdf,
    l2_distance,
    mean_functional,
    quantile_density,
    rearrange,
)
from .regression import (
    CoefficientGrid,
    RegDataset,
    RegFitResult,
    RegPosteriorDraws,
    RegSampleConfig,
    bb_weights,
    conditional_quantile,
    reg_covariance,
    reg_default_learning_rate,
    reg_fit,
    reg_init,
    reg_sample_approx,
    reg_sample_exact,
)
from .sample import (
    PosteriorDraws,
    PosteriorSummary,
    SampleConfig,
    gp_sample,
    sample_approx,
    sample_exact,
    summarize,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CheckReport",
    "CoefficientGrid",
    "DegenerateDataError",
    "FactorizationError",
    "FitConfig",
    "FitResult",
    "GridMismatchError",
    "MartingaleQuantile",
    "MartingaleQuantileRegressor",
    "PosteriorDraws",
    "PosteriorSummary",
    "ProperQuantile",
    "QuantileGrid",
    "RegDataset",
    "RegFitResult",
    "RegPosteriorDraws",
    "RegSampleConfig",
    "SampleConfig",
    "Schedule",
    "SingularDesignError",
    "UniformGrid",
    "bb_weights",
    "bivariate_normal_cdf",
    "check_density_norm",
    "check_kernel_identity",
    "check_kernel_ordering",
    "check_martingale_kernel",
    "conditional_quantile",
    "convergence_trace",
    "copula_cdf",
    "copula_conditional",
    "copula_density",
    "default_learning_rate",
    "evaluate",
    "fit",
    "fit_once",
    "gp_kernel",
    "gp_sample",
    "implicit_cdf",
    "init_q0",
    "l2_distance",
    "mean_functional",
    "quantile_density",
    "rearrange",
    "reg_covariance",
    "reg_default_learning_rate",
    "reg_fit",
    "reg_init",
    "reg_sample_approx",
    "reg_sample_exact",
    "sample_approx",
    "sample_exact",
    "std_normal_cdf",
    "std_normal_quantile",
    "summarize",
    "tune_bandwidth_c",
    "update_term",
]
