"""Random-parameters multinomial logit with heterogeneity in the means and
variances of random parameters, estimated by simulated maximum likelihood
with Halton draws."""

from .dataset import Dataset, derive_interaction, load_dataset, summarize, write_dataset
from .draws import DrawBlock, DrawConfig, generate_draw_block, halton_value, inv_normal_cdf
from .effects import MarginalEffectsTable, average_discrete_effects, marginal_effects
from .errors import (
    DataError,
    DegenerateDistributionError,
    EstimationError,
    RpmixlError,
    SingularCovarianceError,
    SpecError,
    SpecSyntaxError,
)
from .estimation import (
    EstimationResult,
    OptimizerConfig,
    covariance_and_tstats,
    estimate,
    fit_statistics,
    maximize,
    maximize_loglik,
    share_above_zero,
)
from .likelihood import (
    choice_probabilities,
    loglik_gradient,
    mnl_loglik,
    realized_coefficients,
    simulated_loglik,
)
from .model_spec import ModelSpec, ParameterLayout, load_model_spec, parameter_layout, parse_model_spec
from .report import render_report
from .synth import CovariateGenConfig, recovery_experiment, simulate_dataset

__version__ = "0.1.0"

__all__ = [
    "CovariateGenConfig",
    "DataError",
    "Dataset",
    "DegenerateDistributionError",
    "DrawBlock",
    "DrawConfig",
    "EstimationError",
    "EstimationResult",
    "MarginalEffectsTable",
    "ModelSpec",
    "OptimizerConfig",
    "ParameterLayout",
    "RpmixlError",
    "SingularCovarianceError",
    "SpecError",
    "SpecSyntaxError",
    "average_discrete_effects",
    "choice_probabilities",
    "covariance_and_tstats",
    "derive_interaction",
    "estimate",
    "fit_statistics",
    "generate_draw_block",
    "halton_value",
    "inv_normal_cdf",
    "load_dataset",
    "load_model_spec",
    "loglik_gradient",
    "marginal_effects",
    "maximize",
    "maximize_loglik",
    "mnl_loglik",
    "parameter_layout",
    "parse_model_spec",
    "realized_coefficients",
    "recovery_experiment",
    "render_report",
    "share_above_zero",
    "simulate_dataset",
    "simulated_loglik",
    "summarize",
    "write_dataset",
]
