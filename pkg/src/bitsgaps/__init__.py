"""Bayesian entropy-driven sequential design of GP surrogates for
activity coefficients, with VLE and McCabe-Thiele downstream tools."""

from . import design, distillation, entropy, gp, inference, kernels, mixture, thermo
from .design import DesignHistory, DesignSpace, RunConfig, bits_iterate, run, stopping_check
from .distillation import ColumnSpec, EquilibriumCurve, step_stages
from .entropy import entropy_lower_bound, mc_entropy, taylor_entropy
from .errors import (
    BitsError,
    ConfigurationError,
    DomainError,
    InputError,
    NumericalError,
    SpecificationError,
)
from .gp import Dataset, condition, log_marginal_likelihood, predict
from .inference import HMCConfig, Prior, gelman_rubin, hmc_run, sample_hyperparameters
from .kernels import Family, KernelSpec
from .mixture import MixturePosterior, credible_region
from .thermo import BinarySystem, bubble_point, default_system, dew_point, wilson_gamma

__version__ = "0.1.0"
